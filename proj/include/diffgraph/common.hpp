#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace diffgraph {

enum class errc {
    duplicate_id,
    unknown_id,
    incomplete_calibration,
    dimension_mismatch,
    uncalibrated_expert,
    no_ckpt_selected,
    io_failure,
    format_version_mismatch,
    checksum_mismatch,
    zero_vector,
    insufficient_candidates,
    payload_mismatch,
    llm_unavailable,
    no_ckpt_experts,
    filter_emptied_ckpt,
    shape_mismatch,
    slice_mismatch,
    empty_input,
    non_finite_output,
    non_finite_gradient,
    invalid_argument,
};

inline const char* errc_name(errc c) {
    switch (c) {
        case errc::duplicate_id: return "DuplicateId";
        case errc::unknown_id: return "UnknownId";
        case errc::incomplete_calibration: return "IncompleteCalibration";
        case errc::dimension_mismatch: return "DimensionMismatch";
        case errc::uncalibrated_expert: return "UncalibratedExpert";
        case errc::no_ckpt_selected: return "NoCkptSelected";
        case errc::io_failure: return "IoFailure";
        case errc::format_version_mismatch: return "FormatVersionMismatch";
        case errc::checksum_mismatch: return "ChecksumMismatch";
        case errc::zero_vector: return "ZeroVector";
        case errc::insufficient_candidates: return "InsufficientCandidates";
        case errc::payload_mismatch: return "PayloadMismatch";
        case errc::llm_unavailable: return "LlmUnavailable";
        case errc::no_ckpt_experts: return "NoCkptExperts";
        case errc::filter_emptied_ckpt: return "FilterEmptiedCkpt";
        case errc::shape_mismatch: return "ShapeMismatch";
        case errc::slice_mismatch: return "SliceMismatch";
        case errc::empty_input: return "EmptyInput";
        case errc::non_finite_output: return "NonFiniteOutput";
        case errc::non_finite_gradient: return "NonFiniteGradient";
        case errc::invalid_argument: return "InvalidArgument";
    }
    return "UnknownError";
}

class Error : public std::runtime_error {
public:
    Error(errc code, const std::string& msg)
        : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
    errc code() const noexcept { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, errc code, const std::string& msg) {
    if (!cond) fail(code, msg);
}

// FNV-1a, 64-bit. Used for text hashing where the result must be identical
// on every platform and in every process (no seed, no locale).
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace diffgraph
