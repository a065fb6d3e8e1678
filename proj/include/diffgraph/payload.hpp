#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "diffgraph/linalg.hpp"
#include "diffgraph/persistence.hpp"

namespace diffgraph {

enum class ExpertKind { ckpt, peft };

inline const char* kind_name(ExpertKind k) { return k == ExpertKind::ckpt ? "ckpt" : "peft"; }

inline ExpertKind kind_from_name(const std::string& s) {
    if (s == "ckpt") return ExpertKind::ckpt;
    if (s == "peft") return ExpertKind::peft;
    fail(errc::invalid_argument, "unknown expert kind: " + s);
}

// Full parameter matrix of a checkpoint expert.
struct CkptPayload {
    Mat weight; // d_out x d_task
};

// Low-rank delta: delta = up * down.
struct PeftPayload {
    Mat up;   // d_out x r
    Mat down; // r x d_task

    Mat materialize() const { return up * down; }
};

using ExpertPayload = std::variant<CkptPayload, PeftPayload>;

inline ExpertKind payload_kind(const ExpertPayload& p) {
    return std::holds_alternative<CkptPayload>(p) ? ExpertKind::ckpt : ExpertKind::peft;
}

// Payloads persist as f32; coercing values to f32 precision up front keeps
// save/load a bit-exact identity.
inline ExpertPayload quantize_payload_f32(const ExpertPayload& p) {
    if (payload_kind(p) == ExpertKind::ckpt) {
        const Mat& w = std::get<CkptPayload>(p).weight;
        return CkptPayload{from_f32(to_f32(w), static_cast<int>(w.rows()),
                                    static_cast<int>(w.cols()))};
    }
    const auto& q = std::get<PeftPayload>(p);
    return PeftPayload{
        from_f32(to_f32(q.up), static_cast<int>(q.up.rows()), static_cast<int>(q.up.cols())),
        from_f32(to_f32(q.down), static_cast<int>(q.down.rows()),
                 static_cast<int>(q.down.cols()))};
}

inline bool payload_equal(const ExpertPayload& a, const ExpertPayload& b) {
    if (payload_kind(a) != payload_kind(b)) return false;
    if (payload_kind(a) == ExpertKind::ckpt)
        return std::get<CkptPayload>(a).weight == std::get<CkptPayload>(b).weight;
    const auto& pa = std::get<PeftPayload>(a);
    const auto& pb = std::get<PeftPayload>(b);
    return pa.up == pb.up && pa.down == pb.down;
}

// Payload container: {"kind":...,"d_out":...,"d_task":...,["r":...],"sha256":...}
// followed by raw f32: ckpt => weight; peft => up then down.
inline void write_payload(const std::filesystem::path& path, const ExpertPayload& payload) {
    ordered_json header;
    std::string body;
    if (payload_kind(payload) == ExpertKind::ckpt) {
        const Mat& w = std::get<CkptPayload>(payload).weight;
        header["kind"] = "ckpt";
        header["d_out"] = w.rows();
        header["d_task"] = w.cols();
        body = floats_to_le_bytes(to_f32(w));
    } else {
        const auto& p = std::get<PeftPayload>(payload);
        require(p.up.cols() == p.down.rows(), errc::shape_mismatch, "peft factor rank mismatch");
        header["kind"] = "peft";
        header["d_out"] = p.up.rows();
        header["d_task"] = p.down.cols();
        header["r"] = p.up.cols();
        body = floats_to_le_bytes(to_f32(p.up));
        body += floats_to_le_bytes(to_f32(p.down));
    }
    write_header_blob(path, std::move(header), body);
}

inline ExpertPayload read_payload(const std::filesystem::path& path) {
    HeaderBlob blob = read_header_blob(path);
    const auto& h = blob.header;
    const int d_out = h.at("d_out").get<int>();
    const int d_task = h.at("d_task").get<int>();
    std::vector<float> floats = le_bytes_to_floats(blob.body);
    if (h.at("kind").get<std::string>() == "ckpt") {
        require(floats.size() == static_cast<std::size_t>(d_out) * d_task, errc::dimension_mismatch,
                "ckpt payload body size mismatch");
        return CkptPayload{from_f32(floats, d_out, d_task)};
    }
    const int r = h.at("r").get<int>();
    require(r >= 1, errc::invalid_argument, "peft rank must be >= 1");
    const std::size_t up_n = static_cast<std::size_t>(d_out) * r;
    const std::size_t down_n = static_cast<std::size_t>(r) * d_task;
    require(floats.size() == up_n + down_n, errc::dimension_mismatch,
            "peft payload body size mismatch");
    std::vector<float> up(floats.begin(), floats.begin() + static_cast<std::ptrdiff_t>(up_n));
    std::vector<float> down(floats.begin() + static_cast<std::ptrdiff_t>(up_n), floats.end());
    return PeftPayload{from_f32(up, d_out, r), from_f32(down, r, d_task)};
}

} // namespace diffgraph
