#pragma once

// Shared on-disk containers. Every binary artifact is a one-line JSON header
// (UTF-8, '\n'-terminated) followed by a raw little-endian f32 body whose
// sha256 is recorded in the header. Readers verify length and checksum.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffgraph/common.hpp"
#include "diffgraph/linalg.hpp"
#include "diffgraph/sha256.hpp"

namespace diffgraph {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), errc::io_failure, "cannot open for write: " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    require(f.good(), errc::io_failure, "short write: " + path.string());
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), errc::io_failure, "cannot open for read: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    require(!f.bad(), errc::io_failure, "read failed: " + path.string());
    return bytes;
}

inline std::string floats_to_le_bytes(const std::vector<float>& v) {
    std::string out(v.size() * 4, '\0');
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data(), v.data(), out.size());
    } else {
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::uint32_t u;
            std::memcpy(&u, &v[i], 4);
            out[4 * i + 0] = static_cast<char>(u);
            out[4 * i + 1] = static_cast<char>(u >> 8);
            out[4 * i + 2] = static_cast<char>(u >> 16);
            out[4 * i + 3] = static_cast<char>(u >> 24);
        }
    }
    return out;
}

inline std::vector<float> le_bytes_to_floats(const std::string& bytes) {
    require(bytes.size() % 4 == 0, errc::dimension_mismatch, "f32 body not a multiple of 4 bytes");
    std::vector<float> out(bytes.size() / 4);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data(), bytes.data(), bytes.size());
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
            std::uint32_t u = (std::uint32_t(std::uint8_t(bytes[4 * i])) |
                               (std::uint32_t(std::uint8_t(bytes[4 * i + 1])) << 8) |
                               (std::uint32_t(std::uint8_t(bytes[4 * i + 2])) << 16) |
                               (std::uint32_t(std::uint8_t(bytes[4 * i + 3])) << 24));
            std::memcpy(&out[i], &u, 4);
        }
    }
    return out;
}

// header gains a "sha256" field computed over the body.
inline void write_header_blob(const std::filesystem::path& path, ordered_json header,
                              const std::string& body) {
    header["sha256"] = sha256_hex(body);
    std::string out = header.dump();
    out.push_back('\n');
    out += body;
    write_file_bytes(path, out);
}

struct HeaderBlob {
    ordered_json header;
    std::string body;
};

inline HeaderBlob read_header_blob(const std::filesystem::path& path) {
    std::string raw = read_file_bytes(path);
    auto nl = raw.find('\n');
    require(nl != std::string::npos, errc::io_failure, "missing header line: " + path.string());
    HeaderBlob blob;
    try {
        blob.header = ordered_json::parse(raw.substr(0, nl));
    } catch (const json::exception& e) {
        fail(errc::io_failure, "bad header json in " + path.string() + ": " + e.what());
    }
    blob.body = raw.substr(nl + 1);
    require(blob.header.contains("sha256"), errc::io_failure, "header lacks sha256");
    require(blob.header["sha256"].get<std::string>() == sha256_hex(blob.body),
            errc::checksum_mismatch, "body checksum mismatch: " + path.string());
    return blob;
}

// Single-matrix container: {"rows":r,"cols":c,"dtype":"f32le","sha256":...}\n<body>
inline void write_matrix(const std::filesystem::path& path, const Mat& m) {
    require(all_finite(m), errc::non_finite_output, "refusing to write non-finite matrix");
    ordered_json header;
    header["rows"] = m.rows();
    header["cols"] = m.cols();
    header["dtype"] = "f32le";
    write_header_blob(path, std::move(header), floats_to_le_bytes(to_f32(m)));
}

inline Mat read_matrix(const std::filesystem::path& path) {
    // length check precedes the checksum so truncation reports DimensionMismatch
    std::string raw = read_file_bytes(path);
    auto nl = raw.find('\n');
    require(nl != std::string::npos, errc::io_failure, "missing header line: " + path.string());
    ordered_json header;
    try {
        header = ordered_json::parse(raw.substr(0, nl));
    } catch (const json::exception& e) {
        fail(errc::io_failure, "bad header json in " + path.string() + ": " + e.what());
    }
    require(header.value("dtype", "") == "f32le", errc::io_failure, "unsupported dtype");
    const int rows = header.at("rows").get<int>();
    const int cols = header.at("cols").get<int>();
    require(rows >= 0 && cols >= 0, errc::dimension_mismatch, "negative shape");
    std::string body = raw.substr(nl + 1);
    require(body.size() == static_cast<std::size_t>(rows) * cols * 4, errc::dimension_mismatch,
            "matrix body length does not match shape: " + path.string());
    require(header.at("sha256").get<std::string>() == sha256_hex(body), errc::checksum_mismatch,
            "matrix checksum mismatch: " + path.string());
    return from_f32(le_bytes_to_floats(body), rows, cols);
}

} // namespace diffgraph
