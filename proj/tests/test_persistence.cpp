#include <doctest.h>

#include "diffgraph/payload.hpp"
#include "diffgraph/persistence.hpp"
#include "diffgraph/rng.hpp"

#include "test_util.hpp"

using namespace diffgraph;

TEST_CASE("matrix container: empty, exact bytes, round trip") {
    dgtest::ScratchDir dir("matrix");

    SUBCASE("0x0 matrix") {
        Mat m(0, 0);
        write_matrix(dir.path() / "empty.bin", m);
        Mat back = read_matrix(dir.path() / "empty.bin");
        CHECK(back.rows() == 0);
        CHECK(back.cols() == 0);
    }

    SUBCASE("1x1 [1.0] body is IEEE-754 f32le 0x0000803F") {
        Mat m(1, 1);
        m(0, 0) = 1.0;
        write_matrix(dir.path() / "one.bin", m);
        std::string raw = read_file_bytes(dir.path() / "one.bin");
        std::string body = raw.substr(raw.find('\n') + 1);
        REQUIRE(body.size() == 4);
        CHECK(static_cast<unsigned char>(body[0]) == 0x00);
        CHECK(static_cast<unsigned char>(body[1]) == 0x00);
        CHECK(static_cast<unsigned char>(body[2]) == 0x80);
        CHECK(static_cast<unsigned char>(body[3]) == 0x3F);
    }

    SUBCASE("random 7x5 round trip") {
        Rng rng(5);
        Mat m = random_matrix(7, 5, rng);
        // values are truncated to f32 on disk; write the truncated values so
        // the round trip is an identity
        m = from_f32(to_f32(m), 7, 5);
        write_matrix(dir.path() / "r.bin", m);
        Mat back = read_matrix(dir.path() / "r.bin");
        CHECK(back == m);
    }
}

TEST_CASE("matrix container detects corruption") {
    dgtest::ScratchDir dir("corrupt");
    Rng rng(6);
    Mat m = random_matrix(4, 3, rng);
    auto path = dir.path() / "m.bin";
    write_matrix(path, m);
    std::string raw = read_file_bytes(path);
    std::size_t header_end = raw.find('\n') + 1;

    SUBCASE("single byte flip in body -> ChecksumMismatch") {
        for (std::size_t off = header_end; off < raw.size(); ++off) {
            std::string bad = raw;
            bad[off] = static_cast<char>(bad[off] ^ 0x01);
            write_file_bytes(path, bad);
            try {
                read_matrix(path);
                FAIL("expected ChecksumMismatch at offset ", off);
            } catch (const Error& e) {
                CHECK(e.code() == errc::checksum_mismatch);
            }
        }
    }

    SUBCASE("truncated body -> DimensionMismatch") {
        std::string bad = raw.substr(0, raw.size() - 4);
        write_file_bytes(path, bad);
        try {
            read_matrix(path);
            FAIL("expected DimensionMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == errc::dimension_mismatch);
        }
    }

    SUBCASE("missing file -> IoFailure") {
        try {
            read_matrix(dir.path() / "nope.bin");
            FAIL("expected IoFailure");
        } catch (const Error& e) {
            CHECK(e.code() == errc::io_failure);
        }
    }
}

TEST_CASE("payload containers round trip both variants") {
    dgtest::ScratchDir dir("payload");
    Rng rng(7);

    ExpertPayload ckpt = CkptPayload{from_f32(to_f32(random_matrix(6, 4, rng)), 6, 4)};
    write_payload(dir.path() / "c.bin", ckpt);
    CHECK(payload_equal(read_payload(dir.path() / "c.bin"), ckpt));

    ExpertPayload peft = PeftPayload{from_f32(to_f32(random_matrix(6, 2, rng)), 6, 2),
                                     from_f32(to_f32(random_matrix(2, 4, rng)), 2, 4)};
    write_payload(dir.path() / "p.bin", peft);
    ExpertPayload back = read_payload(dir.path() / "p.bin");
    CHECK(payload_equal(back, peft));
    CHECK(payload_kind(back) == ExpertKind::peft);
}

TEST_CASE("header blob checksum covers the body") {
    dgtest::ScratchDir dir("blob");
    ordered_json h;
    h["kind"] = "test";
    write_header_blob(dir.path() / "b.bin", h, std::string("\x01\x02\x03\x04", 4));
    HeaderBlob blob = read_header_blob(dir.path() / "b.bin");
    CHECK(blob.body.size() == 4);
    CHECK(blob.header["kind"] == "test");
}
