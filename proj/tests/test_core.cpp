#include <doctest.h>

#include <cmath>

#include "diffgraph/common.hpp"
#include "diffgraph/linalg.hpp"
#include "diffgraph/rng.hpp"
#include "diffgraph/sha256.hpp"

using namespace diffgraph;

TEST_CASE("fnv1a64 known values") {
    // reference values of the canonical 64-bit FNV-1a
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("sha256 nist vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    // multi-block update path
    Sha256 h;
    std::string million(1000000, 'a');
    h.update(million.data(), million.size());
    auto d = h.digest();
    std::string hex;
    for (auto b : d) {
        static const char* t = "0123456789abcdef";
        hex.push_back(t[b >> 4]);
        hex.push_back(t[b & 0xf]);
    }
    CHECK(hex == "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("rng determinism and distribution sanity") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng r(7);
    double sum = 0.0, sum2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double x = r.normal();
        sum += x;
        sum2 += x * x;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sum2 / n - 1.0) < 0.05);

    // gamma(k) has mean k and variance k
    double gs = 0.0;
    for (int i = 0; i < n; ++i) gs += r.gamma(3.0);
    CHECK(std::abs(gs / n - 3.0) < 0.1);
}

TEST_CASE("digamma reference values") {
    // digamma(1) = -euler_gamma; digamma(0.5) = -gamma - 2 ln 2
    const double euler = 0.5772156649015328606;
    CHECK(digamma(1.0) == doctest::Approx(-euler).epsilon(1e-10));
    CHECK(digamma(0.5) == doctest::Approx(-euler - 2.0 * std::log(2.0)).epsilon(1e-10));
    CHECK(digamma(10.0) == doctest::Approx(2.2517525890667211076).epsilon(1e-10));
    // recurrence psi(x+1) = psi(x) + 1/x
    for (double x : {1.3, 2.7, 5.01}) {
        CHECK(digamma(x + 1.0) == doctest::Approx(digamma(x) + 1.0 / x).epsilon(1e-10));
    }
}

TEST_CASE("softplus and sigmoid") {
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(softplus(100.0) == doctest::Approx(100.0));
    CHECK(sigmoid(0.0) == doctest::Approx(0.5));
    CHECK(sigmoid(-30.0) == doctest::Approx(std::exp(-30.0)).epsilon(1e-6));
}

TEST_CASE("random_orthonormal_rows produces orthonormal rows") {
    Rng r(11);
    Mat p = random_orthonormal_rows(4, 8, r);
    Mat gram = p * p.transpose();
    CHECK((gram - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
}
