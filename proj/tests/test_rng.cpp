#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "lodex/rng.hpp"

using lodex::Rng;

TEST_CASE("same seed reproduces the stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
    REQUIRE(same == 0);
}

TEST_CASE("substream depends on every tag") {
    Rng a = Rng::substream(7, {1, 2});
    Rng b = Rng::substream(7, {1, 3});
    Rng c = Rng::substream(7, {2, 1});
    Rng a2 = Rng::substream(7, {1, 2});
    REQUIRE(a.next_u64() != b.next_u64());
    REQUIRE(Rng::substream(7, {1, 2}).next_u64() != c.next_u64());
    REQUIRE(Rng::substream(7, {1, 2}).next_u64() == a2.next_u64());
}

TEST_CASE("uniform01 stays in [0, 1)") {
    Rng r(9);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double x = r.uniform01();
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
    }
    REQUIRE(lo < 0.01);
    REQUIRE(hi > 0.99);
}

TEST_CASE("below covers the full range without bias artifacts") {
    Rng r(5);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) counts[static_cast<size_t>(r.below(7))]++;
    for (int c : counts) REQUIRE(std::abs(c - 10000) < 500);
}

TEST_CASE("normal moments match the standard normal") {
    Rng r(13);
    const int n = 200000;
    double s = 0, s2 = 0, s3 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
        s3 += x * x * x;
    }
    REQUIRE(std::fabs(s / n) < 0.01);
    REQUIRE(std::fabs(s2 / n - 1.0) < 0.02);
    REQUIRE(std::fabs(s3 / n) < 0.05);
}

TEST_CASE("shuffle is a seeded permutation") {
    std::vector<size_t> v(100);
    std::iota(v.begin(), v.end(), 0);
    Rng r(21);
    lodex::shuffle_indices(v, r);
    std::vector<size_t> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < sorted.size(); ++i) REQUIRE(sorted[i] == i);

    std::vector<size_t> w(100);
    std::iota(w.begin(), w.end(), 0);
    Rng r2(21);
    lodex::shuffle_indices(w, r2);
    REQUIRE(v == w);
}
