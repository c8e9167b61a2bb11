#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "mmcaps/rng.hpp"

using namespace mmcaps;

TEST_CASE("same key replays the same sequence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different keys and splits give distinct streams") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next_u64() == b.next_u64()) ++same;
    CHECK(same == 0);

    Rng root(7);
    Rng s1 = root.split(1), s2 = root.split(2);
    CHECK(s1.next_u64() != s2.next_u64());
}

TEST_CASE("split does not depend on the parent's position") {
    Rng a(99);
    Rng early = a.split(5);
    a.next_u64();
    a.next_u64();
    Rng late = a.split(5);
    for (int i = 0; i < 16; ++i) CHECK(early.next_u64() == late.next_u64());
}

TEST_CASE("state round-trips through key and counter") {
    Rng a(1234);
    for (int i = 0; i < 17; ++i) a.next_normal();
    Rng b(a.key(), a.counter());
    for (int i = 0; i < 32; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform draws live in the half-open unit interval") {
    Rng r(3);
    double sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        double u = r.next_uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("bounded uniform stays in range") {
    Rng r(4);
    for (int i = 0; i < 1000; ++i) {
        double u = r.next_uniform(-2.5, 3.5);
        REQUIRE(u >= -2.5);
        REQUIRE(u < 3.5);
    }
}

TEST_CASE("normal draws have roughly standard moments") {
    Rng r(5);
    const int n = 200000;
    double sum = 0, sumsq = 0;
    for (int i = 0; i < n; ++i) {
        double x = r.next_normal();
        sum += x;
        sumsq += x * x;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("u64 outputs do not repeat over a short horizon") {
    Rng r(6);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 10000; ++i) seen.insert(r.next_u64());
    CHECK(seen.size() == 10000);
}
