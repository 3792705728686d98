#include <cmath>

#include "doctest.h"
#include "smim/rng.hpp"

using namespace smim;

// Reference sequences computed with an independent SplitMix64 implementation
// (arbitrary-precision arithmetic), frozen here so future ports can verify
// seed compatibility.
TEST_CASE("splitmix64 reference sequence") {
    {
        RngStream rng(0);
        CHECK(rng.next_u64() == 0xe220a8397b1dcdafULL);
        CHECK(rng.next_u64() == 0x6e789e6aa1b965f4ULL);
        CHECK(rng.next_u64() == 0x06c45d188009454fULL);
        CHECK(rng.next_u64() == 0xf88bb8a8724c81ecULL);
    }
    {
        RngStream rng(1);
        CHECK(rng.next_u64() == 0x910a2dec89025cc1ULL);
        CHECK(rng.next_u64() == 0xbeeb8da1658eec67ULL);
    }
    {
        RngStream rng(42);
        CHECK(rng.next_u64() == 0xbdd732262feb6e95ULL);
        CHECK(rng.next_u64() == 0x28efe333b266f103ULL);
    }
}

TEST_CASE("uniform doubles are exact 53-bit conversions") {
    RngStream rng(42);
    CHECK(rng.uniform() == 0.7415648787718233);
    CHECK(rng.uniform() == 0.1599103928769201);
    CHECK(rng.uniform() == 0.27860113025513866);
}

TEST_CASE("identical seeds give bit-identical gaussian matrices") {
    RngStream a(42), b(42);
    const Matrix ma = sample_gaussian(a, 8, 5, 0.0, 1.0);
    const Matrix mb = sample_gaussian(b, 8, 5, 0.0, 1.0);
    CHECK(ma.flat() == mb.flat());
}

TEST_CASE("sigma zero degenerates to the mean") {
    RngStream rng(5);
    const Matrix m = sample_gaussian(rng, 3, 3, 2.5, 0.0);
    for (double v : m.flat()) CHECK(v == 2.5);
}

TEST_CASE("negative sigma rejected") {
    RngStream rng(5);
    CHECK_THROWS_AS(sample_gaussian(rng, 1, 1, 0.0, -1.0), DomainError);
    CHECK_THROWS_AS(rng.gaussian(0.0, -0.1), DomainError);
}

TEST_CASE("sample mean of 10^4 standard normals is near zero") {
    RngStream rng(12345);
    const Matrix m = sample_gaussian(rng, 100, 100, 0.0, 1.0);
    double mean = 0.0;
    for (double v : m.flat()) mean += v;
    mean /= static_cast<double>(m.size());
    CHECK(std::abs(mean) < 0.05);  // CLT: sd of the mean is 0.01
}

TEST_CASE("child streams are independent of parent consumption") {
    RngStream a(77);
    RngStream child_before = a.child(3);
    a.next_u64();
    a.next_u64();
    RngStream child_after = a.child(3);
    CHECK(child_before.next_u64() == child_after.next_u64());

    RngStream other = a.child(4);
    RngStream same_base = a.child(3);
    same_base.next_u64();
    CHECK(other.next_u64() != same_base.next_u64());
}

TEST_CASE("below covers the range deterministically") {
    RngStream rng(9);
    for (int i = 0; i < 1000; ++i) {
        CHECK(rng.below(7) < 7);
    }
    CHECK_THROWS_AS(rng.below(0), DomainError);
}
