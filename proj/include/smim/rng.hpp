#pragma once

#include <cstdint>

#include "smim/common.hpp"
#include "smim/matrix.hpp"

namespace smim {

/// Deterministic random stream backed by SplitMix64 (Steele, Lea & Flood's
/// mix of a Weyl sequence), chosen because the full sequence is defined by
/// portable integer arithmetic: the same seed yields the same draws on every
/// platform. A reference sequence is frozen in the test suite.
///
/// A stream is single-consumer. For concurrent use derive independent child
/// streams with child(); the derivation is pure arithmetic on the original
/// seed, so child streams are reproducible regardless of how much the parent
/// has been consumed.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53-bit resolution.
    double uniform();

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    /// Uniform index in [0, n). Uses next_u64() % n; the modulo bias is
    /// below 2^-50 for any n this artifact draws.
    std::size_t below(std::size_t n);

    /// Standard normal via Box-Muller; the paired draw is cached, so
    /// consecutive calls consume two uniforms every other call.
    double gaussian();
    double gaussian(double mu, double sigma);

    /// Independent child stream i. child_seed = mix64(seed ^ (GOLDEN * (i+1)))
    /// where mix64 is the SplitMix64 finalizer and GOLDEN = 0x9E3779B97F4A7C15.
    RngStream child(std::uint64_t stream_id) const;

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// rows x cols matrix of i.i.d. N(mu, sigma^2) draws in row-major order.
/// sigma must be >= 0; sigma == 0 yields a constant matrix.
Matrix sample_gaussian(RngStream& rng, std::size_t rows, std::size_t cols, double mu,
                       double sigma);

}  // namespace smim
