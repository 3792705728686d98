#include "smim/rng.hpp"

#include <cmath>
#include <numbers>

namespace smim {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 output finalizer.
std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RngStream::next_u64() {
    state_ += kGolden;
    return mix64(state_);
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::size_t RngStream::below(std::size_t n) {
    if (n == 0) throw DomainError("RngStream::below: n must be positive");
    return static_cast<std::size_t>(next_u64() % n);
}

double RngStream::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

double RngStream::gaussian(double mu, double sigma) {
    if (sigma < 0.0) throw DomainError("gaussian: sigma must be >= 0");
    return mu + sigma * gaussian();
}

RngStream RngStream::child(std::uint64_t stream_id) const {
    return RngStream(mix64(seed_ ^ (kGolden * (stream_id + 1))));
}

Matrix sample_gaussian(RngStream& rng, std::size_t rows, std::size_t cols, double mu,
                       double sigma) {
    if (sigma < 0.0) throw DomainError("sample_gaussian: sigma must be >= 0");
    Matrix out(rows, cols);
    for (double& v : out.flat()) v = mu + sigma * rng.gaussian();
    return out;
}

}  // namespace smim
