#include "pyramid/rng.hpp"

#include <cmath>
#include <numbers>

namespace pyramid {
namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t mix(std::uint64_t x) {
    std::uint64_t s = x;
    return splitmix64(s);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
    std::uint64_t state = seed ^ rotl(mix(stream ^ 0xD1B54A32D192ED03ULL), 17);
    for (auto& word : s_) word = splitmix64(state);
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::below: n must be positive");
    // Rejection keeps the result unbiased.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

void RngStream::fill_normal(std::span<double> out) {
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; i += 2) {
        const double u1 = uniform_open_closed();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phase = 2.0 * std::numbers::pi * u2;
        out[i] = r * std::cos(phase);
        if (i + 1 < n) out[i + 1] = r * std::sin(phase);
    }
}

RngStream RngStream::substream(std::uint64_t id) const {
    return RngStream(seed_, mix(stream_ * 0x9E3779B97F4A7C15ULL + mix(id + 1)));
}

Tensor gaussian_tensor(const Grid& shape, RngStream& rng) {
    Tensor t(shape);
    rng.fill_normal(t.values());
    return t;
}

Batch gaussian_batch(const Grid& shape, Eigen::Index count, RngStream& rng) {
    Batch b(shape, count);
    for (Eigen::Index j = 0; j < count; ++j) {
        auto col = b.values.col(j);
        rng.fill_normal(std::span<double>(col.data(), static_cast<std::size_t>(col.size())));
    }
    return b;
}

}  // namespace pyramid
