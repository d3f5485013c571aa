#pragma once

// Seedable, splittable random streams.
//
// A stream is identified by (seed, stream id). The 256-bit xoshiro256**
// state is expanded from both values through SplitMix64, so distinct stream
// ids give statistically independent sequences and the same pair always
// reproduces the same sequence. Gaussian draws use Box-Muller on pairs of
// raw uniforms: filling n normals always consumes exactly 2 * ceil(n / 2)
// raw 64-bit outputs.

#include "pyramid/core.hpp"

#include <cstdint>
#include <span>

namespace pyramid {

class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream = 0);

    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] std::uint64_t stream_id() const { return stream_; }

    std::uint64_t next_u64();
    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    // Uniform on (0, 1].
    double uniform_open_closed() { return 1.0 - uniform(); }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    void fill_normal(std::span<double> out);
    void fill_normal(Vector& v) { fill_normal(std::span<double>(v.data(), static_cast<std::size_t>(v.size()))); }
    void fill_normal(Matrix& m) { fill_normal(std::span<double>(m.data(), static_cast<std::size_t>(m.size()))); }

    // Independent child stream; does not advance this stream.
    [[nodiscard]] RngStream substream(std::uint64_t id) const;

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t s_[4];
};

// i.i.d. standard normal entries.
Tensor gaussian_tensor(const Grid& shape, RngStream& rng);
Batch gaussian_batch(const Grid& shape, Eigen::Index count, RngStream& rng);

}  // namespace pyramid
