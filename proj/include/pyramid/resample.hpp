#pragma once

// Stage-transition operators built from a single-level orthogonal filter bank.
//
// Along each halved axis of length N the analysis matrix W = [U; V] maps a
// line to N/2 low-pass and N/2 high-pass coefficients with periodic
// boundaries:
//
//     low_k  = sum_j lo[j] * x[(2k + j) mod N]
//     high_k = sum_j hi[j] * x[(2k + j) mod N]
//
// The multi-axis transform is the separable product, applied in T, H, W
// order; channels are never resampled. omega is the product over halved axes
// of sum(lo), which makes down() preserve constants:
//
//     down(x)          = (1/omega) * U x
//     up(y)            = omega * U^T y                       (zero high bands)
//     up_with_noise(y) = r * omega * W^T [y; nu * z],   nu = sigma,
//                        r = 1 / (1 + (omega - 1) * sigma)
//
// For Haar, down() is average pooling and up() is nearest-neighbour
// replication.

#include "pyramid/core.hpp"
#include "pyramid/rng.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace pyramid {

struct AxisSet {
    bool t = false;
    bool h = false;
    bool w = false;

    [[nodiscard]] bool contains(Axis a) const {
        return a == Axis::T ? t : (a == Axis::H ? h : w);
    }
    [[nodiscard]] int count() const { return int(t) + int(h) + int(w); }
    [[nodiscard]] bool empty() const { return count() == 0; }
    [[nodiscard]] std::string str() const;

    // Parses any combination of the letters T, H, W (case-insensitive).
    static AxisSet parse(std::string_view letters);
    static AxisSet all() { return {true, true, true}; }

    friend bool operator==(const AxisSet&, const AxisSet&) = default;
};

class OrthoResampler {
public:
    static OrthoResampler haar(AxisSet axes);
    // Rejects unequal or odd filter lengths, non-positive low-pass gain and
    // filter banks whose periodized analysis matrix is not orthogonal.
    static OrthoResampler from_filters(std::vector<double> lo, std::vector<double> hi, AxisSet axes);
    // Daubechies filter with two vanishing moments (length 4) and its
    // quadrature-mirror high pass.
    static OrthoResampler daubechies2(AxisSet axes);

    [[nodiscard]] const std::vector<double>& lo() const { return lo_; }
    [[nodiscard]] const std::vector<double>& hi() const { return hi_; }
    [[nodiscard]] AxisSet axes() const { return axes_; }
    [[nodiscard]] double omega() const { return omega_; }
    [[nodiscard]] double axis_gain() const { return gain_; }
    [[nodiscard]] int filter_length() const { return static_cast<int>(lo_.size()); }

    [[nodiscard]] Grid coarse(const Grid& fine) const;
    [[nodiscard]] Grid fine(const Grid& coarse) const;
    // True when every halved axis is even and at least the filter length.
    [[nodiscard]] bool can_halve(const Grid& g) const;
    // Throws std::invalid_argument naming the offending axis.
    void require_halvable(const Grid& g) const;
    // Number of successive halvings the grid supports.
    [[nodiscard]] int max_levels(const Grid& g) const;

private:
    OrthoResampler(std::vector<double> lo, std::vector<double> hi, AxisSet axes);

    std::vector<double> lo_;
    std::vector<double> hi_;
    AxisSet axes_;
    double gain_ = 1.0;
    double omega_ = 1.0;
};

// Largest |M^T M - I| entry of the periodized one-axis analysis matrix of
// length n built from (lo, hi).
double filter_bank_orthogonality_error(const std::vector<double>& lo, const std::vector<double>& hi, int n);

Tensor down(const OrthoResampler& r, const Tensor& x);
Tensor up(const OrthoResampler& r, const Tensor& x);
Batch down(const OrthoResampler& r, const Batch& x);
Batch up(const OrthoResampler& r, const Batch& x);
// up(down(x)): the low-pass projection on the fine grid.
Tensor project(const OrthoResampler& r, const Tensor& x);
Batch project(const OrthoResampler& r, const Batch& x);
// i successive downsamplings.
Tensor down_times(const OrthoResampler& r, const Tensor& x, int times);

// Fault injection for verification; the defaults are the correct operator.
struct UpsampleOptions {
    double noise_scale = 1.0;  // nu = noise_scale * sigma
    bool rescale = true;       // multiply by r
};

struct NoisyUpsample {
    Tensor value;
    double tau = 0.0;  // noise level of the result on the fine grid
};

struct NoisyUpsampleBatch {
    Batch value;
    double tau = 0.0;
};

NoisyUpsample up_with_noise(const OrthoResampler& r, const Tensor& x, double sigma, RngStream& rng,
                            const UpsampleOptions& opt = {});
NoisyUpsampleBatch up_with_noise(const OrthoResampler& r, const Batch& x, double sigma, RngStream& rng,
                                 const UpsampleOptions& opt = {});

// Multiplicative factor r * omega applied by up_with_noise.
double noisy_upsample_gain(double omega, double sigma);

// Full single-level decomposition in the banded layout: along each halved
// axis, indices [0, N/2) hold low-pass and [N/2, N) high-pass coefficients.
Tensor analyze(const OrthoResampler& r, const Tensor& x);
Tensor synthesize(const OrthoResampler& r, const Tensor& bands);
// Flat indices (fine grid, banded layout) of the all-low-pass block, in the
// row-major order of the coarse grid.
std::vector<std::size_t> low_band_indices(const OrthoResampler& r, const Grid& fine);

// Dense matrices for verification; flattened size capped at 4096.
inline constexpr std::size_t kExplicitMatrixCap = 4096;
Matrix analysis_matrix(const OrthoResampler& r, const Grid& fine);
Matrix down_matrix(const OrthoResampler& r, const Grid& fine);
Matrix up_matrix(const OrthoResampler& r, const Grid& coarse);

}  // namespace pyramid
