#pragma once

// Checks of the upsample law (exact, via explicit matrices, and by Monte
// Carlo), spectra of sample batches, and the noise level at which a source
// becomes spectrally flat.

#include "pyramid/core.hpp"
#include "pyramid/oracle.hpp"
#include "pyramid/resample.hpp"
#include "pyramid/rng.hpp"
#include "pyramid/schedule.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace pyramid {

inline constexpr double kExactLawTolerance = 1e-9;
inline constexpr double kMcZThreshold = 5.0;
inline constexpr Eigen::Index kMcLowPowerCount = 1000;
inline constexpr std::size_t kExactLawCap = 512;

// Law of R_up_N(y_c) for y_c = (1 - sigma_c) down(x0) + sigma_c eps on the
// coarse grid of stage `from`, compared with the claimed law of y_n on stage
// from - 1: mean (1 - sigma_n) up(down(x0)), covariance sigma_n^2 I.
struct UpsampleLawReport {
    std::string resampler;
    Grid fine;
    int from = 0;
    double sigma_c = 0.0;
    double sigma_n = 0.0;
    double mean_deviation = 0.0;  // max abs
    double cov_deviation = 0.0;   // max abs
    double operator_deviation = 0.0;  // up_with_noise without noise vs the explicit low-band map
    bool pass = false;

    [[nodiscard]] nlohmann::json to_json() const;
};

// Explicit-matrix version. `fine` is the grid of stage from - 1 and x0 a
// clean signal on it; the fine size is capped at 512.
UpsampleLawReport check_upsample_law_exact(const OrthoResampler& r, const StageSchedule& schedule, int from,
                                           const Tensor& x0, const UpsampleOptions& opt = {});

struct UpsampleMcReport {
    std::string resampler;
    Grid fine;
    int from = 0;
    Eigen::Index samples = 0;
    double max_mean_z = 0.0;
    double max_diag_z = 0.0;
    double max_offdiag_z = 0.0;
    bool low_power = false;  // samples < 1000: reported, never a hard failure
    bool pass = false;

    [[nodiscard]] nlohmann::json to_json() const;
};

// Draws n independent y_c and pushes them through up_with_noise. z-scores use
// the claimed mean for centering and the empirical variance of each
// coordinate (or coordinate product) for the standard error.
UpsampleMcReport check_upsample_law_mc(const OrthoResampler& r, const StageSchedule& schedule, int from,
                                       const Tensor& x0, Eigen::Index n, RngStream& rng,
                                       const UpsampleOptions& opt = {});

std::string resampler_label(const OrthoResampler& r);

// Radially averaged periodogram. Frequencies are in cycles per sample on each
// axis; bin k collects |f| with round(|f| max(T, H, W)) = k. Power is
// |DFT|^2 / N averaged over samples and channels, so white noise of unit
// variance gives 1 in every bin.
struct RadialSpectrum {
    std::vector<double> frequency;  // k / max(T, H, W)
    std::vector<double> power;
    std::vector<int> counts;        // DFT coefficients per bin
};

RadialSpectrum power_spectrum(const Batch& samples);
// Same binning applied to a per-coefficient spectrum on the unshifted FFT
// index grid (the layout of smooth_spectrum / stationary_spectrum).
RadialSpectrum radial_average(const Grid& g, const Vector& coefficient_power);

// Spectrum of x_sigma = (1 - sigma) x0 + sigma eps for a stationary source
// with coefficient spectrum S: (1 - sigma)^2 S + sigma^2.
Vector noised_spectrum(const Vector& source_spectrum, double sigma);
// (max - min) / min over the radial bins.
double spectral_flatness_excess(const RadialSpectrum& s);

struct BoundaryRecommendation {
    double sigma = 1.0;
    double excess = 0.0;   // at the recommended sigma
    bool found = false;    // false: no grid point met delta, sigma is the largest tried
    std::vector<double> grid;
    std::vector<double> excess_curve;

    [[nodiscard]] nlohmann::json to_json() const;
};

// Smallest sigma on a uniform grid of `points` values in [0, 1] at which the
// radially averaged spectrum of the noised stage-`stage` source is flat to
// within a relative excess delta. The source must be stationary.
BoundaryRecommendation recommend_noisier_bound(const GaussianSource& source, const OrthoResampler& r, int stage,
                                               double delta, int points = 1001);

// ((1 - sigma) / sigma)^2 |x|^2 / E|noise|^2, optionally after one
// downsampling, where the noise variance per coordinate drops by omega^2.
double snr(const Tensor& x0, double sigma, const OrthoResampler& r, bool downsampled);

}  // namespace pyramid
