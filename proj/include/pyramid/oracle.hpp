#pragma once

// Gaussian data sources and their exact stage-wise velocity fields.
//
// With x_0 ~ N(mu, Sigma) every quantity of the forward process is linear in
// (x_0, eps). On stage i, with z = x_0^(i) = D_i x_0 and P = up o down on the
// stage grid,
//
//   x_sigma = M z + sigma eps,  M = (1 - rho)(1 - sigma_c) I + rho (1 - sigma_n) P
//   target  = K z + eps,        K = ((1 - sigma_n) P - (1 - sigma_c) I) / (sigma_n - sigma_c)
//
// so E[target | x_sigma] = A x + b by joint-Gaussian conditioning, and the
// conditional covariance trace is the Bayes floor of the stage loss.

#include "pyramid/core.hpp"
#include "pyramid/resample.hpp"
#include "pyramid/rng.hpp"
#include "pyramid/schedule.hpp"
#include "pyramid/velocity.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

namespace pyramid {

inline constexpr double kConditioningRidge = 1e-10;

class GaussianSource {
public:
    GaussianSource(const Grid& g, Vector mean, Matrix cov, double length_scale = 0.0);

    [[nodiscard]] const Grid& grid() const { return grid_; }
    [[nodiscard]] const Vector& mean() const { return mean_; }
    [[nodiscard]] const Matrix& cov() const { return cov_; }
    [[nodiscard]] double length_scale() const { return length_scale_; }
    [[nodiscard]] Eigen::Index dim() const { return mean_.size(); }

    // mean + L z with L the symmetric square root of cov.
    [[nodiscard]] Batch sample(Eigen::Index count, RngStream& rng) const;
    // Law of T x on grid g.
    [[nodiscard]] GaussianSource transformed(const Matrix& T, const Vector& shift, const Grid& g) const;
    [[nodiscard]] GaussianSource downsampled(const OrthoResampler& r, int times) const;

private:
    Grid grid_;
    Vector mean_;
    Matrix cov_;
    Matrix factor_;
    double length_scale_;
};

// Stationary periodic field with power spectrum proportional to
// exp(-(length_scale * |f|)^2), f in cycles per sample on each of T, H, W,
// normalized so the mean spectrum (and every variance) is 1. Channels are
// independent. length_scale = 0 gives white noise.
GaussianSource make_smooth_gaussian(const Grid& g, double length_scale, double mean = 0.0);
// The prescribed spectrum on the unshifted FFT index grid, flattened
// row-major over (t, h, w); identical for every channel.
Vector smooth_spectrum(const Grid& g, double length_scale);
// Spectrum of a periodic stationary covariance (first row, per channel 0),
// same indexing as smooth_spectrum.
Vector stationary_spectrum(const Grid& g, const Matrix& cov);

struct StageLaw {
    int stage = 0;
    double eta = 0.0;
    double sigma = 0.0;
    double rho = 0.0;
    Matrix M;
    Matrix K;
    Vector mu;     // stage-i clean mean
    Matrix Sigma;  // stage-i clean covariance
};

// Exact MSE of an affine predictor against the stage target.
double affine_loss(const StageLaw& law, const AffineMap& f);
// E|target|^2, the loss of the zero predictor.
double target_second_moment(const StageLaw& law);

class PyramidOracle : public VelocityModel {
public:
    PyramidOracle(GaussianSource source, StageSchedule schedule, OrthoResampler r);

    [[nodiscard]] const StageSchedule& schedule() const { return schedule_; }
    [[nodiscard]] const GaussianSource& stage_source(int stage) const;
    [[nodiscard]] const Grid& stage_grid(int stage) const { return stage_source(stage).grid(); }

    // eta must lie in the stage's natural interval (eta = eta_c is allowed).
    [[nodiscard]] StageLaw law(int stage, double eta) const;
    [[nodiscard]] AffineMap affine(int stage, double eta) const;
    [[nodiscard]] double bayes_mse(int stage, double eta) const;

    [[nodiscard]] Batch predict(const Batch& x, double eta, int stage) const override;
    using VelocityModel::predict;

private:
    [[nodiscard]] const AffineMap& cached(int stage, double eta) const;

    StageSchedule schedule_;
    OrthoResampler resampler_;
    std::vector<GaussianSource> sources_;
    std::vector<Matrix> projections_;  // empty when not needed
    mutable std::mutex mutex_;
    mutable std::map<std::pair<int, double>, AffineMap> cache_;
};

// Per stage, the classical (single-stage) flow-matching oracle of the
// stage-i downsampled source, queried at its own level. This plays the
// conventional teacher that has been adapted to every stage resolution.
class ConventionalOracle : public VelocityModel {
public:
    ConventionalOracle(const GaussianSource& source, const OrthoResampler& r, int stages);

    [[nodiscard]] const PyramidOracle& stage_oracle(int stage) const;
    [[nodiscard]] Batch predict(const Batch& x, double sigma, int stage) const override;
    using VelocityModel::predict;

private:
    std::vector<std::unique_ptr<PyramidOracle>> per_stage_;
};

Tensor oracle_velocity(const GaussianSource& source, const StageSchedule& schedule, const OrthoResampler& r, int stage,
                       const Tensor& x, double eta);
double oracle_bayes_mse(const GaussianSource& source, const StageSchedule& schedule, const OrthoResampler& r,
                        int stage, double eta);

}  // namespace pyramid
