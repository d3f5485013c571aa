#pragma once

#include "pyramid/core.hpp"

#include <vector>

namespace pyramid {

struct Moments {
    Tensor mean;
    Matrix cov;  // unbiased, over flattened coordinates
    Eigen::Index count = 0;
};

// Unbiased mean and covariance. Requires at least two samples of equal shape.
Moments empirical_moments(const std::vector<Tensor>& samples);
Moments empirical_moments(const Batch& samples);

// Streaming accumulator with a fixed reduction order (batches are folded in
// the order they are added), so identical inputs give bit-identical output.
class MomentAccumulator {
public:
    explicit MomentAccumulator(const Grid& g);

    void add(const Batch& b);
    [[nodiscard]] Eigen::Index count() const { return n_; }
    [[nodiscard]] Moments result() const;

private:
    Grid grid_;
    Eigen::Index n_ = 0;
    Vector mean_;
    Matrix m2_;
};

// Summary distances between an estimated and a reference Gaussian.
struct MomentError {
    double mean_l2 = 0.0;
    double cov_frobenius = 0.0;
    double cov_relative_frobenius = 0.0;
    double max_mean_z = 0.0;  // max_j |mean_j - mu_j| / sqrt(Sigma_jj / n)
};

MomentError moment_error(const Moments& estimate, const Vector& mu, const Matrix& sigma);

}  // namespace pyramid
