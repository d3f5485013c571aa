#include "pyramid/moments.hpp"

#include <cmath>

namespace pyramid {

Moments empirical_moments(const std::vector<Tensor>& samples) {
    if (samples.size() < 2) throw std::invalid_argument("empirical_moments needs at least two samples");
    const Grid g = samples.front().grid();
    Batch b(g, static_cast<Eigen::Index>(samples.size()));
    for (std::size_t j = 0; j < samples.size(); ++j) {
        if (!(samples[j].grid() == g))
            throw std::invalid_argument("empirical_moments: shape mismatch at sample " + std::to_string(j));
        b.values.col(static_cast<Eigen::Index>(j)) = samples[j].values();
    }
    return empirical_moments(b);
}

Moments empirical_moments(const Batch& samples) {
    if (samples.count() < 2) throw std::invalid_argument("empirical_moments needs at least two samples");
    const Vector mean = samples.values.rowwise().mean();
    const Matrix centered = samples.values.colwise() - mean;
    Moments m;
    m.mean = Tensor(samples.grid, mean);
    m.cov = (centered * centered.transpose()) / static_cast<double>(samples.count() - 1);
    m.count = samples.count();
    return m;
}

MomentAccumulator::MomentAccumulator(const Grid& g) : grid_(g) {
    require_valid(g);
    const auto d = static_cast<Eigen::Index>(g.size());
    mean_ = Vector::Zero(d);
    m2_ = Matrix::Zero(d, d);
}

void MomentAccumulator::add(const Batch& b) {
    if (!(b.grid == grid_)) throw std::invalid_argument("MomentAccumulator: shape mismatch");
    const Eigen::Index k = b.count();
    if (k == 0) return;
    // Chan et al. pairwise merge of (count, mean, M2).
    const Vector bmean = b.values.rowwise().mean();
    const Matrix centered = b.values.colwise() - bmean;
    const Matrix bm2 = centered * centered.transpose();
    const double na = static_cast<double>(n_);
    const double nb = static_cast<double>(k);
    const double n = na + nb;
    const Vector delta = bmean - mean_;
    m2_ += bm2 + delta * delta.transpose() * (na * nb / n);
    mean_ += delta * (nb / n);
    n_ += k;
}

Moments MomentAccumulator::result() const {
    if (n_ < 2) throw std::invalid_argument("MomentAccumulator: need at least two samples");
    Moments m;
    m.mean = Tensor(grid_, mean_);
    m.cov = m2_ / static_cast<double>(n_ - 1);
    m.count = n_;
    return m;
}

MomentError moment_error(const Moments& estimate, const Vector& mu, const Matrix& sigma) {
    const Vector& mean = estimate.mean.values();
    if (mean.size() != mu.size() || sigma.rows() != mu.size() || estimate.cov.rows() != mu.size())
        throw std::invalid_argument("moment_error: dimension mismatch");
    MomentError e;
    e.mean_l2 = (mean - mu).norm();
    e.cov_frobenius = (estimate.cov - sigma).norm();
    const double ref = sigma.norm();
    e.cov_relative_frobenius = ref > 0.0 ? e.cov_frobenius / ref : e.cov_frobenius;
    const double n = static_cast<double>(estimate.count);
    for (Eigen::Index j = 0; j < mu.size(); ++j) {
        const double var = sigma(j, j);
        if (var <= 0.0) continue;
        e.max_mean_z = std::max(e.max_mean_z, std::abs(mean[j] - mu[j]) / std::sqrt(var / n));
    }
    return e;
}

}  // namespace pyramid
