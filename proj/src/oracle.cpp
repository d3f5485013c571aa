#include "pyramid/oracle.hpp"

#include <fftw3.h>

#include <cmath>
#include <numbers>
#include <sstream>

namespace pyramid {
namespace {

constexpr std::size_t kSourceCap = 4096;

Matrix symmetric_sqrt(const Matrix& cov) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("covariance eigendecomposition failed");
    const Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Per-axis spectrum exp(-(l f)^2) normalized to unit mean.
Vector axis_spectrum(int n, double length_scale) {
    Vector s(n);
    for (int k = 0; k < n; ++k) {
        const double f = static_cast<double>(k <= n / 2 ? k : k - n) / n;
        s[k] = std::exp(-(length_scale * f) * (length_scale * f));
    }
    return s / s.mean();
}

Matrix axis_circulant(int n, double length_scale) {
    const Vector s = axis_spectrum(n, length_scale);
    Vector c(n);
    for (int d = 0; d < n; ++d) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) acc += s[k] * std::cos(2.0 * std::numbers::pi * k * d / n);
        c[d] = acc / n;
    }
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = c[((j - i) % n + n) % n];
    return m;
}

}  // namespace

GaussianSource::GaussianSource(const Grid& g, Vector mean, Matrix cov, double length_scale)
    : grid_(g), mean_(std::move(mean)), cov_(std::move(cov)), length_scale_(length_scale) {
    require_valid(g);
    if (g.size() > kSourceCap)
        throw std::invalid_argument("Gaussian source size cap exceeded: " + std::to_string(g.size()) + " > " +
                                    std::to_string(kSourceCap));
    const auto n = static_cast<Eigen::Index>(g.size());
    if (mean_.size() != n || cov_.rows() != n || cov_.cols() != n)
        throw std::invalid_argument("source mean/covariance do not match grid " + g.str());
    if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, cov_.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("source covariance is not symmetric");
    cov_ = 0.5 * (cov_ + cov_.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-9 * std::max(1.0, es.eigenvalues().maxCoeff()))
        throw std::invalid_argument("source covariance is not positive semidefinite");
    factor_ = symmetric_sqrt(cov_);
}

Batch GaussianSource::sample(Eigen::Index count, RngStream& rng) const {
    Batch z = gaussian_batch(grid_, count, rng);
    z.values = (factor_ * z.values).colwise() + mean_;
    return z;
}

GaussianSource GaussianSource::transformed(const Matrix& T, const Vector& shift, const Grid& g) const {
    return GaussianSource(g, T * mean_ + shift, T * cov_ * T.transpose(), length_scale_);
}

GaussianSource GaussianSource::downsampled(const OrthoResampler& r, int times) const {
    GaussianSource cur = *this;
    for (int i = 0; i < times; ++i) {
        const Matrix D = down_matrix(r, cur.grid());
        const Grid c = r.coarse(cur.grid());
        cur = cur.transformed(D, Vector::Zero(static_cast<Eigen::Index>(c.size())), c);
    }
    return cur;
}

GaussianSource make_smooth_gaussian(const Grid& g, double length_scale, double mean) {
    require_valid(g);
    if (!(length_scale >= 0.0)) throw std::invalid_argument("length scale must be nonnegative");
    if (g.size() > kSourceCap) throw std::invalid_argument("Gaussian source size cap exceeded");
    const Matrix ct = axis_circulant(g.frames, length_scale);
    const Matrix ch = axis_circulant(g.height, length_scale);
    const Matrix cw = axis_circulant(g.width, length_scale);
    const auto n = static_cast<Eigen::Index>(g.size());
    Matrix cov = Matrix::Zero(n, n);
    for (int t = 0; t < g.frames; ++t)
        for (int h = 0; h < g.height; ++h)
            for (int w = 0; w < g.width; ++w)
                for (int t2 = 0; t2 < g.frames; ++t2)
                    for (int h2 = 0; h2 < g.height; ++h2)
                        for (int w2 = 0; w2 < g.width; ++w2) {
                            const double v = ct(t, t2) * ch(h, h2) * cw(w, w2);
                            for (int c = 0; c < g.channels; ++c)
                                cov(static_cast<Eigen::Index>(g.index(t, h, w, c)),
                                    static_cast<Eigen::Index>(g.index(t2, h2, w2, c))) = v;
                        }
    return GaussianSource(g, Vector::Constant(n, mean), std::move(cov), length_scale);
}

Vector smooth_spectrum(const Grid& g, double length_scale) {
    const Vector st = axis_spectrum(g.frames, length_scale);
    const Vector sh = axis_spectrum(g.height, length_scale);
    const Vector sw = axis_spectrum(g.width, length_scale);
    Vector s(static_cast<Eigen::Index>(g.frames) * g.height * g.width);
    Eigen::Index i = 0;
    for (int t = 0; t < g.frames; ++t)
        for (int h = 0; h < g.height; ++h)
            for (int w = 0; w < g.width; ++w) s[i++] = st[t] * sh[h] * sw[w];
    return s;
}

Vector stationary_spectrum(const Grid& g, const Matrix& cov) {
    const int n = g.frames * g.height * g.width;
    if (cov.rows() != static_cast<Eigen::Index>(g.size())) throw std::invalid_argument("covariance/grid mismatch");
    fftw_complex* buf = fftw_alloc_complex(static_cast<std::size_t>(n));
    fftw_plan plan = fftw_plan_dft_3d(g.frames, g.height, g.width, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    int i = 0;
    for (int t = 0; t < g.frames; ++t)
        for (int h = 0; h < g.height; ++h)
            for (int w = 0; w < g.width; ++w, ++i) {
                buf[i][0] = cov(0, static_cast<Eigen::Index>(g.index(t, h, w, 0)));
                buf[i][1] = 0.0;
            }
    fftw_execute(plan);
    Vector s(n);
    for (int k = 0; k < n; ++k) s[k] = buf[k][0];
    fftw_destroy_plan(plan);
    fftw_free(buf);
    return s;
}

double affine_loss(const StageLaw& law, const AffineMap& f) {
    const auto n = law.M.rows();
    const Matrix E = f.A * law.M - law.K;
    const Vector m = E * law.mu + f.b;
    const Matrix noise = law.sigma * f.A - Matrix::Identity(n, n);
    return (E * law.Sigma * E.transpose()).trace() + noise.squaredNorm() + m.squaredNorm();
}

double target_second_moment(const StageLaw& law) {
    const auto n = law.M.rows();
    return (law.K * law.Sigma * law.K.transpose()).trace() + static_cast<double>(n) + (law.K * law.mu).squaredNorm();
}

PyramidOracle::PyramidOracle(GaussianSource source, StageSchedule schedule, OrthoResampler r)
    : schedule_(std::move(schedule)), resampler_(std::move(r)) {
    sources_.push_back(std::move(source));
    for (int i = 1; i < schedule_.stages(); ++i) sources_.push_back(sources_.back().downsampled(resampler_, 1));
    for (int i = 0; i < schedule_.stages(); ++i) {
        const Grid& g = sources_[static_cast<std::size_t>(i)].grid();
        if (schedule_.global(i).noisier < 1.0) {
            Matrix D = down_matrix(resampler_, g);
            projections_.push_back(up_matrix(resampler_, resampler_.coarse(g)) * D);
        } else {
            projections_.emplace_back();
        }
    }
}

const GaussianSource& PyramidOracle::stage_source(int stage) const {
    schedule_.require_stage(stage);
    return sources_[static_cast<std::size_t>(stage)];
}

StageLaw PyramidOracle::law(int stage, double eta) const {
    schedule_.require_stage(stage);
    if (!schedule_.contains(stage, eta) && eta != schedule_.natural(stage).cleaner) {
        std::ostringstream os;
        os << "natural level " << eta << " outside stage " << stage << " interval";
        throw std::invalid_argument(os.str());
    }
    const LevelInterval g = schedule_.global(stage);
    const GaussianSource& src = sources_[static_cast<std::size_t>(stage)];
    const auto n = src.dim();
    StageLaw L;
    L.stage = stage;
    L.eta = eta;
    L.sigma = schedule_.global_from_natural(eta, stage);
    L.rho = (L.sigma - g.cleaner) / (g.noisier - g.cleaner);
    const Matrix I = Matrix::Identity(n, n);
    const Matrix& P = projections_[static_cast<std::size_t>(stage)];
    L.M = (1.0 - L.rho) * (1.0 - g.cleaner) * I;
    L.K = -(1.0 - g.cleaner) * I;
    if (g.noisier < 1.0) {
        L.M += L.rho * (1.0 - g.noisier) * P;
        L.K += (1.0 - g.noisier) * P;
    }
    L.K /= (g.noisier - g.cleaner);
    L.mu = src.mean();
    L.Sigma = src.cov();
    return L;
}

AffineMap PyramidOracle::affine(int stage, double eta) const {
    const StageLaw L = law(stage, eta);
    const auto n = L.M.rows();
    const Matrix I = Matrix::Identity(n, n);
    Matrix cxx = L.M * L.Sigma * L.M.transpose() + (L.sigma * L.sigma + kConditioningRidge) * I;
    const Matrix cvx = L.K * L.Sigma * L.M.transpose() + L.sigma * I;
    // A = cvx cxx^-1, solved as cxx A^T = cvx^T.
    const Eigen::LDLT<Matrix> ldlt(cxx);
    AffineMap f;
    f.A = ldlt.solve(cvx.transpose()).transpose();
    f.b = L.K * L.mu - f.A * (L.M * L.mu);
    return f;
}

double PyramidOracle::bayes_mse(int stage, double eta) const {
    const StageLaw L = law(stage, eta);
    return affine_loss(L, affine(stage, eta));
}

const AffineMap& PyramidOracle::cached(int stage, double eta) const {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto key = std::make_pair(stage, eta);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, affine(stage, eta)).first;
    return it->second;
}

Batch PyramidOracle::predict(const Batch& x, double eta, int stage) const {
    if (!(x.grid == stage_grid(stage)))
        throw std::invalid_argument("oracle input grid " + x.grid.str() + " does not match stage grid " +
                                    stage_grid(stage).str());
    const AffineMap& f = cached(stage, eta);
    return Batch(x.grid, f.apply(x.values));
}

ConventionalOracle::ConventionalOracle(const GaussianSource& source, const OrthoResampler& r, int stages) {
    GaussianSource cur = source;
    for (int i = 0; i < stages; ++i) {
        if (i > 0) cur = cur.downsampled(r, 1);
        per_stage_.push_back(std::make_unique<PyramidOracle>(cur, conventional_schedule(), r));
    }
}

const PyramidOracle& ConventionalOracle::stage_oracle(int stage) const {
    if (stage < 0 || stage >= static_cast<int>(per_stage_.size()))
        throw std::invalid_argument("conventional oracle: stage out of range");
    return *per_stage_[static_cast<std::size_t>(stage)];
}

Batch ConventionalOracle::predict(const Batch& x, double sigma, int stage) const {
    return stage_oracle(stage).predict(x, sigma, 0);
}

Tensor oracle_velocity(const GaussianSource& source, const StageSchedule& schedule, const OrthoResampler& r, int stage,
                       const Tensor& x, double eta) {
    const PyramidOracle o(source, schedule, r);
    return o.predict(x, eta, stage);
}

double oracle_bayes_mse(const GaussianSource& source, const StageSchedule& schedule, const OrthoResampler& r,
                        int stage, double eta) {
    const PyramidOracle o(source, schedule, r);
    return o.bayes_mse(stage, eta);
}

}  // namespace pyramid
