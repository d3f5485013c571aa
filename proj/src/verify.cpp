#include "pyramid/verify.hpp"

#include "pyramid/forward.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pyramid {

std::string resampler_label(const OrthoResampler& r) {
    std::ostringstream os;
    os << (r.filter_length() == 2 ? "haar" : "filters" + std::to_string(r.filter_length())) << "/" << r.axes().str();
    return os.str();
}

nlohmann::json UpsampleLawReport::to_json() const {
    return {{"check", "upsample_law_exact"}, {"resampler", resampler}, {"grid", fine.str()},
            {"from_stage", from},             {"sigma_c", sigma_c},    {"sigma_n", sigma_n},
            {"mean_deviation", mean_deviation}, {"cov_deviation", cov_deviation},
            {"operator_deviation", operator_deviation}, {"tolerance", kExactLawTolerance}, {"pass", pass}};
}

nlohmann::json UpsampleMcReport::to_json() const {
    return {{"check", "upsample_law_mc"}, {"resampler", resampler},   {"grid", fine.str()},
            {"from_stage", from},          {"samples", samples},       {"max_mean_z", max_mean_z},
            {"max_diag_z", max_diag_z},    {"max_offdiag_z", max_offdiag_z},
            {"z_threshold", kMcZThreshold}, {"low_power", low_power}, {"pass", pass}};
}

namespace {

struct TransitionLevels {
    double sigma_c, sigma_n, scale, nu;
};

TransitionLevels transition_levels(const StageSchedule& s, int from, const OrthoResampler& r,
                                   const UpsampleOptions& opt) {
    if (from < 1) throw std::invalid_argument("upsample law check needs a source stage >= 1");
    s.require_stage(from);
    TransitionLevels t;
    t.sigma_c = s.global(from).cleaner;
    t.sigma_n = s.global(from - 1).noisier;
    t.scale = opt.rescale ? 1.0 / (1.0 + (r.omega() - 1.0) * t.sigma_c) : 1.0;
    t.nu = opt.noise_scale * t.sigma_c;
    return t;
}

}  // namespace

UpsampleLawReport check_upsample_law_exact(const OrthoResampler& r, const StageSchedule& schedule, int from,
                                           const Tensor& x0, const UpsampleOptions& opt) {
    const Grid& fine = x0.grid();
    if (fine.size() > kExactLawCap)
        throw std::invalid_argument("exact upsample-law check is limited to " + std::to_string(kExactLawCap) +
                                    " coordinates, grid " + fine.str() + " has " + std::to_string(fine.size()));
    r.require_halvable(fine);
    const TransitionLevels lv = transition_levels(schedule, from, r, opt);
    const auto n = static_cast<Eigen::Index>(fine.size());
    const Grid coarse = r.coarse(fine);
    const auto nc = static_cast<Eigen::Index>(coarse.size());

    const Matrix A = analysis_matrix(r, fine);
    const auto low = low_band_indices(r, fine);
    std::vector<char> is_low(fine.size(), 0);
    Matrix El = Matrix::Zero(n, nc);
    for (std::size_t k = 0; k < low.size(); ++k) {
        El(static_cast<Eigen::Index>(low[k]), static_cast<Eigen::Index>(k)) = 1.0;
        is_low[low[k]] = 1;
    }
    Matrix Eh = Matrix::Zero(n, n - nc);
    for (std::size_t i = 0, k = 0; i < fine.size(); ++i)
        if (!is_low[i]) Eh(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k++)) = 1.0;

    // value = s omega A^T (E_l y + nu E_h z), y = (1 - sigma_c) D x0 + sigma_c eps.
    const double g = lv.scale * r.omega();
    const Matrix Ul = g * A.transpose() * El;
    const Matrix Uh = g * lv.nu * A.transpose() * Eh;
    const Matrix D = down_matrix(r, fine);
    const Vector mean = (1.0 - lv.sigma_c) * Ul * D * x0.values();
    const Matrix cov = lv.sigma_c * lv.sigma_c * Ul * Ul.transpose() + Uh * Uh.transpose();

    const Matrix P = up_matrix(r, coarse) * D;
    const Vector claim_mean = (1.0 - lv.sigma_n) * P * x0.values();
    const Matrix claim_cov = lv.sigma_n * lv.sigma_n * Matrix::Identity(n, n);

    // The operator itself: up_with_noise without noise must be the explicit low-band map.
    UpsampleOptions quiet = opt;
    quiet.noise_scale = 0.0;
    RngStream scratch(0);
    Batch probe(coarse, Matrix::Identity(nc, nc));
    const Batch applied = up_with_noise(r, probe, lv.sigma_c, scratch, quiet).value;

    UpsampleLawReport rep;
    rep.resampler = resampler_label(r);
    rep.fine = fine;
    rep.from = from;
    rep.sigma_c = lv.sigma_c;
    rep.sigma_n = lv.sigma_n;
    rep.mean_deviation = (mean - claim_mean).cwiseAbs().maxCoeff();
    rep.cov_deviation = (cov - claim_cov).cwiseAbs().maxCoeff();
    rep.operator_deviation = (applied.values - Ul).cwiseAbs().maxCoeff();
    rep.pass = rep.mean_deviation < kExactLawTolerance && rep.cov_deviation < kExactLawTolerance &&
               rep.operator_deviation < kExactLawTolerance;
    return rep;
}

UpsampleMcReport check_upsample_law_mc(const OrthoResampler& r, const StageSchedule& schedule, int from,
                                       const Tensor& x0, Eigen::Index n, RngStream& rng,
                                       const UpsampleOptions& opt) {
    if (n < 2) throw std::invalid_argument("Monte Carlo check needs at least two samples");
    const Grid& fine = x0.grid();
    r.require_halvable(fine);
    const TransitionLevels lv = transition_levels(schedule, from, r, opt);
    const auto d = static_cast<Eigen::Index>(fine.size());
    const Tensor x0c = down(r, x0);
    const Vector mu = (1.0 - lv.sigma_n) * project(r, x0).values();
    const double var = lv.sigma_n * lv.sigma_n;

    // Centered at the claimed mean; sums of c, c^2, c c^T and (c c^T)^2.
    Vector s1 = Vector::Zero(d), s2 = Vector::Zero(d);
    Matrix p1 = Matrix::Zero(d, d), p2 = Matrix::Zero(d, d);
    const Eigen::Index chunk = 4096;
    for (Eigen::Index done = 0; done < n; done += chunk) {
        const Eigen::Index m = std::min(chunk, n - done);
        Batch y = gaussian_batch(x0c.grid(), m, rng);
        y.values *= lv.sigma_c;
        y.values.colwise() += (1.0 - lv.sigma_c) * x0c.values();
        Matrix c = up_with_noise(r, y, lv.sigma_c, rng, opt).value.values;
        c.colwise() -= mu;
        s1 += c.rowwise().sum();
        s2 += c.cwiseAbs2().rowwise().sum();
        p1.noalias() += c * c.transpose();
        const Matrix c2 = c.cwiseAbs2();
        p2.noalias() += c2 * c2.transpose();
    }
    const double nn = static_cast<double>(n);
    UpsampleMcReport rep;
    rep.resampler = resampler_label(r);
    rep.fine = fine;
    rep.from = from;
    rep.samples = n;
    for (Eigen::Index j = 0; j < d; ++j) {
        const double m = s1[j] / nn;
        const double v = std::max(s2[j] / nn - m * m, 1e-300);
        rep.max_mean_z = std::max(rep.max_mean_z, std::abs(m) / std::sqrt(v / nn));
        for (Eigen::Index k = j; k < d; ++k) {
            // Entry estimate mean(c_j c_k) against the claimed sigma_n^2 delta_jk.
            const double e = p1(j, k) / nn;
            const double ev = std::max(p2(j, k) / nn - e * e, 1e-300);
            const double z = std::abs(e - (j == k ? var : 0.0)) / std::sqrt(ev / nn);
            if (j == k)
                rep.max_diag_z = std::max(rep.max_diag_z, z);
            else
                rep.max_offdiag_z = std::max(rep.max_offdiag_z, z);
        }
    }
    rep.low_power = n < kMcLowPowerCount;
    const bool within = rep.max_mean_z < kMcZThreshold && rep.max_diag_z < kMcZThreshold &&
                        rep.max_offdiag_z < kMcZThreshold;
    rep.pass = within || rep.low_power;
    return rep;
}

namespace {

int signed_index(int k, int n) { return k <= n / 2 ? k : k - n; }

std::vector<int> radial_bins(const Grid& g) {
    const int nmax = std::max({g.frames, g.height, g.width});
    std::vector<int> bins;
    bins.reserve(static_cast<std::size_t>(g.frames) * g.height * g.width);
    for (int t = 0; t < g.frames; ++t)
        for (int h = 0; h < g.height; ++h)
            for (int w = 0; w < g.width; ++w) {
                const double ft = static_cast<double>(signed_index(t, g.frames)) / g.frames;
                const double fh = static_cast<double>(signed_index(h, g.height)) / g.height;
                const double fw = static_cast<double>(signed_index(w, g.width)) / g.width;
                bins.push_back(static_cast<int>(std::lround(std::sqrt(ft * ft + fh * fh + fw * fw) * nmax)));
            }
    return bins;
}

RadialSpectrum bin(const Grid& g, const std::vector<int>& bins, const Vector& power) {
    const int nmax = std::max({g.frames, g.height, g.width});
    const int top = *std::max_element(bins.begin(), bins.end());
    RadialSpectrum s;
    s.power.assign(static_cast<std::size_t>(top) + 1, 0.0);
    s.counts.assign(static_cast<std::size_t>(top) + 1, 0);
    for (std::size_t i = 0; i < bins.size(); ++i) {
        s.power[static_cast<std::size_t>(bins[i])] += power[static_cast<Eigen::Index>(i)];
        ++s.counts[static_cast<std::size_t>(bins[i])];
    }
    // Drop empty bins (possible on anisotropic grids).
    RadialSpectrum out;
    for (std::size_t k = 0; k < s.power.size(); ++k) {
        if (s.counts[k] == 0) continue;
        out.frequency.push_back(static_cast<double>(k) / nmax);
        out.power.push_back(s.power[k] / s.counts[k]);
        out.counts.push_back(s.counts[k]);
    }
    return out;
}

}  // namespace

RadialSpectrum radial_average(const Grid& g, const Vector& coefficient_power) {
    const auto n = static_cast<Eigen::Index>(g.frames) * g.height * g.width;
    if (coefficient_power.size() != n) throw std::invalid_argument("spectrum size does not match the grid");
    return bin(g, radial_bins(g), coefficient_power);
}

RadialSpectrum power_spectrum(const Batch& samples) {
    const Grid& g = samples.grid;
    require_valid(g);
    if (samples.count() < 1) throw std::invalid_argument("power spectrum of an empty batch");
    const int n = g.frames * g.height * g.width;
    fftw_complex* buf = fftw_alloc_complex(static_cast<std::size_t>(n));
    fftw_plan plan = fftw_plan_dft_3d(g.frames, g.height, g.width, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    Vector acc = Vector::Zero(n);
    for (Eigen::Index j = 0; j < samples.count(); ++j) {
        for (int c = 0; c < g.channels; ++c) {
            for (int i = 0; i < n; ++i) {
                buf[i][0] = samples.values(static_cast<Eigen::Index>(i) * g.channels + c, j);
                buf[i][1] = 0.0;
            }
            fftw_execute(plan);
            for (int i = 0; i < n; ++i) acc[i] += buf[i][0] * buf[i][0] + buf[i][1] * buf[i][1];
        }
    }
    fftw_destroy_plan(plan);
    fftw_free(buf);
    acc /= static_cast<double>(n) * static_cast<double>(samples.count()) * g.channels;
    return bin(g, radial_bins(g), acc);
}

Vector noised_spectrum(const Vector& source_spectrum, double sigma) {
    return ((1.0 - sigma) * (1.0 - sigma) * source_spectrum.array() + sigma * sigma).matrix();
}

double spectral_flatness_excess(const RadialSpectrum& s) {
    if (s.power.empty()) throw std::invalid_argument("empty spectrum");
    const auto [lo, hi] = std::minmax_element(s.power.begin(), s.power.end());
    if (!(*lo > 0.0)) return std::numeric_limits<double>::infinity();
    return (*hi - *lo) / *lo;
}

nlohmann::json BoundaryRecommendation::to_json() const {
    return {{"sigma", sigma}, {"excess", excess}, {"found", found}};
}

BoundaryRecommendation recommend_noisier_bound(const GaussianSource& source, const OrthoResampler& r, int stage,
                                               double delta, int points) {
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    if (points < 2) throw std::invalid_argument("need at least two grid points");
    if (stage < 0) throw std::invalid_argument("stage must be nonnegative");
    const GaussianSource st = stage == 0 ? source : source.downsampled(r, stage);
    const Vector S = stationary_spectrum(st.grid(), st.cov());
    BoundaryRecommendation rec;
    for (int k = 0; k < points; ++k) {
        const double sigma = static_cast<double>(k) / (points - 1);
        const double e = spectral_flatness_excess(radial_average(st.grid(), noised_spectrum(S, sigma)));
        rec.grid.push_back(sigma);
        rec.excess_curve.push_back(e);
        if (!rec.found && e < delta) {
            rec.found = true;
            rec.sigma = sigma;
            rec.excess = e;
        }
    }
    if (!rec.found) {
        rec.sigma = rec.grid.back();
        rec.excess = rec.excess_curve.back();
    }
    return rec;
}

double snr(const Tensor& x0, double sigma, const OrthoResampler& r, bool downsampled) {
    if (!(sigma > 0.0 && sigma <= 1.0)) throw std::invalid_argument("snr needs sigma in (0, 1]");
    const double k = (1.0 - sigma) / sigma;
    if (!downsampled) return k * k * x0.values().squaredNorm() / static_cast<double>(x0.grid().size());
    const Tensor xd = down(r, x0);
    const double noise = static_cast<double>(xd.grid().size()) / (r.omega() * r.omega());
    return k * k * xd.values().squaredNorm() / noise;
}

}  // namespace pyramid
