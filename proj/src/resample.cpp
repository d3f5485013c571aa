#include "pyramid/resample.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

namespace pyramid {
namespace {

constexpr double kOrthoTol = 1e-10;
constexpr Axis kAxes[] = {Axis::T, Axis::H, Axis::W};

struct LineLayout {
    std::size_t outer = 1;
    std::size_t stride = 1;
    int n = 1;
};

LineLayout layout(const Grid& g, Axis a) {
    const auto d = g.dims();
    const int ai = static_cast<int>(a);
    LineLayout l;
    l.n = d[ai];
    for (int k = 0; k < ai; ++k) l.outer *= static_cast<std::size_t>(d[k]);
    for (int k = ai + 1; k < 4; ++k) l.stride *= static_cast<std::size_t>(d[k]);
    return l;
}

Grid with_extent(Grid g, Axis a, int n) {
    switch (a) {
        case Axis::T: g.frames = n; break;
        case Axis::H: g.height = n; break;
        case Axis::W: g.width = n; break;
    }
    return g;
}

const char* axis_name(Axis a) { return a == Axis::T ? "T" : (a == Axis::H ? "H" : "W"); }

// Low-pass analysis along one axis, halving it.
void lowpass_axis(const std::vector<double>& lo, const double* in, const Grid& g, Axis a, double* out) {
    const LineLayout l = layout(g, a);
    const std::size_t half = static_cast<std::size_t>(l.n / 2);
    const std::size_t len = lo.size();
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t s = 0; s < l.stride; ++s) {
            const double* src = in + o * l.n * l.stride + s;
            double* dst = out + o * half * l.stride + s;
            for (std::size_t k = 0; k < half; ++k) {
                double acc = 0.0;
                for (std::size_t j = 0; j < len; ++j) acc += lo[j] * src[((2 * k + j) % l.n) * l.stride];
                dst[k * l.stride] = acc;
            }
        }
    }
}

// Synthesis from the low band alone along one axis, doubling it. g is the
// coarse grid.
void lowpass_synth_axis(const std::vector<double>& lo, const double* in, const Grid& g, Axis a, double* out) {
    const LineLayout l = layout(g, a);
    const std::size_t n = static_cast<std::size_t>(2 * l.n);
    const std::size_t len = lo.size();
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t s = 0; s < l.stride; ++s) {
            const double* src = in + o * l.n * l.stride + s;
            double* dst = out + o * n * l.stride + s;
            for (std::size_t i = 0; i < n; ++i) dst[i * l.stride] = 0.0;
            for (std::size_t k = 0; k < static_cast<std::size_t>(l.n); ++k) {
                const double c = src[k * l.stride];
                for (std::size_t j = 0; j < len; ++j) dst[((2 * k + j) % n) * l.stride] += lo[j] * c;
            }
        }
    }
}

// Full analysis along one axis in place (banded layout along that axis).
void analyze_axis(const std::vector<double>& lo, const std::vector<double>& hi, double* data, const Grid& g, Axis a) {
    const LineLayout l = layout(g, a);
    const std::size_t n = static_cast<std::size_t>(l.n);
    const std::size_t half = n / 2;
    const std::size_t len = lo.size();
    std::vector<double> line(n), res(n);
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t s = 0; s < l.stride; ++s) {
            double* base = data + o * n * l.stride + s;
            for (std::size_t i = 0; i < n; ++i) line[i] = base[i * l.stride];
            for (std::size_t k = 0; k < half; ++k) {
                double al = 0.0, ah = 0.0;
                for (std::size_t j = 0; j < len; ++j) {
                    const double v = line[(2 * k + j) % n];
                    al += lo[j] * v;
                    ah += hi[j] * v;
                }
                res[k] = al;
                res[half + k] = ah;
            }
            for (std::size_t i = 0; i < n; ++i) base[i * l.stride] = res[i];
        }
    }
}

void synthesize_axis(const std::vector<double>& lo, const std::vector<double>& hi, double* data, const Grid& g, Axis a) {
    const LineLayout l = layout(g, a);
    const std::size_t n = static_cast<std::size_t>(l.n);
    const std::size_t half = n / 2;
    const std::size_t len = lo.size();
    std::vector<double> line(n), res(n);
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t s = 0; s < l.stride; ++s) {
            double* base = data + o * n * l.stride + s;
            for (std::size_t i = 0; i < n; ++i) line[i] = base[i * l.stride];
            std::fill(res.begin(), res.end(), 0.0);
            for (std::size_t k = 0; k < half; ++k) {
                const double al = line[k];
                const double ah = line[half + k];
                for (std::size_t j = 0; j < len; ++j) res[(2 * k + j) % n] += lo[j] * al + hi[j] * ah;
            }
            for (std::size_t i = 0; i < n; ++i) base[i * l.stride] = res[i];
        }
    }
}

Vector down_values(const OrthoResampler& r, const Grid& fine, const double* x) {
    Vector cur = Eigen::Map<const Vector>(x, static_cast<Eigen::Index>(fine.size()));
    Grid g = fine;
    for (Axis a : kAxes) {
        if (!r.axes().contains(a)) continue;
        const Grid next = with_extent(g, a, g.extent(a) / 2);
        Vector out(static_cast<Eigen::Index>(next.size()));
        lowpass_axis(r.lo(), cur.data(), g, a, out.data());
        cur = std::move(out);
        g = next;
    }
    return cur / r.omega();
}

Vector up_values(const OrthoResampler& r, const Grid& coarse, const double* x) {
    Vector cur = Eigen::Map<const Vector>(x, static_cast<Eigen::Index>(coarse.size()));
    Grid g = coarse;
    for (Axis a : kAxes) {
        if (!r.axes().contains(a)) continue;
        const Grid next = with_extent(g, a, g.extent(a) * 2);
        Vector out(static_cast<Eigen::Index>(next.size()));
        lowpass_synth_axis(r.lo(), cur.data(), g, a, out.data());
        cur = std::move(out);
        g = next;
    }
    return cur * r.omega();
}

}  // namespace

std::string AxisSet::str() const {
    std::string s;
    if (t) s += 'T';
    if (h) s += 'H';
    if (w) s += 'W';
    return s;
}

AxisSet AxisSet::parse(std::string_view letters) {
    AxisSet a;
    for (char ch : letters) {
        switch (std::toupper(static_cast<unsigned char>(ch))) {
            case 'T': a.t = true; break;
            case 'H': a.h = true; break;
            case 'W': a.w = true; break;
            default: throw std::invalid_argument("unknown axis letter '" + std::string(1, ch) + "'");
        }
    }
    return a;
}

double filter_bank_orthogonality_error(const std::vector<double>& lo, const std::vector<double>& hi, int n) {
    Matrix m = Matrix::Zero(n, n);
    const int half = n / 2;
    for (int k = 0; k < half; ++k) {
        for (std::size_t j = 0; j < lo.size(); ++j) {
            const int col = static_cast<int>((2 * k + static_cast<int>(j)) % n);
            m(k, col) += lo[j];
            m(half + k, col) += hi[j];
        }
    }
    return (m.transpose() * m - Matrix::Identity(n, n)).cwiseAbs().maxCoeff();
}

OrthoResampler::OrthoResampler(std::vector<double> lo, std::vector<double> hi, AxisSet axes)
    : lo_(std::move(lo)), hi_(std::move(hi)), axes_(axes) {
    gain_ = 0.0;
    for (double v : lo_) gain_ += v;
    omega_ = std::pow(gain_, axes_.count());
}

OrthoResampler OrthoResampler::haar(AxisSet axes) {
    if (axes.empty()) throw std::invalid_argument("resampler needs at least one halved axis");
    const double s = 1.0 / std::sqrt(2.0);
    return OrthoResampler({s, s}, {s, -s}, axes);
}

OrthoResampler OrthoResampler::daubechies2(AxisSet axes) {
    const double r3 = std::sqrt(3.0);
    const double d = 4.0 * std::sqrt(2.0);
    std::vector<double> lo = {(1 + r3) / d, (3 + r3) / d, (3 - r3) / d, (1 - r3) / d};
    std::vector<double> hi = {lo[3], -lo[2], lo[1], -lo[0]};
    return from_filters(std::move(lo), std::move(hi), axes);
}

OrthoResampler OrthoResampler::from_filters(std::vector<double> lo, std::vector<double> hi, AxisSet axes) {
    if (axes.empty()) throw std::invalid_argument("resampler needs at least one halved axis");
    if (lo.size() != hi.size()) throw std::invalid_argument("low- and high-pass filters must have equal length");
    if (lo.empty() || lo.size() % 2 != 0) throw std::invalid_argument("filter length must be even and nonzero");
    for (double v : lo)
        if (!std::isfinite(v)) throw std::invalid_argument("filter coefficients must be finite");
    for (double v : hi)
        if (!std::isfinite(v)) throw std::invalid_argument("filter coefficients must be finite");
    const int len = static_cast<int>(lo.size());
    double err = 0.0;
    for (int n : {len, 2 * len}) err = std::max(err, filter_bank_orthogonality_error(lo, hi, n));
    if (err > kOrthoTol) {
        std::ostringstream os;
        os << "filter bank is not orthogonal: max |W^T W - I| = " << err;
        throw std::invalid_argument(os.str());
    }
    OrthoResampler r(std::move(lo), std::move(hi), axes);
    if (!(r.gain_ > 0.0)) throw std::invalid_argument("low-pass filter must have positive row sum");
    return r;
}

Grid OrthoResampler::coarse(const Grid& fine) const {
    require_halvable(fine);
    Grid g = fine;
    for (Axis a : kAxes)
        if (axes_.contains(a)) g = with_extent(g, a, g.extent(a) / 2);
    return g;
}

Grid OrthoResampler::fine(const Grid& coarse) const {
    require_valid(coarse);
    Grid g = coarse;
    for (Axis a : kAxes)
        if (axes_.contains(a)) g = with_extent(g, a, g.extent(a) * 2);
    return g;
}

bool OrthoResampler::can_halve(const Grid& g) const {
    if (!g.valid()) return false;
    for (Axis a : kAxes) {
        if (!axes_.contains(a)) continue;
        const int n = g.extent(a);
        if (n % 2 != 0 || n < filter_length()) return false;
    }
    return true;
}

void OrthoResampler::require_halvable(const Grid& g) const {
    require_valid(g);
    for (Axis a : kAxes) {
        if (!axes_.contains(a)) continue;
        const int n = g.extent(a);
        if (n % 2 != 0)
            throw std::invalid_argument(std::string("axis ") + axis_name(a) + " has odd length " + std::to_string(n));
        if (n < filter_length())
            throw std::invalid_argument(std::string("axis ") + axis_name(a) + " of length " + std::to_string(n) +
                                        " is shorter than the filter (" + std::to_string(filter_length()) + ")");
    }
}

int OrthoResampler::max_levels(const Grid& g) const {
    int levels = 0;
    Grid cur = g;
    while (can_halve(cur)) {
        cur = coarse(cur);
        ++levels;
    }
    return levels;
}

Tensor down(const OrthoResampler& r, const Tensor& x) {
    const Grid c = r.coarse(x.grid());
    return Tensor(c, down_values(r, x.grid(), x.values().data()));
}

Tensor up(const OrthoResampler& r, const Tensor& x) {
    const Grid f = r.fine(x.grid());
    return Tensor(f, up_values(r, x.grid(), x.values().data()));
}

Batch down(const OrthoResampler& r, const Batch& x) {
    const Grid c = r.coarse(x.grid);
    Batch out(c, x.count());
    for (Eigen::Index j = 0; j < x.count(); ++j) out.values.col(j) = down_values(r, x.grid, x.values.col(j).data());
    return out;
}

Batch up(const OrthoResampler& r, const Batch& x) {
    const Grid f = r.fine(x.grid);
    Batch out(f, x.count());
    for (Eigen::Index j = 0; j < x.count(); ++j) out.values.col(j) = up_values(r, x.grid, x.values.col(j).data());
    return out;
}

Tensor project(const OrthoResampler& r, const Tensor& x) { return up(r, down(r, x)); }
Batch project(const OrthoResampler& r, const Batch& x) { return up(r, down(r, x)); }

Tensor down_times(const OrthoResampler& r, const Tensor& x, int times) {
    if (times < 0) throw std::invalid_argument("down_times: negative count");
    Tensor cur = x;
    for (int i = 0; i < times; ++i) cur = down(r, cur);
    return cur;
}

double noisy_upsample_gain(double omega, double sigma) { return omega / (1.0 + (omega - 1.0) * sigma); }

namespace {

void check_level(double sigma) {
    if (!(sigma >= 0.0 && sigma <= 1.0)) throw std::invalid_argument("noise level must lie in [0, 1]");
}

// Synthesizes one fine-grid sample from the coarse low band and fresh
// high-band noise; writes omega * W^T [x; nu z] (without r) into out.
void noisy_synthesis(const OrthoResampler& r, const Grid& fine, const std::vector<std::size_t>& low_idx,
                     const double* coarse, double nu, RngStream& rng, double* out) {
    const std::size_t n = fine.size();
    Vector bands = Vector::Zero(static_cast<Eigen::Index>(n));
    std::vector<char> is_low(n, 0);
    for (std::size_t k = 0; k < low_idx.size(); ++k) {
        bands[static_cast<Eigen::Index>(low_idx[k])] = coarse[k];
        is_low[low_idx[k]] = 1;
    }
    Vector z(static_cast<Eigen::Index>(n - low_idx.size()));
    rng.fill_normal(z);
    Eigen::Index zi = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (!is_low[i]) bands[static_cast<Eigen::Index>(i)] = nu * z[zi++];
    for (Axis a : kAxes)
        if (r.axes().contains(a)) synthesize_axis(r.lo(), r.hi(), bands.data(), fine, a);
    const double gain = r.omega();
    for (std::size_t i = 0; i < n; ++i) out[i] = gain * bands[static_cast<Eigen::Index>(i)];
}

}  // namespace

NoisyUpsample up_with_noise(const OrthoResampler& r, const Tensor& x, double sigma, RngStream& rng,
                            const UpsampleOptions& opt) {
    check_level(sigma);
    const Grid fine = r.fine(x.grid());
    r.require_halvable(fine);
    const auto low_idx = low_band_indices(r, fine);
    Tensor out(fine);
    noisy_synthesis(r, fine, low_idx, x.values().data(), opt.noise_scale * sigma, rng, out.values().data());
    const double scale = opt.rescale ? 1.0 / (1.0 + (r.omega() - 1.0) * sigma) : 1.0;
    out *= scale;
    return {std::move(out), r.omega() * sigma / (1.0 + (r.omega() - 1.0) * sigma)};
}

NoisyUpsampleBatch up_with_noise(const OrthoResampler& r, const Batch& x, double sigma, RngStream& rng,
                                 const UpsampleOptions& opt) {
    check_level(sigma);
    const Grid fine = r.fine(x.grid);
    r.require_halvable(fine);
    const auto low_idx = low_band_indices(r, fine);
    Batch out(fine, x.count());
    for (Eigen::Index j = 0; j < x.count(); ++j)
        noisy_synthesis(r, fine, low_idx, x.values.col(j).data(), opt.noise_scale * sigma, rng,
                        out.values.col(j).data());
    const double scale = opt.rescale ? 1.0 / (1.0 + (r.omega() - 1.0) * sigma) : 1.0;
    out.values *= scale;
    return {std::move(out), r.omega() * sigma / (1.0 + (r.omega() - 1.0) * sigma)};
}

Tensor analyze(const OrthoResampler& r, const Tensor& x) {
    r.require_halvable(x.grid());
    Tensor out = x;
    for (Axis a : kAxes)
        if (r.axes().contains(a)) analyze_axis(r.lo(), r.hi(), out.values().data(), x.grid(), a);
    return out;
}

Tensor synthesize(const OrthoResampler& r, const Tensor& bands) {
    r.require_halvable(bands.grid());
    Tensor out = bands;
    for (Axis a : kAxes)
        if (r.axes().contains(a)) synthesize_axis(r.lo(), r.hi(), out.values().data(), bands.grid(), a);
    return out;
}

std::vector<std::size_t> low_band_indices(const OrthoResampler& r, const Grid& fine) {
    const Grid c = r.coarse(fine);
    std::vector<std::size_t> idx;
    idx.reserve(c.size());
    for (int t = 0; t < c.frames; ++t)
        for (int h = 0; h < c.height; ++h)
            for (int w = 0; w < c.width; ++w)
                for (int ch = 0; ch < c.channels; ++ch) idx.push_back(fine.index(t, h, w, ch));
    return idx;
}

namespace {

void check_cap(const Grid& g) {
    if (g.size() > kExplicitMatrixCap)
        throw std::invalid_argument("explicit matrix size cap exceeded: " + std::to_string(g.size()) + " > " +
                                    std::to_string(kExplicitMatrixCap));
}

}  // namespace

Matrix analysis_matrix(const OrthoResampler& r, const Grid& fine) {
    check_cap(fine);
    r.require_halvable(fine);
    const auto n = static_cast<Eigen::Index>(fine.size());
    Matrix m(n, n);
    Tensor e(fine);
    for (Eigen::Index j = 0; j < n; ++j) {
        e.values().setZero();
        e.values()[j] = 1.0;
        m.col(j) = analyze(r, e).values();
    }
    return m;
}

Matrix down_matrix(const OrthoResampler& r, const Grid& fine) {
    check_cap(fine);
    const Grid c = r.coarse(fine);
    const auto n = static_cast<Eigen::Index>(fine.size());
    Matrix m(static_cast<Eigen::Index>(c.size()), n);
    Vector e = Vector::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        e.setZero();
        e[j] = 1.0;
        m.col(j) = down_values(r, fine, e.data());
    }
    return m;
}

Matrix up_matrix(const OrthoResampler& r, const Grid& coarse) {
    const Grid f = r.fine(coarse);
    check_cap(f);
    r.require_halvable(f);
    const auto n = static_cast<Eigen::Index>(coarse.size());
    Matrix m(static_cast<Eigen::Index>(f.size()), n);
    Vector e = Vector::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        e.setZero();
        e[j] = 1.0;
        m.col(j) = up_values(r, coarse, e.data());
    }
    return m;
}

}  // namespace pyramid
