#include "pyramid/distill.hpp"

#include "pyramid/forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace pyramid {

std::string variant_name(DmdVariant v) {
    switch (v) {
        case DmdVariant::OT: return "OT";
        case DmdVariant::PT: return "PT";
        case DmdVariant::PTStar: return "PT*";
    }
    return "?";
}

DmdVariant parse_variant(const std::string& name) {
    if (name == "OT" || name == "ot") return DmdVariant::OT;
    if (name == "PT" || name == "pt") return DmdVariant::PT;
    if (name == "PT*" || name == "pt*" || name == "PTStar" || name == "pt-star") return DmdVariant::PTStar;
    throw std::invalid_argument("unknown DMD variant '" + name + "' (expected OT, PT or PT*)");
}

namespace {

bool needs_projection(const StageSchedule& s, int stage) { return s.global(stage).noisier < 1.0; }

Matrix stage_projection(const OrthoResampler& r, const Grid& g) {
    return up_matrix(r, r.coarse(g)) * down_matrix(r, g);
}

}  // namespace

StudentStep student_one_step(const VelocityModel& student, const Batch& y_n, int stage, double sigma,
                             double sigma_target, const StageSchedule& schedule) {
    const LevelInterval g = schedule.global(stage);
    if (!(sigma > g.cleaner && sigma <= g.noisier)) {
        std::ostringstream os;
        os << "student level " << sigma << " outside stage " << stage << " (" << g.cleaner << ", " << g.noisier << "]";
        throw std::invalid_argument(os.str());
    }
    if (!(sigma_target >= 0.0 && sigma_target < sigma))
        throw std::invalid_argument("student target level must lie in [0, sigma)");
    StudentStep out;
    out.x_sigma = y_n;
    if (sigma < g.noisier) {
        const Batch f = student.predict(y_n, schedule.natural(stage).noisier, stage);
        out.x_sigma.values += (sigma - g.noisier) * f.values;
    }
    const Batch f = student.predict(out.x_sigma, conditioning_level(schedule, stage, sigma), stage);
    out.prediction = Batch(y_n.grid, out.x_sigma.values - (sigma - sigma_target) * f.values);
    return out;
}

Renoised renoise_pyramidal(const Batch& x0_hat, int stage, double rho, const Batch& eps,
                           const StageSchedule& schedule, const OrthoResampler& r) {
    const BoundaryBatch bb = boundary_batch(x0_hat, eps, stage, schedule, r);
    Renoised out;
    out.x = interpolate(bb, rho);
    out.y_c = bb.y_c;
    out.y_n = bb.y_n;
    out.rho = rho;
    out.sigma = schedule.global_from_local(rho, stage);
    return out;
}

Batch delta_combination(const Batch& y_c, const Batch& y_n, int stage, const StageSchedule& schedule,
                        const OrthoResampler& r, const Batch* x0_hat) {
    if (!(y_c.grid == y_n.grid) || y_c.count() != y_n.count())
        throw std::invalid_argument("delta_combination: shape mismatch");
    const LevelInterval g = schedule.global(stage);
    Batch d(y_c.grid, g.noisier * y_c.values - g.cleaner * y_n.values);
    if (x0_hat && needs_projection(schedule, stage)) {
        const Matrix lhs = project(r, d).values;
        const Matrix rhs = (g.noisier - g.cleaner) * project(r, *x0_hat).values;
        const double err = (lhs - rhs).cwiseAbs().maxCoeff();
        if (err > 1e-10) {
            std::ostringstream os;
            os << "delta identity violated by " << err << " on stage " << stage;
            throw std::logic_error(os.str());
        }
    }
    return d;
}

Batch epsilon_estimate(const Batch& f, const Batch& x, int stage, double sigma_p, const StageSchedule& schedule,
                       const OrthoResampler& r) {
    const double sn = schedule.global(stage).noisier;
    if (!(sn > 0.0)) throw std::invalid_argument("epsilon_estimate needs sigma_n > 0");
    Matrix e = (x.values + (sn - sigma_p) * f.values) / sn;
    if (sn < 1.0) {
        const Matrix px = project(r, x).values;
        const Matrix pf = project(r, f).values;
        e -= ((1.0 - sn) / sn) * (px - sigma_p * pf);
    }
    return Batch(x.grid, std::move(e));
}

DmdWeights dmd_weights(DmdVariant v, double sigma_c, double sigma_n, double sigma_p) {
    DmdWeights w;
    if (v != DmdVariant::PT) return w;
    if (sigma_p < sigma_c - 1e-15 || sigma_p > sigma_n + 1e-15)
        throw std::invalid_argument("renoise level outside the stage interval");
    const double b1 = sigma_n - sigma_p, b2 = sigma_p * (1.0 - sigma_n);
    const double g1 = (sigma_n - sigma_p) * (1.0 - sigma_c), g2 = (sigma_p - sigma_c) * (1.0 - sigma_n);
    if (b1 + b2 > 0.0) {
        w.beta1 = b1 / (b1 + b2);
        w.beta2 = b2 / (b1 + b2);
    }
    if (g1 + g2 > 0.0) {
        w.gamma1 = g1 / (g1 + g2);
        w.gamma2 = g2 / (g1 + g2);
    }
    return w;
}

Matrix dmd_direction(const Matrix& diff, const Vector& weight, const DmdWeights& mix, const Matrix* projection) {
    if (weight.size() != diff.cols()) throw std::invalid_argument("dmd_direction: weight count mismatch");
    const bool proj = mix.beta2 != 0.0 || mix.gamma2 != 0.0;
    if (proj && !projection) throw std::invalid_argument("dmd_direction: projection required for PT weights");
    Matrix u = mix.beta1 * diff;
    if (mix.beta2 != 0.0) u += mix.beta2 * (*projection * diff);
    Matrix h = mix.gamma1 * u;
    if (mix.gamma2 != 0.0) h += mix.gamma2 * (*projection * u);
    return h * weight.asDiagonal();
}

AffineGradient chain_affine(const Matrix& H, const Matrix& X) {
    const double n = static_cast<double>(X.cols());
    AffineGradient g;
    g.dA = H * X.transpose() / n;
    g.db = H.rowwise().sum() / n;
    return g;
}

AffineGradient dmd_gradient(const AffineMap& student, const DmdTerms& t) {
    if (t.x_sigma.cols() != t.diff.cols()) throw std::invalid_argument("dmd_gradient: sample count mismatch");
    const Matrix H = dmd_direction(t.diff, t.weight, t.mix, t.projection);
    AffineGradient g = chain_affine(H, t.x_sigma);
    // Surrogate value: mean_j w_j <b-mix(d_j), g-mix(F_j)> = mean_j <H_j, F_j> since P is symmetric.
    const Matrix F = student.apply(t.x_sigma);
    g.loss = (H.array() * F.array()).sum() / static_cast<double>(t.x_sigma.cols());
    return g;
}

AffineGradient teach_gradient(const AffineMap& student, const Matrix& x, const Matrix& f_teacher) {
    const Matrix R = student.apply(x) - f_teacher;
    AffineGradient g = chain_affine(2.0 * R, x);
    g.loss = R.squaredNorm() / static_cast<double>(x.cols());
    return g;
}

double teach_loss(const Batch& f_student, const Batch& f_teacher) {
    if (!(f_student.grid == f_teacher.grid) || f_student.count() != f_teacher.count())
        throw std::invalid_argument("teach_loss: shape mismatch");
    return (f_student.values - f_teacher.values).squaredNorm() / static_cast<double>(f_student.count());
}

Vector LinearDiscriminator::score(const Matrix& features) const {
    return (features.transpose() * w).array() + c;
}

double hinge_discriminator_loss(const Vector& real_scores, const Vector& fake_scores) {
    if (real_scores.size() == 0 || fake_scores.size() == 0) throw std::invalid_argument("hinge loss of empty batch");
    return (1.0 - real_scores.array()).max(0.0).mean() + (1.0 + fake_scores.array()).max(0.0).mean();
}

double hinge_generator_loss(const Vector& fake_scores, const Batch& y_c_hat, const Batch& y_c, double lambda_adv,
                            double lambda_rec) {
    if (y_c_hat.count() != y_c.count() || !(y_c_hat.grid == y_c.grid))
        throw std::invalid_argument("generator loss: shape mismatch");
    return -lambda_adv * fake_scores.mean() +
           lambda_rec * (y_c_hat.values - y_c.values).squaredNorm() / static_cast<double>(y_c.count());
}

void DmdConfig::validate() const {
    if (iterations < 0) throw std::invalid_argument("distill.iterations must be nonnegative");
    if (batch_size < 1) throw std::invalid_argument("distill.batch_size must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("distill.learning_rate must be positive");
    if (fake_updates < 1) throw std::invalid_argument("distill.fake_updates must be at least 1");
    if (!(teach_weight >= 0.0)) throw std::invalid_argument("distill.teach_weight must be nonnegative");
    if (!(shift > 0.0)) throw std::invalid_argument("distill.shift must be positive");
    if (renoise_levels < 1) throw std::invalid_argument("distill.renoise_levels must be positive");
    if (fake_batch_size < 1) throw std::invalid_argument("distill.fake_batch_size must be positive");
    if (!(fake_forgetting > 0.0 && fake_forgetting <= 1.0))
        throw std::invalid_argument("distill.fake_forgetting must lie in (0, 1]");
    if (!(fake_ridge > 0.0)) throw std::invalid_argument("distill.fake_ridge must be positive");
    if (!(weight_floor > 0.0)) throw std::invalid_argument("distill.weight_floor must be positive");
    if (log_every < 1) throw std::invalid_argument("distill.log_every must be positive");
    if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0))
        throw std::invalid_argument("distill.final_lr_fraction must lie in [0, 1]");
}

namespace {

// Bucket edges with one bucket around each level: the interval ends and the
// midpoints between consecutive sorted levels.
std::vector<double> edges_around(std::vector<double> levels, double lo, double hi) {
    std::sort(levels.begin(), levels.end());
    std::vector<double> e{lo};
    for (std::size_t k = 0; k + 1 < levels.size(); ++k) e.push_back(0.5 * (levels[k] + levels[k + 1]));
    e.push_back(hi);
    return e;
}

// Conditioning level a teacher expects for a global level of a stage.
double teacher_level(DmdVariant v, const StageSchedule& s, int stage, double sigma) {
    return v == DmdVariant::OT ? sigma : conditioning_level(s, stage, sigma);
}

struct RenoiseGrid {
    std::vector<double> sigma;  // global renoise levels
    std::vector<double> cond;   // fake/teacher conditioning level
    std::vector<double> rho;    // local level (PT)
};

RenoiseGrid renoise_grid(const DmdConfig& cfg, const StageSchedule& s, int stage) {
    RenoiseGrid g;
    for (int k = 0; k < cfg.renoise_levels; ++k) {
        const double u = (k + 0.5) / cfg.renoise_levels;
        if (cfg.variant == DmdVariant::OT) {
            const double sp = shift_level(u, cfg.shift);
            g.sigma.push_back(sp);
            g.cond.push_back(sp);
            g.rho.push_back(sp);
        } else {
            const double sp = s.global_from_local(u, stage);
            g.sigma.push_back(sp);
            g.cond.push_back(conditioning_level(s, stage, sp));
            g.rho.push_back(u);
        }
    }
    return g;
}

std::vector<std::vector<Eigen::Index>> group_uniform(Eigen::Index n, int groups, RngStream& rng) {
    std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(groups));
    for (Eigen::Index j = 0; j < n; ++j)
        out[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(groups)))].push_back(j);
    return out;
}

Matrix take(const Matrix& m, const std::vector<Eigen::Index>& cols) {
    Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(cols[k]);
    return out;
}

void put(Matrix& m, const std::vector<Eigen::Index>& cols, const Matrix& v) {
    for (std::size_t k = 0; k < cols.size(); ++k) m.col(cols[k]) = v.col(static_cast<Eigen::Index>(k));
}

// Student rollouts from real data for one stage.
struct StudentBatch {
    Matrix x_sigma;
    Matrix x0_hat;
    std::vector<std::vector<Eigen::Index>> by_level;  // student level index -> columns
    std::vector<double> sigma;                         // per student level
};

StudentBatch draw_student(const AffineDenoiser& student, const StageSchedule& s, const OrthoResampler& r,
                          const GaussianSource& source, int stage, const std::vector<double>& levels,
                          Eigen::Index n, RngStream& rng) {
    Batch x0 = source.sample(n, rng);
    for (int k = 0; k < stage; ++k) x0 = down(r, x0);
    const Batch eps = gaussian_batch(x0.grid, n, rng);
    const BoundaryBatch bb = boundary_batch(x0, eps, stage, s, r);
    StudentBatch sb;
    sb.sigma = levels;
    sb.x_sigma.resize(x0.dim(), n);
    sb.x0_hat.resize(x0.dim(), n);
    sb.by_level = group_uniform(n, static_cast<int>(levels.size()), rng);
    for (std::size_t k = 0; k < levels.size(); ++k) {
        const auto& cols = sb.by_level[k];
        if (cols.empty()) continue;
        const StudentStep st =
            student_one_step(student, Batch(x0.grid, take(bb.y_n.values, cols)), stage, levels[k], 0.0, s);
        put(sb.x_sigma, cols, st.x_sigma.values);
        put(sb.x0_hat, cols, st.prediction.values);
    }
    return sb;
}

struct RenoisedBatch {
    Matrix x;       // renoised inputs
    Matrix target;  // d x / d sigma'
    std::vector<std::vector<Eigen::Index>> by_level;
};

RenoisedBatch renoise_all(const Matrix& x0_hat, const Grid& grid, const RenoiseGrid& rg, DmdVariant v,
                          const StageSchedule& s, const OrthoResampler& r, int stage, RngStream& rng) {
    const Eigen::Index n = x0_hat.cols();
    RenoisedBatch rb;
    rb.x.resize(x0_hat.rows(), n);
    rb.target.resize(x0_hat.rows(), n);
    rb.by_level = group_uniform(n, static_cast<int>(rg.sigma.size()), rng);
    const Batch eps = gaussian_batch(grid, n, rng);
    for (std::size_t q = 0; q < rg.sigma.size(); ++q) {
        const auto& cols = rb.by_level[q];
        if (cols.empty()) continue;
        const Matrix xh = take(x0_hat, cols), e = take(eps.values, cols);
        if (v == DmdVariant::OT) {
            const double sp = rg.sigma[q];
            put(rb.x, cols, (1.0 - sp) * xh + sp * e);
            put(rb.target, cols, e - xh);
        } else {
            const BoundaryBatch bb = boundary_batch(Batch(grid, xh), Batch(grid, e), stage, s, r);
            put(rb.x, cols, interpolate(bb, rg.rho[q]).values);
            put(rb.target, cols, velocity_target(bb).values);
        }
    }
    return rb;
}

struct AdamState {
    Matrix mA, vA;
    Vector mb, vb;
    int t = 0;
};

void adam_step(AffineMap& m, AdamState& st, const AffineGradient& g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (st.t == 0) {
        st.mA = Matrix::Zero(m.A.rows(), m.A.cols());
        st.vA = st.mA;
        st.mb = Vector::Zero(m.b.size());
        st.vb = st.mb;
    }
    ++st.t;
    st.mA = b1 * st.mA + (1 - b1) * g.dA;
    st.vA = b2 * st.vA + (1 - b2) * g.dA.cwiseAbs2();
    st.mb = b1 * st.mb + (1 - b1) * g.db;
    st.vb = b2 * st.vb + (1 - b2) * g.db.cwiseAbs2();
    const double c1 = 1 - std::pow(b1, st.t), c2 = 1 - std::pow(b2, st.t);
    m.A.array() -= lr * (st.mA.array() / c1) / ((st.vA.array() / c2).sqrt() + eps);
    m.b.array() -= lr * (st.mb.array() / c1) / ((st.vb.array() / c2).sqrt() + eps);
}

// Exponentially forgotten normal equations of one fake-score bucket.
struct NormalEquations {
    Matrix G, C;
    void decay(double f) {
        if (G.size()) {
            G *= f;
            C *= f;
        }
    }
    void add(const Matrix& X, const Matrix& T) {
        const Eigen::Index p = X.rows();
        Matrix Z(p + 1, X.cols());
        Z.topRows(p) = X;
        Z.row(p).setOnes();
        if (!G.size()) {
            G = Matrix::Zero(p + 1, p + 1);
            C = Matrix::Zero(T.rows(), p + 1);
        }
        G.noalias() += Z * Z.transpose();
        C.noalias() += T * Z.transpose();
    }
};

std::vector<double> student_levels(const StageSchedule& s, int stage, const SamplerConfig& preset) {
    std::vector<double> lv = stage_levels(s, stage, preset);
    lv.pop_back();  // sigma_c
    return lv;
}

}  // namespace

AffineDenoiser init_student(const VelocityModel& teacher, DmdVariant v, const StageSchedule& schedule,
                            const OrthoResampler& r, const Grid& fine, const SamplerConfig& preset) {
    preset.validate(schedule);
    const std::vector<Grid> grids = stage_grids(fine, schedule.stages(), r);
    std::vector<StageBuckets> st;
    for (int i = 0; i < schedule.stages(); ++i) {
        const std::vector<double> lv = student_levels(schedule, i, preset);
        std::vector<double> etas;
        for (double sg : lv) etas.push_back(conditioning_level(schedule, i, sg));
        StageBuckets b;
        b.grid = grids[static_cast<std::size_t>(i)];
        b.edges = edges_around(etas, schedule.natural(i).cleaner, schedule.natural(i).noisier);
        b.maps.resize(etas.size());
        std::vector<double> sorted = lv;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t k = 0; k < sorted.size(); ++k)
            b.maps[k] = probe_affine(teacher, b.grid, teacher_level(v, schedule, i, sorted[k]), i);
        st.push_back(std::move(b));
    }
    return AffineDenoiser(std::move(st));
}

DmdLogRow student_distance(const AffineDenoiser& student, const StageSchedule& schedule, const OrthoResampler& r,
                           const GaussianSource& source, const SamplerConfig& preset) {
    const Moments m = exact_pyramidal_law(student, schedule, r, source.grid(), preset);
    DmdLogRow row;
    row.mean_distance = (m.mean.values() - source.mean()).norm();
    row.cov_distance = (m.cov - source.cov()).norm();
    return row;
}

DmdResult run_dmd_training(const AffineDenoiser& student0, const VelocityModel& teacher, const StageSchedule& schedule,
                           const OrthoResampler& r, const GaussianSource& source, const SamplerConfig& preset,
                           const DmdConfig& cfg, RngStream& rng) {
    cfg.validate();
    preset.validate(schedule);
    const int S = schedule.stages();
    if (student0.stages() != S) throw std::invalid_argument("student/schedule stage count mismatch");
    const std::vector<Grid> grids = stage_grids(source.grid(), S, r);
    const DmdVariant v = cfg.variant;

    DmdResult res;
    res.student = student0;
    AffineDenoiser& student = res.student;

    std::vector<RenoiseGrid> rgrid;
    std::vector<Matrix> proj(static_cast<std::size_t>(S));
    std::vector<std::vector<double>> slevels;
    std::vector<StageBuckets> fake_st;
    for (int i = 0; i < S; ++i) {
        const Grid& g = grids[static_cast<std::size_t>(i)];
        rgrid.push_back(renoise_grid(cfg, schedule, i));
        slevels.push_back(student_levels(schedule, i, preset));
        if (needs_projection(schedule, i)) proj[static_cast<std::size_t>(i)] = stage_projection(r, g);
        StageBuckets b;
        b.grid = g;
        const RenoiseGrid& rg = rgrid.back();
        if (v == DmdVariant::OT)
            b.edges = edges_around(rg.cond, 0.0, 1.0);
        else
            b.edges = edges_around(rg.cond, schedule.natural(i).cleaner, schedule.natural(i).noisier);
        // Levels ascend with k in both parameterizations.
        for (double c : rg.cond) b.maps.push_back(probe_affine(teacher, g, c, i));
        fake_st.push_back(std::move(b));
    }
    res.fake = AffineDenoiser(std::move(fake_st));
    AffineDenoiser& fake = res.fake;
    std::vector<std::vector<NormalEquations>> normal(static_cast<std::size_t>(S));
    std::vector<std::vector<AdamState>> adam(static_cast<std::size_t>(S));
    for (int i = 0; i < S; ++i) {
        normal[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(cfg.renoise_levels));
        adam[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(student.stage(i).buckets()));
    }
    std::vector<double> fake_loss(static_cast<std::size_t>(S), 0.0);

    auto log_row = [&](int it, double wmean, double wmax) {
        DmdLogRow row = student_distance(student, schedule, r, source, preset);
        row.iteration = it;
        row.fake_loss = fake_loss;
        row.weight_mean = wmean;
        row.weight_max = wmax;
        res.log.push_back(row);
        return row.distance();
    };

    double best = log_row(0, 0.0, 0.0);
    int bad = 0;
    for (int it = 1; it <= cfg.iterations; ++it) {
        for (int i = 0; i < S; ++i) {
            const auto si = static_cast<std::size_t>(i);
            const Grid& g = grids[si];
            const RenoiseGrid& rg = rgrid[si];
            for (int u = 0; u < cfg.fake_updates; ++u) {
                const StudentBatch sb =
                    draw_student(student, schedule, r, source, i, slevels[si], cfg.fake_batch_size, rng);
                const RenoisedBatch rb = renoise_all(sb.x0_hat, g, rg, v, schedule, r, i, rng);
                double loss = 0.0;
                for (std::size_t q = 0; q < rg.sigma.size(); ++q) {
                    const auto& cols = rb.by_level[q];
                    NormalEquations& ne = normal[si][q];
                    ne.decay(cfg.fake_forgetting);
                    if (cols.empty()) continue;
                    const Matrix X = take(rb.x, cols), T = take(rb.target, cols);
                    AffineMap& m = fake.stage(i).maps[q];
                    loss += (m.apply(X) - T).squaredNorm();
                    ne.add(X, T);
                    m = ridge_solve(ne.G, ne.C, cfg.fake_ridge, m);
                }
                fake_loss[si] = loss / static_cast<double>(cfg.fake_batch_size);
            }
        }
        double wsum = 0.0, wmax = 0.0;
        Eigen::Index wcount = 0;
        const double progress = static_cast<double>(it - 1) / std::max(1, cfg.iterations - 1);
        const double lr = cfg.learning_rate * (cfg.final_lr_fraction +
                                               (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
        for (int i = 0; i < S; ++i) {
            const auto si = static_cast<std::size_t>(i);
            const Grid& g = grids[si];
            const RenoiseGrid& rg = rgrid[si];
            const LevelInterval gl = schedule.global(i);
            const StudentBatch sb = draw_student(student, schedule, r, source, i, slevels[si], cfg.batch_size, rng);
            const RenoisedBatch rb = renoise_all(sb.x0_hat, g, rg, v, schedule, r, i, rng);
            // Per-sample output gradient, assembled over renoise levels.
            Matrix H(sb.x_sigma.rows(), sb.x_sigma.cols());
            Vector w(sb.x_sigma.cols());
            for (std::size_t q = 0; q < rg.sigma.size(); ++q) {
                const auto& cols = rb.by_level[q];
                if (cols.empty()) continue;
                const Batch X(g, take(rb.x, cols));
                const Matrix ft = teacher.predict(X, rg.cond[q], i).values;
                const Matrix ff = fake.predict(X, rg.cond[q], i).values;
                const Matrix T = take(rb.target, cols);
                const DmdWeights mix = dmd_weights(v, v == DmdVariant::OT ? 0.0 : gl.cleaner,
                                                   v == DmdVariant::OT ? 1.0 : gl.noisier, rg.sigma[q]);
                Vector wq(static_cast<Eigen::Index>(cols.size()));
                for (Eigen::Index j = 0; j < wq.size(); ++j) {
                    const double denom =
                        std::max((ft.col(j) - T.col(j)).cwiseAbs().mean(), cfg.weight_floor);
                    wq[j] = 1.0 / denom;  // times sigma or rho below, per student level
                }
                const Matrix* P = proj[si].size() ? &proj[si] : nullptr;
                const Matrix Hq = dmd_direction(ff - ft, wq, mix, P);
                put(H, cols, Hq);
                for (std::size_t k = 0; k < cols.size(); ++k) w[cols[k]] = wq[static_cast<Eigen::Index>(k)];
            }
            StageBuckets& sbk = student.stage(i);
            for (std::size_t k = 0; k < sb.sigma.size(); ++k) {
                const auto& cols = sb.by_level[k];
                if (cols.empty()) continue;
                const double sigma = sb.sigma[k];
                const double scale = v == DmdVariant::OT ? sigma : schedule.local_from_global(sigma, i);
                Matrix Hk = take(H, cols) * scale;
                for (std::size_t c = 0; c < cols.size(); ++c) {
                    const double wj = scale * w[cols[c]];
                    wsum += wj;
                    wmax = std::max(wmax, wj);
                    ++wcount;
                }
                const Matrix Xk = take(sb.x_sigma, cols);
                const double eta = conditioning_level(schedule, i, sigma);
                const int bucket = student.bucket_of(i, eta);
                AffineMap& m = sbk.maps[static_cast<std::size_t>(bucket)];
                AffineGradient gr = chain_affine(Hk, Xk);
                if (cfg.teach_weight > 0.0) {
                    const Matrix ft = teacher.predict(Batch(g, Xk), teacher_level(v, schedule, i, sigma), i).values;
                    const AffineGradient tg = teach_gradient(m, Xk, ft);
                    gr.dA += cfg.teach_weight * tg.dA;
                    gr.db += cfg.teach_weight * tg.db;
                }
                adam_step(m, adam[si][static_cast<std::size_t>(bucket)], gr, lr);
                if (!m.A.allFinite() || !m.b.allFinite())
                    throw std::runtime_error("DMD training diverged: non-finite student parameters at iteration " +
                                             std::to_string(it));
            }
        }
        if (it % cfg.log_every == 0 || it == cfg.iterations) {
            const double d = log_row(it, wcount ? wsum / static_cast<double>(wcount) : 0.0, wmax);
            if (!std::isfinite(d))
                throw std::runtime_error("DMD training diverged: non-finite distance at iteration " +
                                         std::to_string(it));
            best = std::min(best, d);
            bad = d > 2.0 * best ? bad + 1 : 0;
            if (bad >= 100)
                throw std::runtime_error("DMD training diverged: distance above twice its best for 100 logs");
        }
    }
    return res;
}

AdversarialResult run_adversarial_demo(const AffineDenoiser& student0, const StageSchedule& schedule,
                                       const OrthoResampler& r, const GaussianSource& source,
                                       const SamplerConfig& preset, int iterations, Eigen::Index batch,
                                       double learning_rate, RngStream& rng) {
    if (iterations < 0 || batch < 1 || !(learning_rate > 0.0))
        throw std::invalid_argument("adversarial demo: bad iteration count, batch or learning rate");
    preset.validate(schedule);
    const int S = schedule.stages();
    AdversarialResult res;
    res.student = student0;
    std::vector<LinearDiscriminator> heads;
    for (int i = 0; i < S; ++i) heads.push_back({Vector::Zero(res.student.stage(i).grid.size()), 0.0});
    constexpr int kHeadUpdates = 4;
    constexpr double kHeadRate = 1e-2;
    for (int it = 1; it <= iterations; ++it) {
        AdversarialLogRow row;
        row.iteration = it;
        for (int i = 0; i < S; ++i) {
            const LevelInterval gl = schedule.global(i);
            const std::vector<double> lv = student_levels(schedule, i, preset);
            const double sigma = lv[static_cast<std::size_t>(rng.below(lv.size()))];
            Batch x0 = source.sample(batch, rng);
            for (int k = 0; k < i; ++k) x0 = down(r, x0);
            const Batch eps = gaussian_batch(x0.grid, batch, rng);
            const BoundaryBatch bb = boundary_batch(x0, eps, i, schedule, r);
            const StudentStep st = student_one_step(res.student, bb.y_n, i, sigma, gl.cleaner, schedule);
            LinearDiscriminator& D = heads[static_cast<std::size_t>(i)];
            for (int h = 0; h < kHeadUpdates; ++h) {
                const Vector sr = D.score(bb.y_c.values), sf = D.score(st.prediction.values);
                Vector gw = Vector::Zero(D.w.size());
                double gc = 0.0;
                for (Eigen::Index j = 0; j < batch; ++j) {
                    if (sr[j] < 1.0) {
                        gw -= bb.y_c.values.col(j);
                        gc -= 1.0;
                    }
                    if (sf[j] > -1.0) {
                        gw += st.prediction.values.col(j);
                        gc += 1.0;
                    }
                }
                D.w -= kHeadRate * gw / static_cast<double>(batch);
                D.c -= kHeadRate * gc / static_cast<double>(batch);
            }
            const Vector sr = D.score(bb.y_c.values), sf = D.score(st.prediction.values);
            row.discriminator_loss += hinge_discriminator_loss(sr, sf);
            row.generator_loss += hinge_generator_loss(sf, st.prediction, bb.y_c);
            // y_hat = x - h F, so dL/dF = h (lambda_adv w) - 2 lambda_rec h (y_hat - y_c).
            const double h = sigma - gl.cleaner;
            Matrix H = (-2.0 * 2.0 * h) * (st.prediction.values - bb.y_c.values);
            H.colwise() += h * D.w;
            const double eta = conditioning_level(schedule, i, sigma);
            AffineMap& m = res.student.stage(i).maps[static_cast<std::size_t>(res.student.bucket_of(i, eta))];
            const AffineGradient gr = chain_affine(H, st.x_sigma.values);
            m.A -= learning_rate * gr.dA;
            m.b -= learning_rate * gr.db;
            if (!m.A.allFinite() || !m.b.allFinite())
                throw std::runtime_error("adversarial demo diverged at iteration " + std::to_string(it));
        }
        res.log.push_back(row);
    }
    return res;
}

}  // namespace pyramid
