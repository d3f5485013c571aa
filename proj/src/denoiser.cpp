#include "pyramid/denoiser.hpp"

#include "pyramid/forward.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pyramid {
namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kFormatName = "pyramid-affine-denoiser";
// Levels per bucket in the stratified finetune sampler.
constexpr int kStrata = 16;

nlohmann::json grid_json(const Grid& g) { return {g.frames, g.height, g.width, g.channels}; }

Grid grid_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4) throw std::invalid_argument("checkpoint grid must be [T, H, W, C]");
    return Grid{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

Batch down_batch(const OrthoResampler& r, Batch x, int times) {
    for (int i = 0; i < times; ++i) x = down(r, x);
    return x;
}

struct DivergenceGuard {
    double best = std::numeric_limits<double>::infinity();
    int bad = 0;

    void observe(double loss, int iteration) {
        if (!std::isfinite(loss))
            throw std::runtime_error("training diverged: non-finite loss at iteration " + std::to_string(iteration));
        if (loss < best) best = loss;
        bad = loss > 2.0 * best ? bad + 1 : 0;
        if (bad >= 100)
            throw std::runtime_error("training diverged: loss above twice its best for 100 iterations (at " +
                                     std::to_string(iteration) + ")");
    }
};

// Training data for one stage at one global level: inputs, velocity targets
// and (with a teacher) the carried cleaner-bound target.
struct LevelSamples {
    Matrix x;
    Matrix v;
    Matrix teacher;  // empty without a teacher
};

LevelSamples draw_level(const StageSchedule& schedule, const GaussianSource& source, const OrthoResampler& r,
                        int stage, double sigma, Eigen::Index n, RngStream& rng, const VelocityModel* teacher) {
    const LevelInterval g = schedule.global(stage);
    const double rho = (sigma - g.cleaner) / (g.noisier - g.cleaner);
    const Batch x0 = source.sample(n, rng);
    const Batch e0 = gaussian_batch(source.grid(), n, rng);
    const Batch x0i = down_batch(r, x0, stage);
    Batch ei = down_batch(r, e0, stage);
    ei.values *= std::pow(r.omega(), stage);
    const BoundaryBatch bb = boundary_batch(x0i, ei, stage, schedule, r);
    LevelSamples s;
    s.x = interpolate(bb, rho).values;
    s.v = velocity_target(bb).values;
    if (teacher) {
        const double eta = schedule.natural_from_global(sigma, stage);
        const double eta_c = schedule.natural(stage).cleaner;
        const Batch xeta(source.grid(), (1.0 - eta) * x0.values + eta * e0.values);
        const Batch f = teacher->predict(xeta, eta, 0);
        const Batch tilde(source.grid(), xeta.values - (eta - eta_c) * f.values);
        s.teacher = down_batch(r, tilde, stage).values * ((1.0 - g.cleaner) / (1.0 - eta_c));
    }
    return s;
}

}  // namespace

AffineDenoiser::AffineDenoiser(std::vector<StageBuckets> stages) : stages_(std::move(stages)) {
    for (std::size_t i = 0; i < stages_.size(); ++i) {
        const StageBuckets& s = stages_[i];
        require_valid(s.grid);
        const auto n = static_cast<Eigen::Index>(s.grid.size());
        if (s.edges.size() != s.maps.size() + 1 || s.maps.empty())
            throw std::invalid_argument("stage " + std::to_string(i) + ": need buckets + 1 edges");
        for (std::size_t k = 0; k + 1 < s.edges.size(); ++k)
            if (!(s.edges[k] < s.edges[k + 1]))
                throw std::invalid_argument("stage " + std::to_string(i) + ": bucket edges must increase");
        for (const auto& m : s.maps) {
            if (m.A.rows() != n || m.A.cols() != n || m.b.size() != n)
                throw std::invalid_argument("stage " + std::to_string(i) + ": map shape does not match grid");
            if (!m.A.allFinite() || !m.b.allFinite())
                throw std::invalid_argument("stage " + std::to_string(i) + ": non-finite parameters");
        }
    }
}

AffineDenoiser AffineDenoiser::zeros(const std::vector<Grid>& grids, const StageSchedule& schedule, int buckets) {
    if (static_cast<int>(grids.size()) != schedule.stages())
        throw std::invalid_argument("grid count does not match the schedule");
    std::vector<StageBuckets> st;
    for (int i = 0; i < schedule.stages(); ++i) {
        StageBuckets s;
        s.grid = grids[static_cast<std::size_t>(i)];
        s.edges = uniform_edges(schedule.natural(i), buckets);
        s.maps.assign(static_cast<std::size_t>(buckets), AffineMap::zero(static_cast<Eigen::Index>(s.grid.size())));
        st.push_back(std::move(s));
    }
    return AffineDenoiser(std::move(st));
}

const StageBuckets& AffineDenoiser::stage(int i) const {
    if (i < 0 || i >= stages()) throw std::invalid_argument("denoiser stage " + std::to_string(i) + " out of range");
    return stages_[static_cast<std::size_t>(i)];
}

StageBuckets& AffineDenoiser::stage(int i) {
    if (i < 0 || i >= stages()) throw std::invalid_argument("denoiser stage " + std::to_string(i) + " out of range");
    return stages_[static_cast<std::size_t>(i)];
}

int AffineDenoiser::bucket_of(int stage_index, double eta) const {
    const StageBuckets& s = stage(stage_index);
    if (eta == s.edges.front()) return 0;
    for (int k = 0; k < s.buckets(); ++k)
        if (eta > s.edges[static_cast<std::size_t>(k)] && eta <= s.edges[static_cast<std::size_t>(k) + 1]) return k;
    std::ostringstream os;
    os << "natural level " << eta << " lies in no bucket of stage " << stage_index << " ([" << s.edges.front()
       << ", " << s.edges.back() << "])";
    throw std::invalid_argument(os.str());
}

const AffineMap& AffineDenoiser::map_for(int stage_index, double eta) const {
    return stage(stage_index).maps[static_cast<std::size_t>(bucket_of(stage_index, eta))];
}

Batch AffineDenoiser::predict(const Batch& x, double eta, int stage_index) const {
    const StageBuckets& s = stage(stage_index);
    if (!(x.grid == s.grid))
        throw std::invalid_argument("denoiser input grid " + x.grid.str() + " does not match stage grid " +
                                    s.grid.str());
    return Batch(x.grid, map_for(stage_index, eta).apply(x.values));
}

nlohmann::json AffineDenoiser::to_json() const {
    nlohmann::json j;
    j["format"] = kFormatName;
    j["version"] = kFormatVersion;
    j["layout"] = "row-major (t, h, w, c); A row-major";
    nlohmann::json st = nlohmann::json::array();
    for (const auto& s : stages_) {
        nlohmann::json js;
        js["grid"] = grid_json(s.grid);
        js["edges"] = s.edges;
        nlohmann::json maps = nlohmann::json::array();
        for (const auto& m : s.maps) {
            std::vector<double> a(static_cast<std::size_t>(m.A.size()));
            for (Eigen::Index r = 0; r < m.A.rows(); ++r)
                for (Eigen::Index c = 0; c < m.A.cols(); ++c)
                    a[static_cast<std::size_t>(r * m.A.cols() + c)] = m.A(r, c);
            maps.push_back({{"A", a}, {"b", std::vector<double>(m.b.data(), m.b.data() + m.b.size())}});
        }
        js["buckets"] = maps;
        st.push_back(js);
    }
    j["stages"] = st;
    return j;
}

AffineDenoiser AffineDenoiser::from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != kFormatName)
        throw std::invalid_argument("not a denoiser checkpoint (missing format tag)");
    if (j.value("version", 0) != kFormatVersion)
        throw std::invalid_argument("unsupported denoiser checkpoint version " + std::to_string(j.value("version", 0)));
    std::vector<StageBuckets> st;
    for (const auto& js : j.at("stages")) {
        StageBuckets s;
        s.grid = grid_from_json(js.at("grid"));
        s.edges = js.at("edges").get<std::vector<double>>();
        const auto n = static_cast<Eigen::Index>(s.grid.size());
        for (const auto& jm : js.at("buckets")) {
            const auto a = jm.at("A").get<std::vector<double>>();
            const auto b = jm.at("b").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(a.size()) != n * n || static_cast<Eigen::Index>(b.size()) != n)
                throw std::invalid_argument("checkpoint map size does not match grid " + s.grid.str());
            AffineMap m{Matrix(n, n), Vector(n)};
            for (Eigen::Index r = 0; r < n; ++r)
                for (Eigen::Index c = 0; c < n; ++c) m.A(r, c) = a[static_cast<std::size_t>(r * n + c)];
            for (Eigen::Index r = 0; r < n; ++r) m.b[r] = b[static_cast<std::size_t>(r)];
            s.maps.push_back(std::move(m));
        }
        st.push_back(std::move(s));
    }
    return AffineDenoiser(std::move(st));
}

std::vector<double> uniform_edges(const LevelInterval& natural, int buckets) {
    if (buckets < 1) throw std::invalid_argument("bucket count must be positive");
    std::vector<double> e(static_cast<std::size_t>(buckets) + 1);
    for (int k = 0; k <= buckets; ++k)
        e[static_cast<std::size_t>(k)] = natural.cleaner + (natural.noisier - natural.cleaner) * k / buckets;
    e.back() = natural.noisier;
    return e;
}

void TrainConfig::validate() const {
    if (buckets < 1) throw std::invalid_argument("trainer.buckets must be positive");
    if (samples_per_bucket < 1) throw std::invalid_argument("trainer.samples_per_bucket must be positive");
    if (!(ridge >= 0.0)) throw std::invalid_argument("trainer.ridge must be nonnegative");
    if (!(distill_weight >= 0.0)) throw std::invalid_argument("trainer.distill_weight must be nonnegative");
    if (iterations < 0) throw std::invalid_argument("trainer.iterations must be nonnegative");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("trainer.learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("trainer.batch_size must be positive");
}

AffineMap ridge_fit(const Matrix& X, const Matrix& T, const Vector& weights, double ridge, const AffineMap& prior) {
    const Eigen::Index p = X.rows();
    const Eigen::Index n = X.cols();
    if (T.cols() != n || T.rows() != prior.A.rows() || prior.A.cols() != p)
        throw std::invalid_argument("ridge_fit: shape mismatch");
    if (weights.size() != 0 && weights.size() != n) throw std::invalid_argument("ridge_fit: weight count mismatch");
    Matrix Z(p + 1, n);
    Z.topRows(p) = X;
    Z.row(p).setOnes();
    Matrix Zw = Z;
    if (weights.size() != 0) Zw = Z * weights.asDiagonal();
    return ridge_solve(Zw * Z.transpose(), T * Zw.transpose(), ridge, prior);
}

AffineMap ridge_solve(const Matrix& G, const Matrix& C, double ridge, const AffineMap& prior) {
    const Eigen::Index p = G.rows() - 1;
    if (G.cols() != p + 1 || C.cols() != p + 1 || prior.A.cols() != p || prior.A.rows() != C.rows())
        throw std::invalid_argument("ridge_solve: shape mismatch");
    Matrix Gr = G;
    Gr.topLeftCorner(p, p).diagonal().array() += ridge;
    Matrix Cr = C;
    Cr.leftCols(p) += ridge * prior.A;
    const Eigen::LDLT<Matrix> ldlt(Gr);
    const Matrix W = ldlt.solve(Cr.transpose()).transpose();
    AffineMap f;
    f.A = W.leftCols(p);
    f.b = W.col(p);
    return f;
}

AffineDenoiser fit_conventional(const GaussianSource& source, const TrainConfig& cfg, RngStream& rng) {
    cfg.validate();
    const auto dim = source.dim();
    if (cfg.samples_per_bucket < dim + 1)
        throw std::invalid_argument("fit_conventional: need at least dim + 1 = " + std::to_string(dim + 1) +
                                    " samples per bucket");
    AffineDenoiser d = AffineDenoiser::zeros({source.grid()}, conventional_schedule(), cfg.buckets);
    StageBuckets& s = d.stage(0);
    for (int k = 0; k < s.buckets(); ++k) {
        const double lo = s.edges[static_cast<std::size_t>(k)], hi = s.edges[static_cast<std::size_t>(k) + 1];
        const Batch x0 = source.sample(cfg.samples_per_bucket, rng);
        const Batch e = gaussian_batch(source.grid(), cfg.samples_per_bucket, rng);
        Matrix X(dim, cfg.samples_per_bucket);
        for (Eigen::Index j = 0; j < cfg.samples_per_bucket; ++j) {
            const double sg = lo + (hi - lo) * rng.uniform_open_closed();
            X.col(j) = (1.0 - sg) * x0.values.col(j) + sg * e.values.col(j);
        }
        const Matrix V = e.values - x0.values;
        s.maps[static_cast<std::size_t>(k)] = ridge_fit(X, V, Vector(), cfg.ridge, AffineMap::zero(dim));
    }
    return d;
}

AffineDenoiser fit_conventional(const Batch& data, const TrainConfig& cfg, RngStream& rng) {
    cfg.validate();
    if (data.count() < 1) throw std::invalid_argument("fit_conventional: empty data batch");
    const auto dim = data.dim();
    if (cfg.samples_per_bucket < dim + 1)
        throw std::invalid_argument("fit_conventional: need at least dim + 1 = " + std::to_string(dim + 1) +
                                    " samples per bucket");
    AffineDenoiser d = AffineDenoiser::zeros({data.grid}, conventional_schedule(), cfg.buckets);
    StageBuckets& s = d.stage(0);
    for (int k = 0; k < s.buckets(); ++k) {
        const double lo = s.edges[static_cast<std::size_t>(k)], hi = s.edges[static_cast<std::size_t>(k) + 1];
        const Batch e = gaussian_batch(data.grid, cfg.samples_per_bucket, rng);
        Matrix X(dim, cfg.samples_per_bucket), V(dim, cfg.samples_per_bucket);
        for (Eigen::Index j = 0; j < cfg.samples_per_bucket; ++j) {
            const auto pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(data.count())));
            const double sg = lo + (hi - lo) * rng.uniform_open_closed();
            X.col(j) = (1.0 - sg) * data.values.col(pick) + sg * e.values.col(j);
            V.col(j) = e.values.col(j) - data.values.col(pick);
        }
        s.maps[static_cast<std::size_t>(k)] = ridge_fit(X, V, Vector(), cfg.ridge, AffineMap::zero(dim));
    }
    return d;
}

AffineDenoiser transfer_to_stages(const AffineDenoiser& conventional, const StageSchedule& schedule,
                                  const OrthoResampler& r, int buckets) {
    if (conventional.stages() != 1) throw std::invalid_argument("transfer_to_stages expects a one-stage model");
    const Grid fine = conventional.stage(0).grid;
    const std::vector<Grid> grids = stage_grids(fine, schedule.stages(), r);
    AffineDenoiser out = AffineDenoiser::zeros(grids, schedule, buckets);
    Matrix Dm = Matrix::Identity(static_cast<Eigen::Index>(fine.size()), static_cast<Eigen::Index>(fine.size()));
    Matrix Um = Dm;
    for (int i = 0; i < schedule.stages(); ++i) {
        if (i > 0) {
            const Grid& prev = grids[static_cast<std::size_t>(i) - 1];
            Dm = down_matrix(r, prev) * Dm;
            Um = Um * up_matrix(r, grids[static_cast<std::size_t>(i)]);
        }
        StageBuckets& s = out.stage(i);
        for (int k = 0; k < s.buckets(); ++k) {
            const AffineMap& src = conventional.map_for(0, s.midpoint(k));
            s.maps[static_cast<std::size_t>(k)] = {Dm * src.A * Um, Dm * src.b};
        }
    }
    return out;
}

AffineGradient pyramidal_loss_gradient(const AffineMap& f, const Matrix& X, const Matrix& T) {
    const double n = static_cast<double>(X.cols());
    const Matrix R = f.apply(X) - T;
    AffineGradient g;
    g.loss = R.squaredNorm() / n;
    g.dA = (2.0 / n) * R * X.transpose();
    g.db = (2.0 / n) * R.rowwise().sum();
    return g;
}

AffineDenoiser pyramidal_finetune(const AffineDenoiser& init, const StageSchedule& schedule,
                                  const GaussianSource& source, const OrthoResampler& r, const TrainConfig& cfg,
                                  RngStream& rng, const VelocityModel* teacher, FinetuneReport* report) {
    cfg.validate();
    const ScheduleReport vr = validate(schedule);
    if (!vr.ok) throw std::invalid_argument("pyramidal_finetune: invalid schedule: " + vr.message);
    if (init.stages() != schedule.stages()) throw std::invalid_argument("denoiser/schedule stage count mismatch");
    AffineDenoiser d = init;
    FinetuneReport rep;
    rep.stage_fit_loss.assign(static_cast<std::size_t>(schedule.stages()), 0.0);
    rep.stage_distill_loss.assign(static_cast<std::size_t>(schedule.stages()), 0.0);
    const double lambda = teacher ? cfg.distill_weight : 0.0;

    if (cfg.mode == TrainConfig::Mode::Refit) {
        for (int i = 0; i < schedule.stages(); ++i) {
            StageBuckets& s = d.stage(i);
            const auto dim = static_cast<Eigen::Index>(s.grid.size());
            const LevelInterval g = schedule.global(i);
            const Eigen::Index per = std::max<Eigen::Index>(1, cfg.samples_per_bucket / kStrata);
            const Eigen::Index n = per * kStrata;
            if (n < dim + 1)
                throw std::invalid_argument("pyramidal_finetune: need at least dim + 1 = " + std::to_string(dim + 1) +
                                            " samples per bucket");
            double fit_sum = 0.0, dist_sum = 0.0;
            for (int k = 0; k < s.buckets(); ++k) {
                const double sg_lo = schedule.global_from_natural(s.edges[static_cast<std::size_t>(k)], i);
                const double sg_hi = schedule.global_from_natural(s.edges[static_cast<std::size_t>(k) + 1], i);
                Matrix X(dim, n), V(dim, n), Teff(dim, n), Tt;
                Vector H(n), W(n);
                if (teacher) Tt.resize(dim, n);
                for (int q = 0; q < kStrata; ++q) {
                    const double sigma = sg_lo + (sg_hi - sg_lo) * (q + 0.5) / kStrata;
                    const LevelSamples ls = draw_level(schedule, source, r, i, sigma, per, rng, teacher);
                    const Eigen::Index off = q * per;
                    X.middleCols(off, per) = ls.x;
                    V.middleCols(off, per) = ls.v;
                    H.segment(off, per).setConstant(sigma - g.cleaner);
                    if (teacher) Tt.middleCols(off, per) = ls.teacher;
                }
                if (teacher && lambda > 0.0) {
                    // |F - v|^2 + lambda |x - h F - t|^2 = (1 + lambda h^2) |F - t_eff|^2 + const.
                    W = (1.0 + lambda * H.array().square()).matrix();
                    Teff = (V + ((X - Tt) * (lambda * H).asDiagonal())) * W.cwiseInverse().asDiagonal();
                } else {
                    W.setOnes();
                    Teff = V;
                }
                AffineMap& m = s.maps[static_cast<std::size_t>(k)];
                m = ridge_fit(X, Teff, W, cfg.ridge, m);
                const Matrix F = m.apply(X);
                fit_sum += (F - V).squaredNorm() / static_cast<double>(n);
                if (teacher) dist_sum += (X - F * H.asDiagonal() - Tt).squaredNorm() / static_cast<double>(n);
            }
            rep.stage_fit_loss[static_cast<std::size_t>(i)] = fit_sum / s.buckets();
            rep.stage_distill_loss[static_cast<std::size_t>(i)] = dist_sum / s.buckets();
        }
    } else {
        DivergenceGuard guard;
        for (int it = 0; it < cfg.iterations; ++it) {
            double total = 0.0;
            for (int i = 0; i < schedule.stages(); ++i) {
                const LevelInterval g = schedule.global(i);
                const double rho = rng.uniform_open_closed();
                const double sigma = g.cleaner + rho * (g.noisier - g.cleaner);
                const double eta = schedule.natural_from_global(sigma, i);
                const LevelSamples ls = draw_level(schedule, source, r, i, sigma, cfg.batch_size, rng, teacher);
                StageBuckets& s = d.stage(i);
                AffineMap& m = s.maps[static_cast<std::size_t>(d.bucket_of(i, eta))];
                const double h = sigma - g.cleaner;
                AffineGradient gr = pyramidal_loss_gradient(m, ls.x, ls.v);
                double loss = gr.loss;
                if (teacher && lambda > 0.0) {
                    // d/dF of lambda |x - h F - t|^2 is -2 lambda h (x - h F - t).
                    const Matrix resid = ls.x - h * m.apply(ls.x) - ls.teacher;
                    const double nb = static_cast<double>(ls.x.cols());
                    gr.dA += (-2.0 * lambda * h / nb) * resid * ls.x.transpose();
                    gr.db += (-2.0 * lambda * h / nb) * resid.rowwise().sum();
                    loss += lambda * resid.squaredNorm() / nb;
                    rep.stage_distill_loss[static_cast<std::size_t>(i)] = resid.squaredNorm() / nb;
                }
                rep.stage_fit_loss[static_cast<std::size_t>(i)] = gr.loss;
                m.A -= cfg.learning_rate * gr.dA;
                m.b -= cfg.learning_rate * gr.db;
                total += loss;
            }
            guard.observe(total, it);
            rep.iterations = it + 1;
        }
    }
    if (report) *report = rep;
    return d;
}

std::vector<StageLoss> eval_pyramidal_loss(const VelocityModel& model, const StageSchedule& schedule,
                                           const GaussianSource& source, const OrthoResampler& r, Eigen::Index n,
                                           RngStream& rng) {
    if (n < 1) throw std::invalid_argument("eval_pyramidal_loss: n must be positive");
    std::vector<StageLoss> out;
    const Eigen::Index blocks = std::min<Eigen::Index>(n, 64);
    const std::vector<Grid> grids = stage_grids(source.grid(), schedule.stages(), r);
    for (int i = 0; i < schedule.stages(); ++i) {
        const LevelInterval g = schedule.global(i);
        std::vector<double> block_means;
        double total = 0.0;
        Eigen::Index done = 0;
        for (Eigen::Index b = 0; b < blocks; ++b) {
            const Eigen::Index m = n / blocks + (b < n % blocks ? 1 : 0);
            const double rho = rng.uniform_open_closed();
            const double sigma = g.cleaner + rho * (g.noisier - g.cleaner);
            const LevelSamples ls = draw_level(schedule, source, r, i, sigma, m, rng, nullptr);
            const Matrix F = model.predict(Batch(grids[static_cast<std::size_t>(i)], ls.x),
                                           schedule.natural_from_global(sigma, i), i)
                                 .values;
            const double s = (F - ls.v).colwise().squaredNorm().sum();
            total += s;
            block_means.push_back(s / static_cast<double>(m));
            done += m;
        }
        StageLoss sl;
        sl.mean = total / static_cast<double>(done);
        if (block_means.size() > 1) {
            double mb = 0.0;
            for (double v : block_means) mb += v;
            mb /= static_cast<double>(block_means.size());
            double var = 0.0;
            for (double v : block_means) var += (v - mb) * (v - mb);
            var /= static_cast<double>(block_means.size() - 1);
            sl.standard_error = std::sqrt(var / static_cast<double>(block_means.size()));
        }
        out.push_back(sl);
    }
    return out;
}

std::vector<BucketLoss> exact_midpoint_losses(const AffineDenoiser& d, const PyramidOracle& oracle) {
    if (d.stages() != oracle.schedule().stages()) throw std::invalid_argument("denoiser/oracle stage mismatch");
    std::vector<BucketLoss> out;
    for (int i = 0; i < d.stages(); ++i) {
        const StageBuckets& s = d.stage(i);
        for (int k = 0; k < s.buckets(); ++k) {
            BucketLoss b;
            b.stage = i;
            b.bucket = k;
            b.eta = s.midpoint(k);
            const StageLaw law = oracle.law(i, b.eta);
            b.loss = affine_loss(law, s.maps[static_cast<std::size_t>(k)]);
            b.bayes = affine_loss(law, oracle.affine(i, b.eta));
            out.push_back(b);
        }
    }
    return out;
}

}  // namespace pyramid
