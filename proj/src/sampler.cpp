#include "pyramid/sampler.hpp"

#include "pyramid/forward.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace pyramid {

void SamplerConfig::validate(const StageSchedule& schedule) const {
    const int S = schedule.stages();
    if (grid == LevelGrid::Preset) {
        if (static_cast<int>(preset.size()) != S)
            throw std::invalid_argument("sampler preset lists " + std::to_string(preset.size()) +
                                        " stages, schedule has " + std::to_string(S));
        for (int i = 0; i < S; ++i) {
            const auto& lv = preset[static_cast<std::size_t>(i)];
            if (lv.empty()) throw std::invalid_argument("sampler preset stage " + std::to_string(i) + " is empty");
            for (std::size_t k = 0; k < lv.size(); ++k) {
                if (k > 0 && !(lv[k] < lv[k - 1]))
                    throw std::invalid_argument("sampler preset stage " + std::to_string(i) +
                                                ": levels must decrease strictly");
                if (schedule.owning_stage(lv[k]) != i) {
                    std::ostringstream os;
                    os << "sampler preset level " << lv[k] << " is not inside stage " << i;
                    throw std::invalid_argument(os.str());
                }
            }
        }
        return;
    }
    if (static_cast<int>(steps.size()) != S)
        throw std::invalid_argument("sampler steps list " + std::to_string(steps.size()) + " stages, schedule has " +
                                    std::to_string(S));
    for (int i = 0; i < S; ++i)
        if (steps[static_cast<std::size_t>(i)] < 1)
            throw std::invalid_argument("sampler needs at least one step in stage " + std::to_string(i));
    if (grid == LevelGrid::Shifted && !(shift > 0.0)) throw std::invalid_argument("sampler shift must be positive");
}

std::vector<int> parse_steps(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, '-')) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(tok, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("bad step list '" + text + "'");
        }
        if (used != tok.size() || v < 0) throw std::invalid_argument("bad step list '" + text + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("empty step list");
    std::reverse(out.begin(), out.end());
    return out;
}

std::string format_steps(const std::vector<int>& steps) {
    std::string s;
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        if (!s.empty()) s += '-';
        s += std::to_string(*it);
    }
    return s;
}

SamplerConfig preset_221_config() {
    SamplerConfig c;
    c.grid = SamplerConfig::LevelGrid::Preset;
    c.preset = preset_221_levels();
    c.steps.clear();
    for (const auto& lv : c.preset) c.steps.push_back(static_cast<int>(lv.size()));
    return c;
}

std::vector<double> stage_levels(const StageSchedule& schedule, int stage, const SamplerConfig& cfg) {
    schedule.require_stage(stage);
    const LevelInterval g = schedule.global(stage);
    std::vector<double> lv;
    if (cfg.grid == SamplerConfig::LevelGrid::Preset) {
        for (double eta : cfg.preset.at(static_cast<std::size_t>(stage)))
            lv.push_back(schedule.global_from_natural(eta, stage));
        // The listed entry level is the stage's noisier bound up to rounding.
        if (std::abs(lv.front() - g.noisier) < 1e-9) lv.front() = g.noisier;
    } else {
        const int k = cfg.steps.at(static_cast<std::size_t>(stage));
        for (int j = 0; j < k; ++j) {
            double rho = 1.0 - static_cast<double>(j) / k;
            if (cfg.grid == SamplerConfig::LevelGrid::Shifted) rho = shift_level(rho, cfg.shift);
            lv.push_back(j == 0 ? g.noisier : schedule.global_from_local(rho, stage));
        }
    }
    lv.push_back(g.cleaner);
    return lv;
}

double conditioning_level(const StageSchedule& schedule, int stage, double sigma) {
    const LevelInterval n = schedule.natural(stage);
    return std::clamp(schedule.natural_from_global(sigma, stage), n.cleaner, n.noisier);
}

Batch euler_stage(const VelocityModel& model, Batch x, int stage, const std::vector<double>& levels,
                  const StageSchedule& schedule, CallLog* log) {
    schedule.require_stage(stage);
    const LevelInterval g = schedule.global(stage);
    if (levels.empty()) throw std::invalid_argument("euler_stage: empty level list");
    for (std::size_t k = 0; k < levels.size(); ++k) {
        if (levels[k] < g.cleaner || levels[k] > g.noisier) {
            std::ostringstream os;
            os << "euler_stage: level " << levels[k] << " outside stage " << stage << " [" << g.cleaner << ", "
               << g.noisier << "]";
            throw std::invalid_argument(os.str());
        }
        if (k > 0 && !(levels[k] < levels[k - 1]))
            throw std::invalid_argument("euler_stage: levels must decrease strictly");
    }
    std::vector<double> lv = levels;
    if (lv.back() > g.cleaner) lv.push_back(g.cleaner);
    for (std::size_t k = 0; k + 1 < lv.size(); ++k) {
        const double eta = conditioning_level(schedule, stage, lv[k]);
        if (schedule.owning_stage(eta) != stage && !(eta == 0.0 && stage == 0))
            throw std::logic_error("euler_stage: conditioning level outside its stage");
        if (log) log->calls.emplace_back(stage, eta);
        const Batch f = model.predict(x, eta, stage);
        x.values -= (lv[k] - lv[k + 1]) * f.values;
    }
    return x;
}

Batch stage_transition(const Batch& x, int from, const StageSchedule& schedule, const OrthoResampler& r,
                       RngStream& rng, const UpsampleOptions& opt) {
    if (from < 1) throw std::invalid_argument("stage_transition: no finer stage below stage 0");
    schedule.require_stage(from);
    const double sc = schedule.global(from).cleaner;
    NoisyUpsampleBatch u = up_with_noise(r, x, sc, rng, opt);
    const double sn = schedule.global(from - 1).noisier;
    if (std::abs(u.tau - sn) > 1e-12) {
        std::ostringstream os;
        os.precision(17);
        os << "stage_transition: upsampled level " << u.tau << " does not match sigma_n = " << sn << " of stage "
           << from - 1;
        throw std::logic_error(os.str());
    }
    return std::move(u.value);
}

SampleResult sample_pyramidal(const VelocityModel& model, const StageSchedule& schedule, const OrthoResampler& r,
                              const Grid& fine, const SamplerConfig& cfg, Eigen::Index count, RngStream& rng) {
    cfg.validate(schedule);
    if (count < 1) throw std::invalid_argument("sample count must be positive");
    const int S = schedule.stages();
    if (schedule.global(S - 1).noisier != 1.0)
        throw std::invalid_argument("pyramidal sampling starts from pure noise: coarsest stage must end at 1");
    const std::vector<Grid> grids = stage_grids(fine, S, r);
    SampleResult res;
    CallLog* log = cfg.record ? &res.log : nullptr;
    Batch x = gaussian_batch(grids.back(), count, rng);
    for (int i = S - 1; i >= 0; --i) {
        x = euler_stage(model, std::move(x), i, stage_levels(schedule, i, cfg), schedule, log);
        if (cfg.record) res.intermediates.push_back(x);
        if (i > 0) x = stage_transition(x, i, schedule, r, rng);
    }
    res.samples = std::move(x);
    return res;
}

std::vector<double> conventional_levels(int steps, double shift) {
    if (steps < 1) throw std::invalid_argument("conventional sampler needs at least one step");
    std::vector<double> lv(static_cast<std::size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k) lv[static_cast<std::size_t>(k)] = shift_level(1.0 - static_cast<double>(k) / steps, shift);
    lv.front() = 1.0;
    lv.back() = 0.0;
    return lv;
}

Batch sample_conventional(const VelocityModel& model, const Grid& grid, int steps, Eigen::Index count,
                          RngStream& rng, double shift) {
    if (count < 1) throw std::invalid_argument("sample count must be positive");
    const std::vector<double> lv = conventional_levels(steps, shift);
    Batch x = gaussian_batch(grid, count, rng);
    for (std::size_t k = 0; k + 1 < lv.size(); ++k) {
        const Batch f = model.predict(x, lv[k], 0);
        x.values -= (lv[k] - lv[k + 1]) * f.values;
    }
    return x;
}

AffineMap probe_affine(const VelocityModel& model, const Grid& grid, double eta, int stage) {
    const auto n = static_cast<Eigen::Index>(grid.size());
    Matrix probe(n, n + 1);
    probe.col(0).setZero();
    probe.rightCols(n).setIdentity();
    const Matrix f = model.predict(Batch(grid, std::move(probe)), eta, stage).values;
    AffineMap m;
    m.b = f.col(0);
    m.A = f.rightCols(n).colwise() - m.b;
    return m;
}

namespace {

void euler_law(const VelocityModel& model, Moments& law, const Grid& grid, int stage, const std::vector<double>& lv,
               const std::function<double(double)>& eta_of) {
    const auto n = static_cast<Eigen::Index>(grid.size());
    for (std::size_t k = 0; k + 1 < lv.size(); ++k) {
        const AffineMap f = probe_affine(model, grid, eta_of(lv[k]), stage);
        const double d = lv[k] - lv[k + 1];
        const Matrix T = Matrix::Identity(n, n) - d * f.A;
        law.mean = Tensor(grid, T * law.mean.values() - d * f.b);
        law.cov = T * law.cov * T.transpose();
    }
}

Moments standard_law(const Grid& g) {
    const auto n = static_cast<Eigen::Index>(g.size());
    Moments m;
    m.mean = Tensor(g);
    m.cov = Matrix::Identity(n, n);
    return m;
}

}  // namespace

Moments exact_pyramidal_law(const VelocityModel& model, const StageSchedule& schedule, const OrthoResampler& r,
                            const Grid& fine, const SamplerConfig& cfg) {
    cfg.validate(schedule);
    const int S = schedule.stages();
    const std::vector<Grid> grids = stage_grids(fine, S, r);
    if (static_cast<Eigen::Index>(fine.size()) > kExplicitMatrixCap)
        throw std::invalid_argument("exact sampler law is limited to " + std::to_string(kExplicitMatrixCap) +
                                    " coordinates");
    Moments law = standard_law(grids.back());
    for (int i = S - 1; i >= 0; --i) {
        const Grid& g = grids[static_cast<std::size_t>(i)];
        euler_law(model, law, g, i, stage_levels(schedule, i, cfg),
                  [&](double sigma) { return conditioning_level(schedule, i, sigma); });
        if (i == 0) break;
        const Grid& to = grids[static_cast<std::size_t>(i) - 1];
        const Matrix Up = up_matrix(r, g);
        const Matrix Q = Up * down_matrix(r, to);
        const double sc = schedule.global(i).cleaner;
        const double gain = noisy_upsample_gain(r.omega(), sc);  // omega * rescale
        const double rs = gain / r.omega();
        const auto n = static_cast<Eigen::Index>(to.size());
        law.mean = Tensor(to, rs * (Up * law.mean.values()));
        law.cov = rs * rs * (Up * law.cov * Up.transpose()) +
                  gain * gain * sc * sc * (Matrix::Identity(n, n) - Q);
    }
    law.count = 0;
    return law;
}

Moments exact_conventional_law(const VelocityModel& model, const Grid& grid, int steps, double shift) {
    if (static_cast<Eigen::Index>(grid.size()) > kExplicitMatrixCap)
        throw std::invalid_argument("exact sampler law is limited to " + std::to_string(kExplicitMatrixCap) +
                                    " coordinates");
    Moments law = standard_law(grid);
    euler_law(model, law, grid, 0, conventional_levels(steps, shift), [](double s) { return s; });
    law.count = 0;
    return law;
}

}  // namespace pyramid
