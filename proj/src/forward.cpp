#include "pyramid/forward.hpp"

#include <stdexcept>

namespace pyramid {
namespace {

void check_rho(double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("local level must lie in (0, 1]");
}

}  // namespace

std::vector<Grid> stage_grids(const Grid& fine, int stages, const OrthoResampler& r) {
    require_valid(fine);
    if (stages < 1) throw std::invalid_argument("stage count must be positive");
    std::vector<Grid> grids{fine};
    for (int i = 1; i < stages; ++i) {
        if (!r.can_halve(grids.back()))
            throw std::invalid_argument("grid " + fine.str() + " cannot be halved " + std::to_string(stages - 1) +
                                        " times with a length-" + std::to_string(r.filter_length()) + " filter");
        grids.push_back(r.coarse(grids.back()));
    }
    return grids;
}

StageSignals stage_clean_signals(const Tensor& x0, const StageSchedule& schedule, const OrthoResampler& r) {
    stage_grids(x0.grid(), schedule.stages(), r);
    StageSignals s;
    s.levels.push_back(x0);
    for (int i = 1; i < schedule.stages(); ++i) s.levels.push_back(down(r, s.levels.back()));
    return s;
}

BoundaryPair boundary_pair_from(const Tensor& x0_stage, int stage, const Tensor& eps, const StageSchedule& schedule,
                                const OrthoResampler& r) {
    if (!(eps.grid() == x0_stage.grid()))
        throw std::invalid_argument("noise grid " + eps.grid().str() + " does not match stage grid " +
                                    x0_stage.grid().str());
    const LevelInterval g = schedule.global(stage);
    BoundaryPair p;
    p.stage = stage;
    p.eps = eps;
    p.sigma_c = g.cleaner;
    p.sigma_n = g.noisier;
    p.y_c = (1.0 - g.cleaner) * x0_stage + g.cleaner * eps;
    if (g.noisier == 1.0) {
        p.y_n = eps;
    } else {
        p.y_n = (1.0 - g.noisier) * project(r, x0_stage) + g.noisier * eps;
    }
    return p;
}

BoundaryPair boundary_pair(const StageSignals& signals, int stage, const Tensor& eps, const StageSchedule& schedule,
                           const OrthoResampler& r) {
    schedule.require_stage(stage);
    if (signals.levels.size() != static_cast<std::size_t>(schedule.stages()))
        throw std::invalid_argument("stage signal count does not match the schedule");
    const Tensor& x = signals.levels[static_cast<std::size_t>(stage)];
    if (stage + 1 < schedule.stages()) {
        // Use the stored child; identical to project(x) by construction.
        const LevelInterval g = schedule.global(stage);
        if (!(eps.grid() == x.grid())) throw std::invalid_argument("noise grid does not match stage grid");
        BoundaryPair p;
        p.stage = stage;
        p.eps = eps;
        p.sigma_c = g.cleaner;
        p.sigma_n = g.noisier;
        p.y_c = (1.0 - g.cleaner) * x + g.cleaner * eps;
        p.y_n = (1.0 - g.noisier) * up(r, signals.levels[static_cast<std::size_t>(stage) + 1]) + g.noisier * eps;
        return p;
    }
    return boundary_pair_from(x, stage, eps, schedule, r);
}

Tensor interpolate(const BoundaryPair& p, double rho) {
    check_rho(rho);
    return (1.0 - rho) * p.y_c + rho * p.y_n;
}

Tensor velocity_target(const BoundaryPair& p) {
    if (!(p.sigma_n > p.sigma_c)) throw std::invalid_argument("degenerate stage bounds");
    return (1.0 / (p.sigma_n - p.sigma_c)) * (p.y_n - p.y_c);
}

TrainingSample draw_training_sample(const Tensor& x0, int stage, RngStream& rng, const StageSchedule& schedule,
                                    const OrthoResampler& r) {
    schedule.require_stage(stage);
    const StageSignals sig = stage_clean_signals(x0, schedule, r);
    const Tensor& xs = sig.levels[static_cast<std::size_t>(stage)];
    TrainingSample s;
    s.rho = rng.uniform_open_closed();
    const Tensor eps = gaussian_tensor(xs.grid(), rng);
    const BoundaryPair p = boundary_pair(sig, stage, eps, schedule, r);
    s.sigma = schedule.global_from_local(s.rho, stage);
    s.eta = schedule.natural_from_global(s.sigma, stage);
    s.input = interpolate(p, s.rho);
    s.target = velocity_target(p);
    return s;
}

BoundaryBatch boundary_batch(const Batch& x0_stage, const Batch& eps, int stage, const StageSchedule& schedule,
                             const OrthoResampler& r) {
    if (!(eps.grid == x0_stage.grid) || eps.count() != x0_stage.count())
        throw std::invalid_argument("noise batch does not match the stage batch");
    const LevelInterval g = schedule.global(stage);
    BoundaryBatch b;
    b.stage = stage;
    b.sigma_c = g.cleaner;
    b.sigma_n = g.noisier;
    b.y_c = Batch(x0_stage.grid, (1.0 - g.cleaner) * x0_stage.values + g.cleaner * eps.values);
    if (g.noisier == 1.0) {
        b.y_n = eps;
    } else {
        b.y_n = Batch(x0_stage.grid, (1.0 - g.noisier) * project(r, x0_stage).values + g.noisier * eps.values);
    }
    return b;
}

Batch velocity_target(const BoundaryBatch& p) {
    if (!(p.sigma_n > p.sigma_c)) throw std::invalid_argument("degenerate stage bounds");
    return Batch(p.y_c.grid, (p.y_n.values - p.y_c.values) / (p.sigma_n - p.sigma_c));
}

Batch interpolate(const BoundaryBatch& p, double rho) {
    check_rho(rho);
    return Batch(p.y_c.grid, (1.0 - rho) * p.y_c.values + rho * p.y_n.values);
}

}  // namespace pyramid
