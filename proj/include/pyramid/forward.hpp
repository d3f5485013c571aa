#pragma once

// Stage-wise forward process.
//
//   x_0^(i)  = down^i(x_0)
//   y_c^(i)  = (1 - sigma_c) x_0^(i) + sigma_c eps
//   y_n^(i)  = (1 - sigma_n) up(x_0^(i+1)) + sigma_n eps
//   x_sigma  = (1 - rho) y_c + rho y_n,  sigma = sigma_c + rho (sigma_n - sigma_c)
//   target   = (y_n - y_c) / (sigma_n - sigma_c)
//
// At the coarsest stage the child is one further halving of x_0^(S-1). When
// sigma_n = 1 the child term vanishes and is not computed, so grids that
// cannot be halved again are fine in that case.

#include "pyramid/core.hpp"
#include "pyramid/resample.hpp"
#include "pyramid/rng.hpp"
#include "pyramid/schedule.hpp"

#include <vector>

namespace pyramid {

struct StageSignals {
    std::vector<Tensor> levels;  // levels[i] = x_0^(i)
};

StageSignals stage_clean_signals(const Tensor& x0, const StageSchedule& schedule, const OrthoResampler& r);

// Stage grids for a stage-0 grid: grids[i] is the stage-i grid.
std::vector<Grid> stage_grids(const Grid& fine, int stages, const OrthoResampler& r);

struct BoundaryPair {
    int stage = 0;
    Tensor y_c;
    Tensor y_n;
    Tensor eps;
    double sigma_c = 0.0;
    double sigma_n = 1.0;
};

BoundaryPair boundary_pair(const StageSignals& signals, int stage, const Tensor& eps, const StageSchedule& schedule,
                           const OrthoResampler& r);
// Same construction from the stage-i clean signal alone.
BoundaryPair boundary_pair_from(const Tensor& x0_stage, int stage, const Tensor& eps, const StageSchedule& schedule,
                                const OrthoResampler& r);

Tensor interpolate(const BoundaryPair& p, double rho);
Tensor velocity_target(const BoundaryPair& p);

struct TrainingSample {
    Tensor input;
    double eta = 0.0;
    double sigma = 0.0;
    double rho = 0.0;
    Tensor target;
};

// rho ~ Uni(0, 1] (drawn as 1 - U[0,1)), then eps.
TrainingSample draw_training_sample(const Tensor& x0, int stage, RngStream& rng, const StageSchedule& schedule,
                                    const OrthoResampler& r);

// Column-wise versions over a batch of stage-i clean signals.
struct BoundaryBatch {
    int stage = 0;
    Batch y_c;
    Batch y_n;
    double sigma_c = 0.0;
    double sigma_n = 1.0;
};

BoundaryBatch boundary_batch(const Batch& x0_stage, const Batch& eps, int stage, const StageSchedule& schedule,
                             const OrthoResampler& r);
Batch velocity_target(const BoundaryBatch& p);
// One interpolation weight for the whole batch.
Batch interpolate(const BoundaryBatch& p, double rho);

}  // namespace pyramid
