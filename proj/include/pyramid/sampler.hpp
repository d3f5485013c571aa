#pragma once

// Backward process: Euler in global level inside each stage, corrective-noise
// upsampling between stages, and the conventional single-stage baseline.
// Everything works on batches; each column is an independent trajectory.

#include "pyramid/core.hpp"
#include "pyramid/moments.hpp"
#include "pyramid/resample.hpp"
#include "pyramid/rng.hpp"
#include "pyramid/schedule.hpp"
#include "pyramid/velocity.hpp"

#include <string>
#include <utility>
#include <vector>

namespace pyramid {

struct SamplerConfig {
    enum class LevelGrid { UniformGlobal, Shifted, Preset };
    std::vector<int> steps;  // indexed by stage, stage 0 first
    LevelGrid grid = LevelGrid::UniformGlobal;
    double shift = 5.0;                        // Shifted only, applied to the local level
    std::vector<std::vector<double>> preset;   // Preset only: natural levels per stage, decreasing
    bool record = false;

    void validate(const StageSchedule& schedule) const;
};

// "20-20-10" lists steps coarsest stage first; the result is indexed by stage.
std::vector<int> parse_steps(const std::string& text);
std::string format_steps(const std::vector<int>& steps);

// The 2-2-1 preset with the listed natural levels.
SamplerConfig preset_221_config();

// Decreasing global levels of one stage: the entry level sigma_n first, the
// cleaner bound sigma_c last.
std::vector<double> stage_levels(const StageSchedule& schedule, int stage, const SamplerConfig& cfg);

// Natural level handed to the denoiser for a global level of a stage.
// Clamped into the stage's natural interval against rounding.
double conditioning_level(const StageSchedule& schedule, int stage, double sigma);

struct CallLog {
    std::vector<std::pair<int, double>> calls;  // (stage, eta)
};

// x <- x - (sigma_k - sigma_k+1) F(x, eta(sigma_k)) over the given levels,
// which must decrease strictly inside [sigma_c, sigma_n]; a final step to
// sigma_c is appended when the list stops short of it.
Batch euler_stage(const VelocityModel& model, Batch x, int stage, const std::vector<double>& levels,
                  const StageSchedule& schedule, CallLog* log = nullptr);

// Corrective-noise upsample from the cleaner bound of stage `from` to the
// noisier bound of stage from - 1. Throws std::logic_error when the produced
// tau misses sigma_n of the target stage by more than 1e-12.
Batch stage_transition(const Batch& x, int from, const StageSchedule& schedule, const OrthoResampler& r,
                       RngStream& rng, const UpsampleOptions& opt = {});

struct SampleResult {
    Batch samples;                    // stage-0 grid
    std::vector<Batch> intermediates; // end of each stage, coarsest first (record only)
    CallLog log;                      // record only
};

SampleResult sample_pyramidal(const VelocityModel& model, const StageSchedule& schedule, const OrthoResampler& r,
                              const Grid& fine, const SamplerConfig& cfg, Eigen::Index count, RngStream& rng);

// Decreasing levels 1 = s_0 > ... > s_steps = 0 of the classical sampler,
// shift(1 - k / steps, shift).
std::vector<double> conventional_levels(int steps, double shift);

// Classical Euler flow-matching sampling on one grid; the model is queried as
// stage 0 with eta = sigma.
Batch sample_conventional(const VelocityModel& model, const Grid& grid, int steps, Eigen::Index count,
                          RngStream& rng, double shift = 1.0);

// Exact output law of the samplers for affine velocity models. Every Euler
// step and transition is affine plus independent Gaussian noise, so the mean
// and covariance propagate in closed form; this isolates discretization bias
// from Monte Carlo error. The model is probed at 0 and the unit vectors; for
// a non-affine model the result describes the affine map through those points.
AffineMap probe_affine(const VelocityModel& model, const Grid& grid, double eta, int stage);
Moments exact_pyramidal_law(const VelocityModel& model, const StageSchedule& schedule, const OrthoResampler& r,
                            const Grid& fine, const SamplerConfig& cfg);
Moments exact_conventional_law(const VelocityModel& model, const Grid& grid, int steps, double shift = 1.0);

}  // namespace pyramid
