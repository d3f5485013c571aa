#pragma once

// Noise-level bookkeeping across stages.
//
// The level map f_w(s) = w s / (1 + (w - 1) s) takes a global level at stage
// i + 1 to the equivalent global level at stage i. It fixes 0 and 1 and
// composes multiplicatively: f_a(f_b(s)) = f_ab(s). The natural level of a
// stage-i global level is f applied i times, i.e. f_{w^i}.
//
// A schedule stores natural boundaries per stage; global and local levels are
// derived on demand. Stage i owns the half-open natural interval
// (eta_c, eta_n].

#include <string>
#include <vector>

namespace pyramid {

double child_to_parent_level(double sigma, double omega);
double parent_to_child_level(double sigma, double omega);
// Same Moebius family with the shift s in place of omega.
double shift_level(double sigma, double s);

struct LevelInterval {
    double cleaner = 0.0;
    double noisier = 1.0;
};

class StageSchedule {
public:
    // Stores the intervals as given; call validate() for the consistency
    // checks. Throws only for an empty list or non-positive omega.
    StageSchedule(double omega, std::vector<LevelInterval> natural);

    [[nodiscard]] int stages() const { return static_cast<int>(natural_.size()); }
    [[nodiscard]] double omega() const { return omega_; }
    [[nodiscard]] const std::vector<LevelInterval>& natural_intervals() const { return natural_; }

    [[nodiscard]] LevelInterval natural(int stage) const;
    [[nodiscard]] LevelInterval global(int stage) const;

    [[nodiscard]] double natural_from_global(double sigma, int stage) const;
    [[nodiscard]] double global_from_natural(double eta, int stage) const;
    // rho = (sigma - sigma_c) / (sigma_n - sigma_c), defined for
    // sigma_c < sigma <= sigma_n.
    [[nodiscard]] double local_from_global(double sigma, int stage) const;
    [[nodiscard]] double global_from_local(double rho, int stage) const;

    // Stage whose natural interval contains eta, or -1. eta = 0 is assigned
    // to stage 0.
    [[nodiscard]] int owning_stage(double eta) const;
    [[nodiscard]] bool contains(int stage, double eta) const;

    // Same natural cut points with a different level-map constant (used when
    // the resampler halves fewer than three axes).
    [[nodiscard]] StageSchedule with_omega(double omega) const;

    void require_stage(int stage) const;

private:
    double omega_;
    std::vector<LevelInterval> natural_;
};

// Three stages, omega = 2 sqrt 2, natural cut points 0.5858 and 0.9412. These
// are the four-place values of 2 - sqrt 2 and 16/17 (global cleaner bounds
// 1/3 and 2/3); the rounded values are kept so that the 2-2-1 preset levels,
// which start each stage at its noisier bound, land in the right stage.
StageSchedule default_schedule();
// Single stage on [0, 1]: conventional flow matching.
StageSchedule conventional_schedule();
// Builds contiguous intervals from S + 1 natural edges.
StageSchedule schedule_from_edges(double omega, const std::vector<double>& edges);

struct ScheduleReport {
    bool ok = true;
    int stage = -1;  // offending stage, -1 when ok
    std::string message;
};

ScheduleReport validate(const StageSchedule& s);

// Natural levels of the shipped 2-2-1 sampling preset, per stage (coarsest
// stage last), each list strictly decreasing.
std::vector<std::vector<double>> preset_221_levels();

}  // namespace pyramid
