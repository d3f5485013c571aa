#include "pyramid/schedule.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pyramid {
namespace {

void check_level_args(double sigma, double omega, const char* what) {
    if (!(sigma >= 0.0 && sigma <= 1.0))
        throw std::invalid_argument(std::string(what) + ": level must lie in [0, 1]");
    if (!(omega > 0.0) || !std::isfinite(omega))
        throw std::invalid_argument(std::string(what) + ": constant must be positive and finite");
}

}  // namespace

double child_to_parent_level(double sigma, double omega) {
    check_level_args(sigma, omega, "child_to_parent_level");
    return omega * sigma / (1.0 + (omega - 1.0) * sigma);
}

double parent_to_child_level(double sigma, double omega) {
    check_level_args(sigma, omega, "parent_to_child_level");
    return sigma / (omega - (omega - 1.0) * sigma);
}

double shift_level(double sigma, double s) {
    check_level_args(sigma, s, "shift_level");
    return s * sigma / (1.0 + (s - 1.0) * sigma);
}

StageSchedule::StageSchedule(double omega, std::vector<LevelInterval> natural)
    : omega_(omega), natural_(std::move(natural)) {
    if (natural_.empty()) throw std::invalid_argument("schedule needs at least one stage");
    if (!(omega_ > 0.0) || !std::isfinite(omega_)) throw std::invalid_argument("schedule omega must be positive");
}

void StageSchedule::require_stage(int stage) const {
    if (stage < 0 || stage >= stages())
        throw std::invalid_argument("stage " + std::to_string(stage) + " out of range [0, " +
                                    std::to_string(stages()) + ")");
}

LevelInterval StageSchedule::natural(int stage) const {
    require_stage(stage);
    return natural_[static_cast<std::size_t>(stage)];
}

LevelInterval StageSchedule::global(int stage) const {
    const LevelInterval n = natural(stage);
    return {global_from_natural(n.cleaner, stage), global_from_natural(n.noisier, stage)};
}

double StageSchedule::natural_from_global(double sigma, int stage) const {
    require_stage(stage);
    if (stage == 0) {
        check_level_args(sigma, omega_, "natural_from_global");
        return sigma;
    }
    return child_to_parent_level(sigma, std::pow(omega_, stage));
}

double StageSchedule::global_from_natural(double eta, int stage) const {
    require_stage(stage);
    if (stage == 0) {
        check_level_args(eta, omega_, "global_from_natural");
        return eta;
    }
    return parent_to_child_level(eta, std::pow(omega_, stage));
}

double StageSchedule::local_from_global(double sigma, int stage) const {
    const LevelInterval g = global(stage);
    if (!(sigma > g.cleaner && sigma <= g.noisier)) {
        std::ostringstream os;
        os << "level " << sigma << " outside stage " << stage << " global interval (" << g.cleaner << ", "
           << g.noisier << "]";
        throw std::invalid_argument(os.str());
    }
    return (sigma - g.cleaner) / (g.noisier - g.cleaner);
}

double StageSchedule::global_from_local(double rho, int stage) const {
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("local level must lie in (0, 1]");
    const LevelInterval g = global(stage);
    return g.cleaner + rho * (g.noisier - g.cleaner);
}

bool StageSchedule::contains(int stage, double eta) const {
    const LevelInterval n = natural(stage);
    if (stage == 0 && eta == n.cleaner) return true;
    return eta > n.cleaner && eta <= n.noisier;
}

int StageSchedule::owning_stage(double eta) const {
    for (int i = 0; i < stages(); ++i)
        if (contains(i, eta)) return i;
    return -1;
}

StageSchedule StageSchedule::with_omega(double omega) const { return StageSchedule(omega, natural_); }

StageSchedule default_schedule() {
    return schedule_from_edges(2.0 * std::sqrt(2.0), {0.0, 0.5858, 0.9412, 1.0});
}

StageSchedule conventional_schedule() { return StageSchedule(1.0, {{0.0, 1.0}}); }

StageSchedule schedule_from_edges(double omega, const std::vector<double>& edges) {
    if (edges.size() < 2) throw std::invalid_argument("schedule needs at least two natural edges");
    std::vector<LevelInterval> v;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) v.push_back({edges[i], edges[i + 1]});
    return StageSchedule(omega, std::move(v));
}

ScheduleReport validate(const StageSchedule& s) {
    auto fail = [](int stage, const std::string& msg) { return ScheduleReport{false, stage, msg}; };
    const auto& nat = s.natural_intervals();
    for (int i = 0; i < s.stages(); ++i) {
        const LevelInterval n = nat[static_cast<std::size_t>(i)];
        if (!(n.cleaner >= 0.0 && n.noisier <= 1.0 && std::isfinite(n.cleaner) && std::isfinite(n.noisier)))
            return fail(i, "natural bounds of stage " + std::to_string(i) + " must lie in [0, 1]");
        if (!(n.cleaner < n.noisier))
            return fail(i, "stage " + std::to_string(i) + " has an empty natural interval");
    }
    if (nat.front().cleaner != 0.0) return fail(0, "stage 0 must start at natural level 0");
    if (nat.back().noisier != 1.0)
        return fail(s.stages() - 1, "coarsest stage must end at natural level 1");
    for (int i = 0; i + 1 < s.stages(); ++i) {
        const double hi = nat[static_cast<std::size_t>(i)].noisier;
        const double lo = nat[static_cast<std::size_t>(i) + 1].cleaner;
        std::ostringstream os;
        if (lo < hi) {
            os << "overlap: stage " << i << " ends at " << hi << " but stage " << i + 1 << " starts at " << lo;
            return fail(i + 1, os.str());
        }
        if (lo > hi) {
            os << "gap: stage " << i << " ends at " << hi << " but stage " << i + 1 << " starts at " << lo;
            return fail(i + 1, os.str());
        }
    }
    for (int i = 0; i < s.stages(); ++i) {
        const LevelInterval g = s.global(i);
        if (!(g.cleaner < g.noisier))
            return fail(i, "global bounds of stage " + std::to_string(i) + " are not increasing");
    }
    return {};
}

std::vector<std::vector<double>> preset_221_levels() { return {{0.5858}, {0.9412, 0.8645}, {1.0, 0.9863}}; }

}  // namespace pyramid
