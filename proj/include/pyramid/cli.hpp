#pragma once

// Run configuration and the pyrflow subcommands. See docs/config.md for the
// config grammar.

#include "pyramid/costmodel.hpp"
#include "pyramid/denoiser.hpp"
#include "pyramid/distill.hpp"
#include "pyramid/oracle.hpp"
#include "pyramid/resample.hpp"
#include "pyramid/sampler.hpp"
#include "pyramid/schedule.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace pyramid {

inline constexpr int kExitPass = 0;
inline constexpr int kExitCheckFailure = 1;
inline constexpr int kExitConfigError = 2;

// Bad config: the message starts with the dotted path of the offending key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ResamplerSpec {
    std::string kind = "haar";  // haar | daubechies2 | filters
    std::string axes = "THW";
    std::vector<double> lo, hi;  // filters only

    [[nodiscard]] OrthoResampler build() const;
};

struct SourceSpec {
    Grid grid{4, 4, 4, 1};
    double length_scale = 2.0;
    double mean = 0.0;
    double cov_scale = 1.0;  // multiplies the unit-variance covariance

    [[nodiscard]] GaussianSource build() const;
};

struct SamplerSpec {
    std::string steps = "20-20-10";
    std::string grid = "uniform";  // uniform | shifted | preset
    double shift = 5.0;
    Eigen::Index samples = 10000;
    int conventional_steps = 50;
    double conventional_shift = 1.0;
    std::string checkpoint;  // empty: the exact oracle

    [[nodiscard]] SamplerConfig build() const;
};

struct TrainSpec {
    TrainConfig config;
    bool teacher = true;  // conventional fit as the L_dist teacher
    Eigen::Index eval_samples = 20000;
};

struct DistillSpec {
    DmdConfig config;
    int adversarial_iterations = 0;
    Eigen::Index adversarial_batch = 64;
    double adversarial_learning_rate = 1e-3;
};

struct CostSpec {
    std::vector<std::string> schedules{"0-0-4", "0-0-2", "2-2-2", "2-2-1", "1-1-1"};
    std::string baseline = "0-0-50";
    std::string reference = "20-20-10";
    VideoShape video = kWanVideo;
};

struct SpectrumSpec {
    Eigen::Index samples = 2000;
    std::vector<double> sigmas{0.0, 0.25, 0.5, 0.75, 0.9};
    double delta = 0.1;
    int stage = 0;
    int points = 1001;
};

struct VerifySpec {
    Eigen::Index mc_samples = 100000;
    Grid grid{4, 4, 4, 1};
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string out = "out";
    ResamplerSpec resampler;
    std::vector<double> schedule_edges{0.0, 0.5858, 0.9412, 1.0};
    SourceSpec source;
    SamplerSpec sampler;
    TrainSpec train;
    DistillSpec distill;
    DiTConfig model;
    CostSpec cost;
    SpectrumSpec spectrum;
    VerifySpec verify;

    [[nodiscard]] StageSchedule schedule(double omega) const;
    // Everything except the resampler filter orthogonality, which verify
    // reports as a check. Throws ConfigError.
    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    // `base` resolves a model data file given by name. Throws ConfigError.
    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
};

// JSON with // and /* */ comments. Throws ConfigError.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text, const std::filesystem::path& base = {});

// Each command writes its reports and manifest.json under `out` and a short
// summary to `log`; the return value is the process exit code.
int cmd_verify(const RunConfig& c, const std::filesystem::path& out, std::ostream& log);
int cmd_sample(const RunConfig& c, const std::filesystem::path& out, std::ostream& log);
int cmd_train(const RunConfig& c, const std::filesystem::path& out, std::ostream& log);
int cmd_distill(const RunConfig& c, const std::filesystem::path& out, std::ostream& log);
int cmd_cost(const RunConfig& c, const std::filesystem::path& out, std::ostream& log);
int cmd_spectrum(const RunConfig& c, const std::filesystem::path& out, std::ostream& log);

// Dispatch by name; config errors become exit code 2 with the message on
// `err`, other failures exit code 1.
int run_command(const std::string& name, const RunConfig& c, const std::filesystem::path& out, std::ostream& log,
                std::ostream& err);

}  // namespace pyramid
