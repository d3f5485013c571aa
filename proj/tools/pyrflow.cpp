// pyrflow: verification, sampling, training, distillation, cost and spectrum
// runs over a config file. Exit codes: 0 pass, 1 check failure, 2 config error.

#include "pyramid/cli.hpp"
#include "pyramid/io.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

int main(int argc, char** argv) {
    CLI::App app{"Pyramidal flow matching toolkit"};
    app.set_version_flag("--version", pyramid::build_id());
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<long long> mc_samples;
    app.add_option("--config", config_path, "JSON config file (comments allowed)");
    app.add_option("--seed", seed, "override the config seed");
    app.add_option("--out", out, "output directory (default: config 'out')");
    app.add_option("--mc-samples", mc_samples,
                   "Monte Carlo sample count for verify, sample and spectrum")
        ->check(CLI::PositiveNumber);

    std::vector<std::string> schedules;
    app.add_subcommand("verify", "upsample-law, resampler and schedule checks");
    app.add_subcommand("sample", "pyramidal and conventional sampling with moment errors");
    app.add_subcommand("train", "conventional fit and pyramidal finetune of the affine denoiser");
    app.add_subcommand("distill", "DMD few-step distillation toward the 2-2-1 preset");
    app.add_subcommand("cost", "token and FLOPs table per stage schedule")
        ->add_option("schedules", schedules, "schedules such as 2-2-1 (replace cost.schedules)");
    app.add_subcommand("spectrum", "radial spectra of noised samples and the flatness bound");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : pyramid::kExitConfigError;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    pyramid::RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = pyramid::load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (out) cfg.out = *out;
        if (mc_samples) {
            cfg.verify.mc_samples = *mc_samples;
            cfg.sampler.samples = *mc_samples;
            cfg.spectrum.samples = *mc_samples;
        }
        if (!schedules.empty()) cfg.cost.schedules = schedules;
        cfg.validate();
    } catch (const pyramid::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return pyramid::kExitConfigError;
    }
    return pyramid::run_command(command, cfg, cfg.out, std::cout, std::cerr);
}
