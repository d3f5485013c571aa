#include "pyramid/cli.hpp"

#include "pyramid/forward.hpp"
#include "pyramid/io.hpp"
#include "pyramid/moments.hpp"
#include "pyramid/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

namespace pyramid {

using nlohmann::json;

namespace {

std::string num(double v) { return format_number(v); }
std::string num(Eigen::Index v) { return std::to_string(v); }
std::string num(int v) { return std::to_string(v); }

// --- verify ---

struct Check {
    std::string name;
    bool pass = false;
    json detail = json::object();
};

double max_abs(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

std::vector<Check> resampler_invariants(const OrthoResampler& r, const Grid& g, RngStream& rng) {
    constexpr double tol = 1e-12;
    std::vector<Check> out;
    auto add = [&](const std::string& name, double dev) {
        out.push_back({name, dev < tol, {{"deviation", dev}, {"tolerance", tol}}});
    };
    const Batch x = gaussian_batch(g, 4, rng);
    const Grid cg = r.coarse(g);
    const Batch y = gaussian_batch(cg, 4, rng);
    add("down_preserves_constants", max_abs(down(r, Batch(g, Matrix::Ones(x.dim(), 1))).values,
                                            Matrix::Ones(static_cast<Eigen::Index>(cg.size()), 1)));
    add("down_inverts_up", max_abs(down(r, up(r, y)).values, y.values));
    const Batch p = project(r, x);
    add("projection_idempotent", max_abs(project(r, p).values, p.values));
    double recon = 0.0, energy = 0.0;
    for (Eigen::Index j = 0; j < x.count(); ++j) {
        const Tensor t = x.sample(j);
        const Tensor bands = analyze(r, t);
        recon = std::max(recon, max_abs_diff(synthesize(r, bands), t));
        energy = std::max(energy, std::abs(bands.values().norm() - t.values().norm()));
    }
    add("perfect_reconstruction", recon);
    add("analysis_preserves_energy", energy);
    return out;
}

std::string verify_text(const std::vector<Check>& checks, const std::vector<std::string>& warnings, bool pass) {
    std::size_t w = 0;
    for (const Check& c : checks) w = std::max(w, c.name.size());
    std::ostringstream o;
    for (const Check& c : checks) {
        o << std::left << std::setw(static_cast<int>(w) + 2) << c.name << (c.pass ? "PASS" : "FAIL");
        std::vector<std::string> bits;
        for (const auto& [k, v] : c.detail.items())
            if (v.is_number_float()) bits.push_back(k + "=" + format_number(v.get<double>()));
            else if (v.is_number_integer() || v.is_boolean() || v.is_string()) bits.push_back(k + "=" + (v.is_string() ? v.get<std::string>() : v.dump()));
        for (const std::string& b : bits) o << "  " << b;
        o << "\n";
    }
    for (const std::string& s : warnings) o << "warning: " << s << "\n";
    o << (pass ? "all checks passed" : "CHECK FAILURE") << "\n";
    return o.str();
}

// Model for sampling: the exact oracle or a saved checkpoint.
std::unique_ptr<VelocityModel> sampling_model(const RunConfig& c, const GaussianSource& src, const StageSchedule& s,
                                              const OrthoResampler& r) {
    if (c.sampler.checkpoint.empty()) return std::make_unique<PyramidOracle>(src, s, r);
    std::ifstream f(c.sampler.checkpoint);
    if (!f) throw ConfigError("'sampler.checkpoint': cannot read " + c.sampler.checkpoint);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError("'sampler.checkpoint': " + std::string(e.what()));
    }
    auto d = std::make_unique<AffineDenoiser>(AffineDenoiser::from_json(j));
    if (d->stages() != s.stages()) throw ConfigError("'sampler.checkpoint' has a different stage count");
    if (d->stage(0).grid != src.grid()) throw ConfigError("'sampler.checkpoint' was trained on another grid");
    return d;
}

struct SamplerRow {
    std::string sampler;
    std::string steps;
    Moments mc;
    Moments exact;
};

json exact_errors(const Moments& m, const GaussianSource& src) {
    return {{"mean_l2", (m.mean.values() - src.mean()).norm()},
            {"cov_relative_frobenius", (m.cov - src.cov()).norm() / src.cov().norm()}};
}

}  // namespace

int cmd_verify(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
    RunOutput o(out);
    RngStream base(c.seed);
    std::vector<Check> checks;
    std::vector<std::string> warnings;

    if (c.resampler.kind == "filters") {
        const int n = std::max<int>(8, 2 * static_cast<int>(c.resampler.lo.size()));
        const double err = filter_bank_orthogonality_error(c.resampler.lo, c.resampler.hi, n);
        checks.push_back({"filter_bank_orthogonality", err < 1e-12, {{"deviation", err}, {"length", n}, {"tolerance", 1e-12}}});
    }
    bool pass = std::all_of(checks.begin(), checks.end(), [](const Check& k) { return k.pass; });
    if (pass) {
        const OrthoResampler r = c.resampler.build();
        const StageSchedule s = c.schedule(r.omega());
        const ScheduleReport sr = pyramid::validate(s);
        checks.push_back({"schedule_valid", sr.ok, {{"stages", s.stages()}, {"message", sr.message}}});
        if (s.stages() == 3) {
            const auto preset = preset_221_levels();
            bool ok = true;
            for (int i = 0; i < 3; ++i)
                for (double eta : preset[static_cast<std::size_t>(i)]) ok = ok && s.owning_stage(eta) == i;
            checks.push_back({"preset_levels_in_owning_stage", ok});
        }
        RngStream inv = base.substream(1);
        for (int i = 0; i + 1 < s.stages(); ++i) {
            Grid g = c.verify.grid;
            for (int k = 0; k < i; ++k) g = r.coarse(g);
            for (Check k : resampler_invariants(r, g, inv)) {
                k.name += "@stage" + std::to_string(i);
                checks.push_back(std::move(k));
            }
        }
        RngStream tr = base.substream(2);
        std::vector<Grid> grids = stage_grids(c.verify.grid, s.stages(), r);
        for (int from = 1; from < s.stages(); ++from) {
            const Batch x = gaussian_batch(grids[static_cast<std::size_t>(from)], 2, tr);
            const double tau = up_with_noise(r, x, s.global(from).cleaner, tr).tau;
            const double dev = std::abs(tau - s.global(from - 1).noisier);
            checks.push_back({"transition_tau@stage" + std::to_string(from),
                              dev <= 1e-12,
                              {{"tau", tau}, {"sigma_n", s.global(from - 1).noisier}, {"deviation", dev}}});
        }
        RngStream xr = base.substream(3);
        const Tensor x0 = gaussian_tensor(c.verify.grid, xr);
        RngStream mc = base.substream(4);
        for (int from = 1; from < s.stages(); ++from) {
            const UpsampleLawReport e = check_upsample_law_exact(r, s, from, x0);
            json ej = e.to_json();
            ej.erase("check");
            ej.erase("pass");
            checks.push_back({"upsample_law_exact@stage" + std::to_string(from), e.pass, ej});
            const UpsampleMcReport m = check_upsample_law_mc(r, s, from, x0, c.verify.mc_samples, mc);
            json mj = m.to_json();
            mj.erase("check");
            mj.erase("pass");
            checks.push_back({"upsample_law_mc@stage" + std::to_string(from), m.pass, mj});
            if (m.low_power)
                warnings.push_back("upsample_law_mc@stage" + std::to_string(from) + " is low-power: " +
                                   std::to_string(m.samples) + " samples < " + std::to_string(kMcLowPowerCount));
        }
        pass = std::all_of(checks.begin(), checks.end(), [](const Check& k) { return k.pass; });
    }
    json cj = json::array();
    for (const Check& k : checks) {
        json e = {{"name", k.name}, {"pass", k.pass}};
        for (const auto& [key, v] : k.detail.items()) e[key] = v;
        cj.push_back(e);
    }
    o.write_json("report.json", {{"pass", pass}, {"checks", cj}, {"warnings", warnings}});
    const std::string text = verify_text(checks, warnings, pass);
    o.write("report.txt", text);
    o.finish("verify", c.to_json(), c.seed);
    log << text;
    for (const Check& k : checks)
        if (!k.pass) log << "failed check: " << k.name << "\n";
    return pass ? kExitPass : kExitCheckFailure;
}

int cmd_sample(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
    const OrthoResampler r = c.resampler.build();
    const StageSchedule s = c.schedule(r.omega());
    const GaussianSource src = c.source.build();
    const SamplerConfig sc = c.sampler.build();
    const std::unique_ptr<VelocityModel> model = sampling_model(c, src, s, r);
    const Eigen::Index n = c.sampler.samples;
    RngStream base(c.seed);

    std::vector<SamplerRow> rows;
    {
        RngStream rng = base.substream(1);
        const SampleResult res = sample_pyramidal(*model, s, r, src.grid(), sc, n, rng);
        rows.push_back({"pyramidal", format_steps(sc.steps), empirical_moments(res.samples),
                        exact_pyramidal_law(*model, s, r, src.grid(), sc)});
    }
    const PyramidOracle conventional(src, conventional_schedule(), r);
    if (c.sampler.checkpoint.empty()) {
        RngStream rng = base.substream(2);
        const Batch b = sample_conventional(conventional, src.grid(), c.sampler.conventional_steps, n, rng,
                                            c.sampler.conventional_shift);
        rows.push_back({"conventional", std::to_string(c.sampler.conventional_steps), empirical_moments(b),
                        exact_conventional_law(conventional, src.grid(), c.sampler.conventional_steps,
                                               c.sampler.conventional_shift)});
    }

    RunOutput o(out);
    CsvTable t({"sampler", "steps", "samples", "mean_l2", "max_mean_z", "cov_frobenius", "cov_relative_frobenius",
                "exact_mean_l2", "exact_cov_relative_frobenius"});
    json summary = json::array();
    for (const SamplerRow& row : rows) {
        const MomentError e = moment_error(row.mc, src.mean(), src.cov());
        const json ex = exact_errors(row.exact, src);
        t.add_row({row.sampler, row.steps, num(row.mc.count), num(e.mean_l2), num(e.max_mean_z), num(e.cov_frobenius),
                   num(e.cov_relative_frobenius), num(ex["mean_l2"].get<double>()),
                   num(ex["cov_relative_frobenius"].get<double>())});
        summary.push_back({{"sampler", row.sampler},
                           {"steps", row.steps},
                           {"samples", row.mc.count},
                           {"mean_l2", e.mean_l2},
                           {"max_mean_z", e.max_mean_z},
                           {"cov_relative_frobenius", e.cov_relative_frobenius},
                           {"exact", ex}});
        log << row.sampler << " " << row.steps << ": max mean z " << num(e.max_mean_z) << ", cov rel. error "
            << num(e.cov_relative_frobenius) << " (exact law " << num(ex["cov_relative_frobenius"].get<double>())
            << ")\n";
    }
    o.write("moments.csv", t.str());

    std::vector<std::string> head{"coordinate", "mu", "variance"};
    for (const SamplerRow& row : rows) {
        head.push_back(row.sampler + "_mean");
        head.push_back(row.sampler + "_z");
    }
    if (rows.size() == 2) head.push_back("difference_z");
    CsvTable coords(head);
    for (Eigen::Index k = 0; k < src.dim(); ++k) {
        const double mu = src.mean()[k], var = src.cov()(k, k);
        std::vector<std::string> f{num(k), num(mu), num(var)};
        for (const SamplerRow& row : rows) {
            const double m = row.mc.mean.values()[k];
            f.push_back(num(m));
            f.push_back(num((m - mu) / std::sqrt(var / static_cast<double>(row.mc.count))));
        }
        if (rows.size() == 2) {
            const double se = std::sqrt(rows[0].mc.cov(k, k) / static_cast<double>(rows[0].mc.count) +
                                        rows[1].mc.cov(k, k) / static_cast<double>(rows[1].mc.count));
            f.push_back(num((rows[0].mc.mean.values()[k] - rows[1].mc.mean.values()[k]) / se));
        }
        coords.add_row(std::move(f));
    }
    o.write("coordinates.csv", coords.str());
    o.write("cov_error.ppm", ppm_heatmap(rows[0].mc.cov - src.cov()));
    o.write_json("summary.json", {{"source_grid", src.grid().str()}, {"samplers", summary}});
    o.finish("sample", c.to_json(), c.seed);
    return kExitPass;
}

int cmd_train(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
    const OrthoResampler r = c.resampler.build();
    const StageSchedule s = c.schedule(r.omega());
    const GaussianSource src = c.source.build();
    const TrainConfig& tc = c.train.config;
    RngStream base(c.seed);

    RngStream r1 = base.substream(1), r2 = base.substream(2);
    const AffineDenoiser conv = fit_conventional(src, tc, r1);
    const AffineDenoiser init = transfer_to_stages(conv, s, r, tc.buckets);
    FinetuneReport rep;
    const AffineDenoiser d =
        pyramidal_finetune(init, s, src, r, tc, r2, c.train.teacher ? &conv : nullptr, &rep);

    const PyramidOracle oracle(src, s, r);
    const auto before = exact_midpoint_losses(init, oracle);
    const auto after = exact_midpoint_losses(d, oracle);
    RngStream e1 = base.substream(3), e2 = base.substream(3);
    const auto mc = eval_pyramidal_loss(d, s, src, r, c.train.eval_samples, e1);
    const auto floor = eval_pyramidal_loss(oracle, s, src, r, c.train.eval_samples, e2);

    RunOutput o(out);
    o.write_json("checkpoint.json", d.to_json());
    o.write_json("conventional.json", conv.to_json());
    CsvTable b({"stage", "bucket", "eta", "bayes", "transfer_loss", "finetuned_loss", "finetuned_ratio"});
    for (std::size_t k = 0; k < after.size(); ++k)
        b.add_row({num(after[k].stage), num(after[k].bucket), num(after[k].eta), num(after[k].bayes),
                   num(before[k].loss), num(after[k].loss), num(after[k].loss / after[k].bayes)});
    o.write("bucket_losses.csv", b.str());
    CsvTable st({"stage", "fit_loss", "distill_loss", "mc_loss", "mc_standard_error", "oracle_mc_loss", "ratio"});
    json stages = json::array();
    for (std::size_t i = 0; i < mc.size(); ++i) {
        const double ratio = mc[i].mean / floor[i].mean;
        st.add_row({num(static_cast<int>(i)), num(rep.stage_fit_loss[i]), num(rep.stage_distill_loss[i]),
                    num(mc[i].mean), num(mc[i].standard_error), num(floor[i].mean), num(ratio)});
        stages.push_back({{"stage", i}, {"mc_loss", mc[i].mean}, {"oracle_mc_loss", floor[i].mean}, {"ratio", ratio}});
        log << "stage " << i << ": loss " << num(mc[i].mean) << " vs oracle " << num(floor[i].mean) << " (ratio "
            << num(ratio) << ")\n";
    }
    o.write("stage_losses.csv", st.str());
    o.write_json("summary.json", {{"stages", stages}, {"sgd_iterations", rep.iterations}});
    o.finish("train", c.to_json(), c.seed);
    return kExitPass;
}

int cmd_distill(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
    const OrthoResampler r = c.resampler.build();
    const StageSchedule s = c.schedule(r.omega());
    if (s.stages() != 3) throw ConfigError("'schedule.edges': distillation uses the three-stage 2-2-1 preset");
    const GaussianSource src = c.source.build();
    const DmdConfig& dc = c.distill.config;
    const SamplerConfig preset = preset_221_config();
    const PyramidOracle pyr(src, s, r);
    const ConventionalOracle conv(src, r, s.stages());
    const VelocityModel& teacher = dc.variant == DmdVariant::OT ? static_cast<const VelocityModel&>(conv) : pyr;
    const AffineDenoiser student = init_student(teacher, dc.variant, s, r, src.grid(), preset);
    RngStream base(c.seed);
    RngStream rng = base.substream(1);
    const DmdResult res = run_dmd_training(student, teacher, s, r, src, preset, dc, rng);

    RunOutput o(out);
    std::vector<std::string> head{"iteration"};
    for (int i = 0; i < s.stages(); ++i) head.push_back("fake_loss_stage" + std::to_string(i));
    for (const char* h : {"weight_mean", "weight_max", "mean_distance", "cov_distance", "distance"}) head.push_back(h);
    CsvTable t(head);
    PlotSeries curve{"moment distance", {}, {}};
    for (const DmdLogRow& row : res.log) {
        std::vector<std::string> f{num(row.iteration)};
        for (double v : row.fake_loss) f.push_back(num(v));
        f.resize(static_cast<std::size_t>(1 + s.stages()), "");
        for (double v : {row.weight_mean, row.weight_max, row.mean_distance, row.cov_distance, row.distance()})
            f.push_back(num(v));
        t.add_row(std::move(f));
        curve.x.push_back(row.iteration);
        curve.y.push_back(row.distance());
    }
    o.write("dmd_log.csv", t.str());
    o.write("dmd_distance.svg", svg_line_plot({curve}, {"DMD " + variant_name(dc.variant), "iteration",
                                                        "mean L2 + cov Frobenius", true}));
    o.write_json("student.json", res.student.to_json());
    const double d0 = res.log.front().distance(), d1 = res.log.back().distance();
    json summary = {{"variant", variant_name(dc.variant)},
                    {"iterations", dc.iterations},
                    {"initial_distance", d0},
                    {"final_distance", d1},
                    {"reduction", 1.0 - d1 / d0}};
    log << "DMD " << variant_name(dc.variant) << ": distance " << num(d0) << " -> " << num(d1) << "\n";
    if (c.distill.adversarial_iterations > 0) {
        RngStream ar = base.substream(2);
        const AdversarialResult adv =
            run_adversarial_demo(student, s, r, src, preset, c.distill.adversarial_iterations,
                                 c.distill.adversarial_batch, c.distill.adversarial_learning_rate, ar);
        CsvTable a({"iteration", "discriminator_loss", "generator_loss"});
        for (const AdversarialLogRow& row : adv.log)
            a.add_row({num(row.iteration), num(row.discriminator_loss), num(row.generator_loss)});
        o.write("adversarial_log.csv", a.str());
        summary["adversarial_final_distance"] = student_distance(adv.student, s, r, src, preset).distance();
    }
    o.write_json("summary.json", summary);
    o.finish("distill", c.to_json(), c.seed);
    return kExitPass;
}

int cmd_cost(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
    std::vector<std::string> names{c.cost.baseline, c.cost.reference};
    for (const std::string& sch : c.cost.schedules)
        if (std::find(names.begin(), names.end(), sch) == names.end()) names.push_back(sch);
    const ScheduleCost base = schedule_cost(c.cost.baseline, c.model, c.cost.video);

    CsvTable t({"schedule", "stage", "tokens", "step_tflops", "steps", "subtotal_tflops", "total_tflops",
                "ratio_vs_baseline"});
    json rows = json::array();
    for (const std::string& name : names) {
        const ScheduleCost sc = schedule_cost(name, c.model, c.cost.video);
        const double ratio = base.total_tflops / sc.total_tflops;
        for (const StageCost& st : sc.stages)
            t.add_row({name, num(st.stage), std::to_string(st.tokens), num(st.step_tflops), num(st.steps),
                       num(st.subtotal_tflops), num(sc.total_tflops), num(ratio)});
        json j = sc.to_json();
        j["ratio_vs_baseline"] = ratio;
        rows.push_back(j);
        log << std::left << std::setw(10) << name << " " << std::right << std::setw(10) << std::fixed
            << std::setprecision(1) << sc.total_tflops << " TFLOPs  ratio " << std::setprecision(3) << ratio << "\n";
        log.unsetf(std::ios::floatfield);
    }
    const auto fit = fit_stage_costs(published_cost_rows());
    const ScheduleCost one = schedule_cost("1-1-1", c.model, c.cost.video);
    RunOutput o(out);
    o.write("cost.csv", t.str());
    o.write_json("cost.json",
                 {{"model", c.model.to_json()},
                  {"baseline", c.cost.baseline},
                  {"schedules", rows},
                  {"published_rows_fit",
                   {{"c0", fit[0]},
                    {"c1_plus_c2", fit[1]},
                    {"model_c0", one.stages[0].step_tflops},
                    {"model_c1_plus_c2", one.stages[1].step_tflops + one.stages[2].step_tflops}}}});
    o.finish("cost", c.to_json(), c.seed);
    return kExitPass;
}

int cmd_spectrum(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
    const OrthoResampler r = c.resampler.build();
    const StageSchedule s = c.schedule(r.omega());
    const GaussianSource src = c.source.build();
    const GaussianSource st = src.downsampled(r, c.spectrum.stage);
    const Vector S = stationary_spectrum(st.grid(), st.cov());
    RngStream base(c.seed);
    RngStream rng = base.substream(1);

    CsvTable t({"sigma", "frequency", "count", "power", "exact_power"});
    std::vector<PlotSeries> series;
    for (double sigma : c.spectrum.sigmas) {
        const Batch x0 = st.sample(c.spectrum.samples, rng);
        const Batch eps = gaussian_batch(st.grid(), c.spectrum.samples, rng);
        const Batch x(st.grid(), (1.0 - sigma) * x0.values + sigma * eps.values);
        const RadialSpectrum mc = power_spectrum(x);
        const RadialSpectrum ex = radial_average(st.grid(), noised_spectrum(S, sigma));
        PlotSeries p{"sigma " + num(sigma), {}, {}};
        for (std::size_t k = 0; k < mc.power.size(); ++k) {
            t.add_row({num(sigma), num(mc.frequency[k]), num(mc.counts[k]), num(mc.power[k]),
                       num(k < ex.power.size() ? ex.power[k] : NAN)});
            p.x.push_back(mc.frequency[k]);
            p.y.push_back(mc.power[k]);
        }
        series.push_back(std::move(p));
    }
    const BoundaryRecommendation rec =
        recommend_noisier_bound(src, r, c.spectrum.stage, c.spectrum.delta, c.spectrum.points);
    const double sn = s.global(c.spectrum.stage).noisier;
    const double at_schedule = spectral_flatness_excess(radial_average(st.grid(), noised_spectrum(S, sn)));

    RunOutput o(out);
    o.write("spectrum.csv", t.str());
    o.write("spectrum.svg", svg_line_plot(series, {"radial power, stage " + std::to_string(c.spectrum.stage),
                                                   "frequency (cycles/sample)", "power", true}));
    json bj = rec.to_json();
    bj["delta"] = c.spectrum.delta;
    bj["stage"] = c.spectrum.stage;
    bj["schedule_sigma_n"] = sn;
    bj["excess_at_schedule_sigma_n"] = at_schedule;
    o.write_json("boundary.json", bj);
    CsvTable curve({"sigma", "excess"});
    for (std::size_t k = 0; k < rec.grid.size(); ++k) curve.add_row({num(rec.grid[k]), num(rec.excess_curve[k])});
    o.write("flatness.csv", curve.str());
    o.finish("spectrum", c.to_json(), c.seed);
    log << "stage " << c.spectrum.stage << ": flat within " << num(c.spectrum.delta) << " from sigma "
        << num(rec.sigma) << (rec.found ? "" : " (not reached)") << "; excess at schedule sigma_n " << num(sn)
        << " is " << num(at_schedule) << "\n";
    return kExitPass;
}

int run_command(const std::string& name, const RunConfig& c, const std::filesystem::path& out, std::ostream& log,
                std::ostream& err) {
    try {
        if (name == "verify") return cmd_verify(c, out, log);
        if (name == "sample") return cmd_sample(c, out, log);
        if (name == "train") return cmd_train(c, out, log);
        if (name == "distill") return cmd_distill(c, out, log);
        if (name == "cost") return cmd_cost(c, out, log);
        if (name == "spectrum") return cmd_spectrum(c, out, log);
        err << "unknown command '" << name << "'\n";
        return kExitConfigError;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        err << "error: " << name << ": " << e.what() << "\n";
        return kExitCheckFailure;
    }
}

}  // namespace pyramid
