// Acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is 0 when every criterion passes or fails only in a way listed
// as a known limitation (printed as "FAIL (known)"); any other failure exits 1.

#include "pyramid/costmodel.hpp"
#include "pyramid/denoiser.hpp"
#include "pyramid/distill.hpp"
#include "pyramid/forward.hpp"
#include "pyramid/io.hpp"
#include "pyramid/moments.hpp"
#include "pyramid/oracle.hpp"
#include "pyramid/sampler.hpp"
#include "pyramid/verify.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>

using namespace pyramid;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    bool known = false;  // failure documented as unattainable
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream o;
    o.precision(prec);
    o << v;
    return o.str();
}

std::string pct(double v) { return fmt(100.0 * v, 3) + "%"; }

// --- 1: exact upsample law ---

struct ResamplerCase {
    OrthoResampler r;
    Grid fine;
};

std::vector<ResamplerCase> dimension_matrix(const std::vector<Grid>& grids) {
    std::vector<ResamplerCase> out;
    const char* axes[] = {"W", "HW", "THW"};
    for (bool d2 : {false, true})
        for (int k = 0; k < 3; ++k) {
            const AxisSet a = AxisSet::parse(axes[k]);
            out.push_back({d2 ? OrthoResampler::daubechies2(a) : OrthoResampler::haar(a), grids[k]});
        }
    return out;
}

Verdict criterion1() {
    RngStream rng(101);
    double mean_dev = 0.0, cov_dev = 0.0;
    int cases = 0;
    bool pass = true;
    for (const auto& c : dimension_matrix({Grid{1, 1, 16, 1}, Grid{1, 16, 16, 1}, Grid{8, 8, 8, 1}})) {
        const StageSchedule s = default_schedule().with_omega(c.r.omega());
        const Tensor x0 = gaussian_tensor(c.fine, rng);
        for (int from : {1, 2}) {
            const UpsampleLawReport rep = check_upsample_law_exact(c.r, s, from, x0);
            mean_dev = std::max(mean_dev, rep.mean_deviation);
            cov_dev = std::max(cov_dev, rep.cov_deviation);
            pass = pass && rep.mean_deviation < 1e-9 && rep.cov_deviation < 1e-9;
            ++cases;
        }
    }
    return {pass, false,
            std::to_string(cases) + " cases (Haar, Daubechies-2 x 1-D/2-D/3-D x 2 transitions); max mean dev " +
                fmt(mean_dev) + ", max cov dev " + fmt(cov_dev) + " (< 1e-9)"};
}

// --- 2: corrective noise is necessary ---

Verdict criterion2() {
    RngStream rng(102);
    UpsampleOptions no_noise;
    no_noise.noise_scale = 0.0;
    double ok_z = 0.0, bad_z = INFINITY;
    bool pass = true;
    int cases = 0;
    const std::vector<ResamplerCase> cs{{OrthoResampler::haar(AxisSet::all()), Grid{4, 4, 4, 1}},
                                        {OrthoResampler::daubechies2(AxisSet::parse("HW")), Grid{1, 8, 8, 1}}};
    for (const auto& c : cs) {
        const StageSchedule s = default_schedule().with_omega(c.r.omega());
        const Tensor x0 = gaussian_tensor(c.fine, rng);
        for (int from : {1, 2}) {
            const UpsampleMcReport good = check_upsample_law_mc(c.r, s, from, x0, 100000, rng);
            const UpsampleMcReport bad = check_upsample_law_mc(c.r, s, from, x0, 100000, rng, no_noise);
            ok_z = std::max({ok_z, good.max_mean_z, good.max_diag_z, good.max_offdiag_z});
            bad_z = std::min(bad_z, bad.max_offdiag_z);
            pass = pass && good.pass && !bad.pass && bad.max_offdiag_z > kMcZThreshold;
            ++cases;
        }
    }
    return {pass, false,
            std::to_string(cases) + " transitions at n = 1e5; nu = sigma max |z| " + fmt(ok_z) +
                " (< 5), nu = 0 min off-diagonal z " + fmt(bad_z) + " (> 5)"};
}

// --- 3: level algebra ---

Verdict criterion3() {
    const StageSchedule s = default_schedule();
    const double g1 = s.global_from_natural(0.5858, 1), g2 = s.global_from_natural(0.9412, 2);
    bool pass = std::abs(g1 - 1.0 / 3.0) <= 1e-3 && std::abs(g2 - 2.0 / 3.0) <= 1e-3;
    const auto preset = preset_221_levels();
    const std::map<double, int> expected{{1.0, 2}, {0.9863, 2}, {0.9412, 1}, {0.8645, 1}, {0.5858, 0}};
    int found = 0;
    for (int i = 0; i < 3; ++i)
        for (double eta : preset[static_cast<std::size_t>(i)]) {
            const auto it = expected.find(eta);
            if (it != expected.end()) {
                ++found;
                pass = pass && it->second == i;
            }
            pass = pass && s.owning_stage(eta) == i && s.contains(i, eta);
        }
    pass = pass && found == 5;
    return {pass, false,
            "global(0.5858, stage 1) = " + fmt(g1, 6) + ", global(0.9412, stage 2) = " + fmt(g2, 6) + "; " +
                std::to_string(found) + "/5 preset levels in their owning stage"};
}

// --- 4: transition consistency ---

Verdict criterion4() {
    const auto r = OrthoResampler::haar(AxisSet::all());
    const StageSchedule s = default_schedule();
    const auto grids = stage_grids(Grid{4, 4, 4, 1}, 3, r);
    RngStream rng(104);
    double worst = 0.0;
    bool pass = true;
    for (int from = 1; from < 3; ++from) {
        const Batch x = gaussian_batch(grids[static_cast<std::size_t>(from)], 4, rng);
        const double tau = up_with_noise(r, x, s.global(from).cleaner, rng).tau;
        worst = std::max(worst, std::abs(tau - s.global(from - 1).noisier));
        try {
            (void)stage_transition(x, from, s, r, rng);
        } catch (const std::logic_error&) {
            pass = false;
        }
    }
    pass = pass && worst <= 1e-12;
    return {pass, false, "max |tau - sigma_n| over both transitions " + fmt(worst) + " (<= 1e-12)"};
}

// --- 5 and 6: sampling ---

GaussianSource sampling_source() {
    const Grid g{4, 8, 8, 1};
    const GaussianSource unit = make_smooth_gaussian(g, 10.0, 0.5);
    return GaussianSource(g, unit.mean(), 0.1 * unit.cov(), 10.0);
}

double rel_frob(const Matrix& c, const Matrix& ref) { return (c - ref).norm() / ref.norm(); }

struct SampleCheck {
    MomentError err;
    Moments m;
    double exact_cov = 0.0;
};

SampleCheck pyramidal_check(const VelocityModel& model, const GaussianSource& src, const StageSchedule& s,
                            const OrthoResampler& r, const SamplerConfig& sc, Eigen::Index n, RngStream& rng) {
    SampleCheck out;
    out.m = empirical_moments(sample_pyramidal(model, s, r, src.grid(), sc, n, rng).samples);
    out.err = moment_error(out.m, src.mean(), src.cov());
    out.exact_cov = rel_frob(exact_pyramidal_law(model, s, r, src.grid(), sc).cov, src.cov());
    return out;
}

Verdict criterion5() {
    const GaussianSource src = sampling_source();
    const auto r = OrthoResampler::haar(AxisSet::all());
    const StageSchedule s = default_schedule();
    const PyramidOracle oracle(src, s, r);
    const PyramidOracle conventional(src, conventional_schedule(), r);
    const Eigen::Index n = 10000;
    SamplerConfig sc;
    sc.steps = parse_steps("20-20-10");
    RngStream rp(105, 1), rc(105, 2);
    const SampleCheck p = pyramidal_check(oracle, src, s, r, sc, n, rp);
    SampleCheck c;
    c.m = empirical_moments(sample_conventional(conventional, src.grid(), 50, n, rc));
    c.err = moment_error(c.m, src.mean(), src.cov());
    c.exact_cov = rel_frob(exact_conventional_law(conventional, src.grid(), 50).cov, src.cov());

    // Agreement of the two estimates: per-coordinate mean z and the
    // covariance gap against its Monte Carlo scale, E|C_hat - C|_F^2 =
    // (tr^2 + |C|_F^2) / n per estimate.
    double mean_gap_z = 0.0;
    for (Eigen::Index k = 0; k < src.dim(); ++k) {
        const double se = std::sqrt((p.m.cov(k, k) + c.m.cov(k, k)) / static_cast<double>(n));
        mean_gap_z = std::max(mean_gap_z, std::abs(p.m.mean.values()[k] - c.m.mean.values()[k]) / se);
    }
    const double tr = src.cov().trace(), fro = src.cov().norm();
    const double cov_scale = std::sqrt(2.0 * (tr * tr + fro * fro) / static_cast<double>(n));
    const double cov_gap = (p.m.cov - c.m.cov).norm() / cov_scale;
    const bool agree = mean_gap_z < 4.0 && cov_gap < 3.0;

    // Refined steps: the exact-law bias shrinks under the bound.
    SamplerConfig fine;
    fine.steps = {200, 200, 200};
    const double refined_p = rel_frob(exact_pyramidal_law(oracle, s, r, src.grid(), fine).cov, src.cov());
    const double refined_c = rel_frob(exact_conventional_law(conventional, src.grid(), 400).cov, src.cov());

    const bool mean_ok = p.err.max_mean_z < 4.0 && c.err.max_mean_z < 4.0;
    const bool cov_ok = p.err.cov_relative_frobenius < 0.05 && c.err.cov_relative_frobenius < 0.05;
    const bool refined_ok = refined_p < 0.05 && refined_c < 0.05;
    Verdict v;
    v.pass = mean_ok && cov_ok && agree;
    // Known: Euler at 20-20-10 / 50 steps carries a covariance bias above
    // 5% for every source; only the covariance bound may fail for that reason.
    v.known = !v.pass && mean_ok && agree && !cov_ok && refined_ok && p.exact_cov >= 0.05 && c.exact_cov >= 0.05;
    v.detail = "mean max z " + fmt(p.err.max_mean_z) + " / " + fmt(c.err.max_mean_z) + " (< 4); cov rel err " +
               pct(p.err.cov_relative_frobenius) + " / " + pct(c.err.cov_relative_frobenius) +
               " (< 5%), exact Euler law " + pct(p.exact_cov) + " / " + pct(c.exact_cov) +
               "; agreement mean z " + fmt(mean_gap_z) + ", cov gap " + fmt(cov_gap) + " MC units; " +
               "200-200-200 / 400-step exact law " + pct(refined_p) + " / " + pct(refined_c);
    return v;
}

Verdict criterion6() {
    const GaussianSource src = sampling_source();
    const auto r = OrthoResampler::haar(AxisSet::all());
    const StageSchedule s = default_schedule();
    const PyramidOracle oracle(src, s, r);
    // 32 level buckets: in the near-null directions of this smooth source the
    // optimal map grows like 1/eta, so the first bucket keeps a fixed excess
    // that more buckets dilute (8 buckets: 1.09 on stage 0).
    TrainConfig cfg;
    cfg.buckets = 32;
    RngStream r1(106, 1), r2(106, 2), r3(106, 3);
    const AffineDenoiser conv = fit_conventional(src, cfg, r1);
    const AffineDenoiser init = transfer_to_stages(conv, s, r, cfg.buckets);
    const AffineDenoiser d = pyramidal_finetune(init, s, src, r, cfg, r2, &conv);

    // Exact stage loss against the floor, summed over bucket midpoints.
    std::array<double, 3> loss{}, bayes{};
    for (const BucketLoss& b : exact_midpoint_losses(d, oracle)) {
        loss[static_cast<std::size_t>(b.stage)] += b.loss;
        bayes[static_cast<std::size_t>(b.stage)] += b.bayes;
    }
    double worst = 0.0;
    std::string ratios, averaged;
    for (int i = 0; i < 3; ++i) {
        const double ratio = loss[static_cast<std::size_t>(i)] / bayes[static_cast<std::size_t>(i)];
        worst = std::max(worst, ratio - 1.0);
        ratios += (i ? ", " : "") + fmt(ratio, 5);
        // For reference: the same ratio averaged over the whole stage
        // interval, which also charges the within-bucket level mismatch.
        const LevelInterval g = s.global(i);
        const int q = 48;
        double l = 0.0, bo = 0.0;
        for (int k = 0; k < q; ++k) {
            const double sigma = g.cleaner + (g.noisier - g.cleaner) * (k + 0.5) / q;
            const double eta = s.natural_from_global(sigma, i);
            l += affine_loss(oracle.law(i, eta), d.map_for(i, eta));
            bo += oracle.bayes_mse(i, eta);
        }
        averaged += (i ? ", " : "") + fmt(l / bo, 5);
    }
    SamplerConfig sc;
    sc.steps = parse_steps("20-20-10");
    const SampleCheck p = pyramidal_check(d, src, s, r, sc, 10000, r3);
    const bool pass = worst < 0.05 && p.err.max_mean_z < 4.0 && p.err.cov_relative_frobenius < 0.10;
    return {pass, false,
            "bucket-midpoint loss / Bayes " + ratios + " (< 1.05; level-averaged " + averaged + "); 20-20-10 samples max mean z " + fmt(p.err.max_mean_z) +
                " (< 4), cov rel err " + pct(p.err.cov_relative_frobenius) + " (< 10%, exact law " +
                pct(p.exact_cov) + ")"};
}

// --- 7: DMD algebra ---

Verdict criterion7() {
    const Grid grid{4, 4, 4, 1};
    const auto r = OrthoResampler::haar(AxisSet::all());
    const StageSchedule s = default_schedule();
    const auto grids = stage_grids(grid, 3, r);
    RngStream rng(107);

    double delta_dev = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int stage = static_cast<int>(rng.below(2));  // the coarsest stage has no projection
        const Grid g = grids[static_cast<std::size_t>(stage)];
        const Batch x0 = gaussian_batch(g, 1, rng), eps = gaussian_batch(g, 1, rng);
        const Renoised rn = renoise_pyramidal(x0, stage, rng.uniform(), eps, s, r);
        const Batch d = delta_combination(rn.y_c, rn.y_n, stage, s, r);
        const LevelInterval gl = s.global(stage);
        const Matrix rhs = (gl.noisier - gl.cleaner) * project(r, x0).values;
        delta_dev = std::max(delta_dev, (project(r, d).values - rhs).cwiseAbs().maxCoeff());
    }

    double eps_dev = 0.0;
    for (int stage = 0; stage < 3; ++stage) {
        const Grid g = grids[static_cast<std::size_t>(stage)];
        const Batch x0 = gaussian_batch(g, 16, rng), eps = gaussian_batch(g, 16, rng);
        const BoundaryBatch bb = boundary_batch(x0, eps, stage, s, r);
        const Batch f = velocity_target(bb);
        for (int k = 1; k < 20; ++k) {
            const double rho = k / 20.0;
            const Batch x = interpolate(bb, rho);
            const Batch e = epsilon_estimate(f, x, stage, s.global_from_local(rho, stage), s, r);
            eps_dev = std::max(eps_dev, (e.values - eps.values).cwiseAbs().maxCoeff());
        }
    }

    double sum_dev = 0.0, min_weight = INFINITY;
    for (int stage = 0; stage < 3; ++stage) {
        const LevelInterval g = s.global(stage);
        for (int k = 0; k <= 200; ++k) {
            const double sp = g.cleaner + (g.noisier - g.cleaner) * k / 200.0;
            const DmdWeights w = dmd_weights(DmdVariant::PT, g.cleaner, g.noisier, sp);
            sum_dev = std::max({sum_dev, std::abs(w.beta1 + w.beta2 - 1.0), std::abs(w.gamma1 + w.gamma2 - 1.0)});
            min_weight = std::min({min_weight, w.beta1, w.beta2, w.gamma1, w.gamma2});
        }
    }

    // Finite differences of the DMD surrogate: a scalar instance and a
    // four-coordinate instance with PT mixing.
    auto fd_error = [&](AffineMap m, DmdTerms t) {
        const AffineGradient gr = dmd_gradient(m, t);
        const double h = 1e-6;
        double worst = 0.0;
        auto rel = [](double fd, double g) { return std::abs(fd - g) / std::max(std::abs(g), 1e-8); };
        for (Eigen::Index i = 0; i < m.A.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.A.cols(); ++j) {
                AffineMap a = m, b = m;
                a.A(i, j) += h;
                b.A(i, j) -= h;
                worst = std::max(worst, rel((dmd_gradient(a, t).loss - dmd_gradient(b, t).loss) / (2 * h), gr.dA(i, j)));
            }
            AffineMap a = m, b = m;
            a.b[i] += h;
            b.b[i] -= h;
            worst = std::max(worst, rel((dmd_gradient(a, t).loss - dmd_gradient(b, t).loss) / (2 * h), gr.db[i]));
        }
        return worst;
    };
    double fd = 0.0;
    {
        AffineMap m{Matrix::Constant(1, 1, 0.7), Vector::Constant(1, -0.2)};
        DmdTerms t;
        t.x_sigma = Matrix(1, 5);
        t.diff = Matrix(1, 5);
        rng.fill_normal(t.x_sigma);
        rng.fill_normal(t.diff);
        t.weight = Vector::Constant(5, 1.3);
        t.mix = dmd_weights(DmdVariant::OT, 0.2, 0.6, 0.4);
        fd = std::max(fd, fd_error(m, t));
    }
    const auto hw = OrthoResampler::haar(AxisSet::parse("HW"));
    const Grid g4{1, 2, 2, 1};
    const Matrix P = up_matrix(hw, hw.coarse(g4)) * down_matrix(hw, g4);
    {
        AffineMap m{Matrix(4, 4), Vector(4)};
        rng.fill_normal(m.A);
        rng.fill_normal(m.b);
        DmdTerms t;
        t.x_sigma = Matrix(4, 6);
        t.diff = Matrix(4, 6);
        rng.fill_normal(t.x_sigma);
        rng.fill_normal(t.diff);
        t.weight = Vector(6);
        for (Eigen::Index j = 0; j < 6; ++j) t.weight[j] = 0.5 + rng.uniform();
        t.mix = dmd_weights(DmdVariant::PT, 0.3, 0.7, 0.45);
        t.projection = &P;
        fd = std::max(fd, fd_error(m, t));
    }
    const bool pass = delta_dev <= 1e-12 && eps_dev <= 1e-10 && sum_dev < 1e-12 && min_weight >= 0.0 && fd < 1e-4;
    return {pass, false,
            "Delta dev " + fmt(delta_dev) + " (<= 1e-12, 1000 trials); eps dev " + fmt(eps_dev) +
                " (<= 1e-10); weight sums off by " + fmt(sum_dev) + ", min weight " + fmt(min_weight) +
                "; FD rel err " + fmt(fd) + " (< 1e-4)"};
}

// --- 8: DMD training ---

Verdict criterion8() {
    const Grid grid{4, 4, 4, 1};
    const auto r = OrthoResampler::haar(AxisSet::all());
    const StageSchedule s = default_schedule();
    const GaussianSource src = make_smooth_gaussian(grid, 2.0, 0.5);
    const SamplerConfig preset = preset_221_config();
    const PyramidOracle pyr(src, s, r);
    const ConventionalOracle conv(src, r, 3);
    bool pass = true;
    std::string detail;
    for (DmdVariant v : {DmdVariant::OT, DmdVariant::PT}) {
        const auto t0 = std::chrono::steady_clock::now();
        const VelocityModel& teacher = v == DmdVariant::OT ? static_cast<const VelocityModel&>(conv) : pyr;
        const AffineDenoiser st = init_student(teacher, v, s, r, grid, preset);
        DmdConfig c;
        c.variant = v;
        c.iterations = 2000;
        c.log_every = 100;
        RngStream rng(108, static_cast<std::uint64_t>(v));
        const DmdResult res = run_dmd_training(st, teacher, s, r, src, preset, c, rng);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const double d0 = res.log.front().distance(), d1 = res.log.back().distance();
        const double red = 1.0 - d1 / d0;
        pass = pass && red >= 0.5 && secs < 600.0 && res.log.back().iteration == 2000;
        detail += (detail.empty() ? "" : "; ") + variant_name(v) + " " + fmt(d0) + " -> " + fmt(d1) + " (" +
                  pct(red) + " reduction, " + fmt(secs, 3) + " s)";
    }
    return {pass, false, detail + " (>= 50%, < 600 s each)"};
}

// --- 9: cost model ---

Verdict criterion9() {
    const DiTConfig c;
    const auto fit = fit_stage_costs(published_cost_rows());
    const ScheduleCost one = schedule_cost("1-1-1", c, kWanVideo);
    const double c0 = one.stages[0].step_tflops, c12 = one.stages[1].step_tflops + one.stages[2].step_tflops;
    const double ratio =
        schedule_cost("0-0-50", c, kWanVideo).total_tflops / schedule_cost("20-20-10", c, kWanVideo).total_tflops;
    const double published = 12592.0 / 2821.0;
    auto within = [](double a, double b, double tol) { return std::abs(a / b - 1.0) < tol; };
    const bool tokens = one.stages[0].tokens == 30576 && one.stages[1].tokens == 4004 && one.stages[2].tokens == 546;
    const bool pass = within(fit[0], 251.8, 0.25) && within(fit[1], 15.0, 0.25) && within(c0, 251.8, 0.25) &&
                      within(c12, 15.0, 0.25) && within(ratio, published, 0.25) && tokens;
    return {pass, false,
            "table rows imply (" + fmt(fit[0]) + ", " + fmt(fit[1]) + "); model (" + fmt(c0) + ", " + fmt(c12) +
                ") vs (251.8, 15.0); 0-0-50 / 20-20-10 = " + fmt(ratio) + " vs " + fmt(published) + "; tokens " +
                std::to_string(one.stages[0].tokens) + "/" + std::to_string(one.stages[1].tokens) + "/" +
                std::to_string(one.stages[2].tokens)};
}

// --- 10: CLI determinism ---

std::map<std::string, std::string> read_dir(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::ifstream f(e.path(), std::ios::binary);
        std::ostringstream s;
        s << f.rdbuf();
        out[e.path().filename().string()] = s.str();
    }
    return out;
}

Verdict criterion10(const std::string& exe) {
    const fs::path root = fs::temp_directory_path() / ("pyramid_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    {
        std::ofstream cfg(root / "config.json");
        cfg << R"({
  // reduced sizes for a quick determinism pass
  "verify": {"mc_samples": 20000},
  "sampler": {"samples": 2000},
  "trainer": {"samples_per_bucket": 2000, "buckets": 4, "eval_samples": 2000},
  "distill": {"iterations": 40, "fake_batch_size": 256, "log_every": 10, "adversarial_iterations": 5},
  "spectrum": {"samples": 300, "points": 201}
})";
    }
    bool pass = true;
    int files = 0;
    std::string failed;
    for (const char* cmd : {"verify", "sample", "train", "distill", "cost", "spectrum"}) {
        std::map<std::string, std::string> runs[2];
        for (int k = 0; k < 2; ++k) {
            // Same output path both times: the manifest records it.
            const fs::path out = root / cmd;
            fs::remove_all(out);
            const std::string line = "\"" + exe + "\" " + cmd + " --config \"" + (root / "config.json").string() +
                                     "\" --seed 11 --out \"" + out.string() + "\" > /dev/null 2>&1";
            if (std::system(line.c_str()) != 0) {
                pass = false;
                failed += std::string(" ") + cmd + "(exit)";
            }
            runs[k] = read_dir(out);
        }
        if (runs[0].empty() || runs[0] != runs[1]) {
            pass = false;
            failed += std::string(" ") + cmd;
        }
        files += static_cast<int>(runs[0].size());
    }
    fs::remove_all(root);
    return {pass, false,
            "6 subcommands run twice with seed 11: " + std::to_string(files) + " files" +
                (failed.empty() ? " byte-identical" : ", differing:" + failed)};
}

}  // namespace

int main(int argc, char** argv) {
    std::string exe = PYRFLOW_PATH;
    if (argc > 1) exe = argv[1];
    struct Criterion {
        int id;
        const char* name;
        double limit_s;  // 0: no runtime bound
        std::function<Verdict()> run;
    };
    const std::vector<Criterion> all{
        {1, "upsample-law exactness", 10, criterion1},
        {2, "corrective-noise necessity", 60, criterion2},
        {3, "level algebra", 1, criterion3},
        {4, "transition consistency", 0, criterion4},
        {5, "end-to-end pyramidal sampling", 300, criterion5},
        {6, "pyramidal finetuning quality", 600, criterion6},
        {7, "DMD algebra", 0, criterion7},
        {8, "DMD training efficacy", 1200, criterion8},
        {9, "cost model", 0, criterion9},
        {10, "CLI determinism", 0, [&] { return criterion10(exe); }},
    };
    int passed = 0, known = 0, failed = 0;
    for (const Criterion& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.limit_s > 0 && secs >= c.limit_s) {
            v.pass = false;
            v.known = false;
            v.detail += "; over the " + fmt(c.limit_s) + " s limit";
        }
        const char* tag = v.pass ? "PASS" : (v.known ? "FAIL (known)" : "FAIL");
        std::printf("[%s] %2d %s: %s [%.1f s]\n", tag, c.id, c.name, v.detail.c_str(), secs);
        std::fflush(stdout);
        (v.pass ? passed : (v.known ? known : failed))++;
    }
    std::printf("%d passed, %d known limitation, %d failed\n", passed, known, failed);
    return failed == 0 ? 0 : 1;
}
