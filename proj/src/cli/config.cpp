#include "pyramid/cli.hpp"

#include "pyramid/verify.hpp"

#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace pyramid {

using nlohmann::json;

namespace {

// One object of the config tree. Reads are path-aware and finish() rejects
// keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("'" + label() + "' must be an object");
    }

    [[nodiscard]] std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }

    template <class T>
    void get(const std::string& key, T& dst) {
        used_.insert(key);
        if (!j_.contains(key)) return;
        const json& v = j_.at(key);
        try {
            dst = v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError("'" + key_path(key) + "' has the wrong type (" + v.type_name() + ")");
        }
    }

    void get_grid(const std::string& key, Grid& g) {
        std::vector<int> d;
        get(key, d);
        if (!j_.contains(key)) return;
        if (d.size() != 3 && d.size() != 4)
            throw ConfigError("'" + key_path(key) + "' must list [T, H, W] or [T, H, W, C]");
        g = Grid{d[0], d[1], d[2], d.size() == 4 ? d[3] : 1};
        if (!g.valid()) throw ConfigError("'" + key_path(key) + "' extents must be positive");
    }

    Section child(const std::string& key) {
        used_.insert(key);
        static const json empty = json::object();
        return Section(j_.contains(key) ? j_.at(key) : empty, key_path(key));
    }

    [[nodiscard]] const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) throw ConfigError("unknown key '" + key_path(k) + "'");
    }

private:
    [[nodiscard]] std::string label() const { return path_.empty() ? "config" : path_; }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

json grid_json(const Grid& g) { return {g.frames, g.height, g.width, g.channels}; }

std::string mode_name(TrainConfig::Mode m) { return m == TrainConfig::Mode::Refit ? "refit" : "sgd"; }

template <class F>
void rethrow_as_config(F&& f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace

OrthoResampler ResamplerSpec::build() const {
    AxisSet a;
    try {
        a = AxisSet::parse(axes);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("'resampler.axes': " + std::string(e.what()));
    }
    try {
        if (kind == "haar") return OrthoResampler::haar(a);
        if (kind == "daubechies2") return OrthoResampler::daubechies2(a);
        if (kind == "filters") return OrthoResampler::from_filters(lo, hi, a);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("'resampler': " + std::string(e.what()));
    }
    throw ConfigError("'resampler.kind' must be haar, daubechies2 or filters, not '" + kind + "'");
}

GaussianSource SourceSpec::build() const {
    const GaussianSource unit = make_smooth_gaussian(grid, length_scale, mean);
    if (cov_scale == 1.0) return unit;
    return GaussianSource(grid, unit.mean(), cov_scale * unit.cov(), length_scale);
}

SamplerConfig SamplerSpec::build() const {
    if (grid == "preset") {
        SamplerConfig c = preset_221_config();
        if (format_steps(c.steps) != steps)
            throw ConfigError("'sampler.steps' must be " + format_steps(c.steps) + " with the preset grid");
        return c;
    }
    SamplerConfig c;
    try {
        c.steps = parse_steps(steps);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("'sampler.steps': " + std::string(e.what()));
    }
    if (grid == "uniform") {
        c.grid = SamplerConfig::LevelGrid::UniformGlobal;
    } else if (grid == "shifted") {
        c.grid = SamplerConfig::LevelGrid::Shifted;
        c.shift = shift;
    } else {
        throw ConfigError("'sampler.grid' must be uniform, shifted or preset, not '" + grid + "'");
    }
    return c;
}

StageSchedule RunConfig::schedule(double omega) const {
    if (schedule_edges.size() < 2) throw ConfigError("'schedule.edges' needs at least two values");
    StageSchedule s = schedule_from_edges(omega, schedule_edges);
    const ScheduleReport rep = pyramid::validate(s);
    if (!rep.ok) throw ConfigError("'schedule.edges': " + rep.message);
    return s;
}

void RunConfig::validate() const {
    const OrthoResampler* r = nullptr;
    std::optional<OrthoResampler> built;
    if (resampler.kind == "filters") {
        if (resampler.lo.empty() || resampler.lo.size() != resampler.hi.size() || resampler.lo.size() % 2 != 0)
            throw ConfigError("'resampler.lo' and 'resampler.hi' must have the same even, nonzero length");
        (void)AxisSet::parse(resampler.axes);
    } else {
        built = resampler.build();
        r = &*built;
    }
    const double omega = r ? r->omega() : 1.0;
    const StageSchedule s = schedule(omega);
    rethrow_as_config([&] {
        require_valid(source.grid);
        if (!(source.length_scale >= 0.0)) throw ConfigError("'source.length_scale' must be nonnegative");
        if (!(source.cov_scale > 0.0)) throw ConfigError("'source.cov_scale' must be positive");
        if (r && r->max_levels(source.grid) < s.stages() - 1)
            throw ConfigError("'source.grid' " + source.grid.str() + " cannot be halved " +
                              std::to_string(s.stages() - 1) + " times");
        if (r && r->max_levels(verify.grid) < s.stages() - 1)
            throw ConfigError("'verify.grid' " + verify.grid.str() + " cannot be halved " +
                              std::to_string(s.stages() - 1) + " times");
        if (verify.grid.size() > kExactLawCap)
            throw ConfigError("'verify.grid' exceeds " + std::to_string(kExactLawCap) + " coordinates");
        if (verify.mc_samples < 2) throw ConfigError("'verify.mc_samples' must be at least 2");
        const SamplerConfig sc = sampler.build();
        if (static_cast<int>(sc.steps.size()) != s.stages())
            throw ConfigError("'sampler.steps' lists " + std::to_string(sc.steps.size()) + " stages, the schedule has " +
                              std::to_string(s.stages()));
        try {
            sc.validate(s);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("'sampler': " + std::string(e.what()));
        }
        if (sampler.samples < 2) throw ConfigError("'sampler.samples' must be at least 2");
        if (sampler.conventional_steps < 1) throw ConfigError("'sampler.conventional_steps' must be positive");
        if (!(sampler.conventional_shift > 0.0)) throw ConfigError("'sampler.conventional_shift' must be positive");
        train.config.validate();
        if (train.eval_samples < 2) throw ConfigError("'trainer.eval_samples' must be at least 2");
        distill.config.validate();
        if (distill.adversarial_iterations < 0)
            throw ConfigError("'distill.adversarial_iterations' must be nonnegative");
        if (distill.adversarial_batch < 1) throw ConfigError("'distill.adversarial_batch' must be positive");
        model.validate();
        for (const std::string& sch : cost.schedules) (void)parse_steps(sch);
        (void)parse_steps(cost.baseline);
        (void)parse_steps(cost.reference);
        (void)latent_shape(cost.video, model.vae_stride);
        if (spectrum.samples < 1) throw ConfigError("'spectrum.samples' must be positive");
        if (!(spectrum.delta > 0.0)) throw ConfigError("'spectrum.delta' must be positive");
        if (spectrum.points < 2) throw ConfigError("'spectrum.points' must be at least 2");
        if (spectrum.stage < 0 || spectrum.stage >= s.stages())
            throw ConfigError("'spectrum.stage' must name a stage of the schedule");
        for (double v : spectrum.sigmas)
            if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("'spectrum.sigmas' entries must lie in [0, 1]");
    });
}

json RunConfig::to_json() const {
    const TrainConfig& t = train.config;
    const DmdConfig& d = distill.config;
    json res = {{"kind", resampler.kind}, {"axes", resampler.axes}};
    if (resampler.kind == "filters") {
        res["lo"] = resampler.lo;
        res["hi"] = resampler.hi;
    }
    return {
        {"seed", seed},
        {"out", out},
        {"resampler", res},
        {"schedule", {{"edges", schedule_edges}}},
        {"source", {{"grid", grid_json(source.grid)}, {"length_scale", source.length_scale},
                    {"mean", source.mean},
                    {"cov_scale", source.cov_scale}}},
        {"sampler",
         {{"steps", sampler.steps},
          {"grid", sampler.grid},
          {"shift", sampler.shift},
          {"samples", sampler.samples},
          {"conventional_steps", sampler.conventional_steps},
          {"conventional_shift", sampler.conventional_shift},
          {"checkpoint", sampler.checkpoint}}},
        {"trainer",
         {{"buckets", t.buckets},
          {"samples_per_bucket", t.samples_per_bucket},
          {"ridge", t.ridge},
          {"distill_weight", t.distill_weight},
          {"mode", mode_name(t.mode)},
          {"iterations", t.iterations},
          {"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"teacher", train.teacher},
          {"eval_samples", train.eval_samples}}},
        {"distill",
         {{"variant", variant_name(d.variant)},
          {"iterations", d.iterations},
          {"batch_size", d.batch_size},
          {"learning_rate", d.learning_rate},
          {"final_lr_fraction", d.final_lr_fraction},
          {"fake_updates", d.fake_updates},
          {"teach_weight", d.teach_weight},
          {"shift", d.shift},
          {"renoise_levels", d.renoise_levels},
          {"fake_batch_size", d.fake_batch_size},
          {"fake_forgetting", d.fake_forgetting},
          {"fake_ridge", d.fake_ridge},
          {"weight_floor", d.weight_floor},
          {"log_every", d.log_every},
          {"adversarial_iterations", distill.adversarial_iterations},
          {"adversarial_batch", distill.adversarial_batch},
          {"adversarial_learning_rate", distill.adversarial_learning_rate}}},
        {"model", model.to_json()},
        {"cost",
         {{"schedules", cost.schedules},
          {"baseline", cost.baseline},
          {"reference", cost.reference},
          {"video", {cost.video.frames, cost.video.height, cost.video.width}}}},
        {"spectrum",
         {{"samples", spectrum.samples},
          {"sigmas", spectrum.sigmas},
          {"delta", spectrum.delta},
          {"stage", spectrum.stage},
          {"points", spectrum.points}}},
        {"verify", {{"mc_samples", verify.mc_samples}, {"grid", grid_json(verify.grid)}}},
    };
}

RunConfig RunConfig::from_json(const json& j, const std::filesystem::path& base) {
    RunConfig c;
    Section root(j, "");
    root.get("seed", c.seed);
    root.get("out", c.out);
    {
        Section s = root.child("resampler");
        s.get("kind", c.resampler.kind);
        s.get("axes", c.resampler.axes);
        s.get("lo", c.resampler.lo);
        s.get("hi", c.resampler.hi);
        s.finish();
        if (c.resampler.kind != "filters" && (s.has("lo") || s.has("hi")))
            throw ConfigError("'resampler.lo' and 'resampler.hi' only apply to kind filters");
    }
    {
        Section s = root.child("schedule");
        s.get("edges", c.schedule_edges);
        s.finish();
    }
    {
        Section s = root.child("source");
        s.get_grid("grid", c.source.grid);
        s.get("length_scale", c.source.length_scale);
        s.get("mean", c.source.mean);
        s.get("cov_scale", c.source.cov_scale);
        s.finish();
    }
    {
        Section s = root.child("sampler");
        s.get("steps", c.sampler.steps);
        s.get("grid", c.sampler.grid);
        s.get("shift", c.sampler.shift);
        s.get("samples", c.sampler.samples);
        s.get("conventional_steps", c.sampler.conventional_steps);
        s.get("conventional_shift", c.sampler.conventional_shift);
        s.get("checkpoint", c.sampler.checkpoint);
        s.finish();
        if (!c.sampler.checkpoint.empty() && !base.empty() && std::filesystem::path(c.sampler.checkpoint).is_relative())
            c.sampler.checkpoint = (base / c.sampler.checkpoint).lexically_normal().string();
    }
    {
        Section s = root.child("trainer");
        TrainConfig& t = c.train.config;
        s.get("buckets", t.buckets);
        s.get("samples_per_bucket", t.samples_per_bucket);
        s.get("ridge", t.ridge);
        s.get("distill_weight", t.distill_weight);
        std::string mode = mode_name(t.mode);
        s.get("mode", mode);
        if (mode == "refit") t.mode = TrainConfig::Mode::Refit;
        else if (mode == "sgd") t.mode = TrainConfig::Mode::Sgd;
        else throw ConfigError("'trainer.mode' must be refit or sgd, not '" + mode + "'");
        s.get("iterations", t.iterations);
        s.get("learning_rate", t.learning_rate);
        s.get("batch_size", t.batch_size);
        s.get("teacher", c.train.teacher);
        s.get("eval_samples", c.train.eval_samples);
        s.finish();
    }
    {
        Section s = root.child("distill");
        DmdConfig& d = c.distill.config;
        std::string variant = variant_name(d.variant);
        s.get("variant", variant);
        try {
            d.variant = parse_variant(variant);
        } catch (const std::invalid_argument&) {
            throw ConfigError("'distill.variant' must be OT, PT or PT*, not '" + variant + "'");
        }
        s.get("iterations", d.iterations);
        s.get("batch_size", d.batch_size);
        s.get("learning_rate", d.learning_rate);
        s.get("final_lr_fraction", d.final_lr_fraction);
        s.get("fake_updates", d.fake_updates);
        s.get("teach_weight", d.teach_weight);
        s.get("shift", d.shift);
        s.get("renoise_levels", d.renoise_levels);
        s.get("fake_batch_size", d.fake_batch_size);
        s.get("fake_forgetting", d.fake_forgetting);
        s.get("fake_ridge", d.fake_ridge);
        s.get("weight_floor", d.weight_floor);
        s.get("log_every", d.log_every);
        s.get("adversarial_iterations", c.distill.adversarial_iterations);
        s.get("adversarial_batch", c.distill.adversarial_batch);
        s.get("adversarial_learning_rate", c.distill.adversarial_learning_rate);
        s.finish();
    }
    if (root.has("model")) {
        const json& m = root.raw("model");
        json obj = m;
        if (m.is_string()) {
            const std::filesystem::path p = base / m.get<std::string>();
            std::ifstream f(p);
            if (!f) throw ConfigError("'model': cannot read " + p.string());
            try {
                obj = json::parse(f, nullptr, true, true);
            } catch (const json::parse_error& e) {
                throw ConfigError("'model': " + p.string() + ": " + e.what());
            }
        }
        rethrow_as_config([&] { c.model = DiTConfig::from_json(obj); });
    }
    {
        Section s = root.child("cost");
        s.get("schedules", c.cost.schedules);
        s.get("baseline", c.cost.baseline);
        s.get("reference", c.cost.reference);
        std::vector<int> v;
        s.get("video", v);
        if (s.has("video")) {
            if (v.size() != 3) throw ConfigError("'cost.video' must list [frames, height, width]");
            c.cost.video = {v[0], v[1], v[2]};
        }
        s.finish();
    }
    {
        Section s = root.child("spectrum");
        s.get("samples", c.spectrum.samples);
        s.get("sigmas", c.spectrum.sigmas);
        s.get("delta", c.spectrum.delta);
        s.get("stage", c.spectrum.stage);
        s.get("points", c.spectrum.points);
        s.finish();
    }
    {
        Section s = root.child("verify");
        s.get("mc_samples", c.verify.mc_samples);
        s.get_grid("grid", c.verify.grid);
        s.finish();
    }
    root.finish();
    c.validate();
    return c;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base) {
    json j;
    try {
        j = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config syntax: ") + e.what());
    }
    return RunConfig::from_json(j, base);
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

}  // namespace pyramid
