#include "pyramid/costmodel.hpp"

#include "pyramid/sampler.hpp"

#include <Eigen/Dense>

#include <set>
#include <stdexcept>

namespace pyramid {

void DiTConfig::validate() const {
    auto pos = [](int v, const char* what) {
        if (v < 1) throw std::invalid_argument(std::string("model.") + what + " must be a positive integer");
    };
    pos(layers, "layers");
    pos(hidden, "hidden");
    pos(ffn, "ffn");
    pos(heads, "heads");
    for (int v : patch) pos(v, "patch");
    for (int v : vae_stride) pos(v, "vae_stride");
    if (text_tokens < 0) throw std::invalid_argument("model.text_tokens must be nonnegative");
    if (hidden % heads != 0) throw std::invalid_argument("model.hidden must be divisible by model.heads");
    if (cfg_factor != 1 && cfg_factor != 2) throw std::invalid_argument("model.cfg_factor must be 1 or 2");
    if (!(calibration > 0.0)) throw std::invalid_argument("model.calibration must be positive");
}

nlohmann::json DiTConfig::to_json() const {
    return {{"name", name},
            {"layers", layers},
            {"hidden", hidden},
            {"ffn", ffn},
            {"heads", heads},
            {"patch", patch},
            {"vae_stride", vae_stride},
            {"text_tokens", text_tokens},
            {"cfg_factor", cfg_factor},
            {"calibration", calibration},
            {"ppf_equivalent", ppf_equivalent}};
}

DiTConfig DiTConfig::from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{"name",   "layers",     "hidden",      "ffn",
                                             "heads",  "patch",      "vae_stride",  "text_tokens",
                                             "cfg_factor", "calibration", "ppf_equivalent", "source"};
    if (!j.is_object()) throw std::invalid_argument("model config must be an object");
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw std::invalid_argument("unknown key 'model." + k + "'");
    DiTConfig c;
    c.name = j.value("name", c.name);
    c.layers = j.value("layers", c.layers);
    c.hidden = j.value("hidden", c.hidden);
    c.ffn = j.value("ffn", c.ffn);
    c.heads = j.value("heads", c.heads);
    if (j.contains("patch")) c.patch = j.at("patch").get<std::array<int, 3>>();
    if (j.contains("vae_stride")) c.vae_stride = j.at("vae_stride").get<std::array<int, 3>>();
    c.text_tokens = j.value("text_tokens", c.text_tokens);
    c.cfg_factor = j.value("cfg_factor", c.cfg_factor);
    c.calibration = j.value("calibration", c.calibration);
    c.ppf_equivalent = j.value("ppf_equivalent", c.ppf_equivalent);
    c.validate();
    return c;
}

VideoShape latent_shape(const VideoShape& v, const std::array<int, 3>& stride) {
    if (v.frames < 1 || v.height < 1 || v.width < 1) throw std::invalid_argument("video shape must be positive");
    if ((v.frames - 1) % stride[0] != 0)
        throw std::invalid_argument("frame count minus one is not divisible by the temporal stride");
    if (v.height % stride[1] != 0 || v.width % stride[2] != 0)
        throw std::invalid_argument("spatial size " + std::to_string(v.height) + "x" + std::to_string(v.width) +
                                    " is not divisible by the VAE stride");
    return {(v.frames - 1) / stride[0] + 1, v.height / stride[1], v.width / stride[2]};
}

std::int64_t token_count(const VideoShape& l, const std::array<int, 3>& patch) {
    auto cdiv = [](int a, int b) { return static_cast<std::int64_t>((a + b - 1) / b); };
    return cdiv(l.frames, patch[0]) * cdiv(l.height, patch[1]) * cdiv(l.width, patch[2]);
}

VideoShape stage_video(const VideoShape& full, int stage) {
    if (stage < 0) throw std::invalid_argument("stage must be nonnegative");
    const int k = 1 << stage;
    if ((full.frames - 1) % k != 0 || full.height % k != 0 || full.width % k != 0)
        throw std::invalid_argument("video shape does not halve " + std::to_string(stage) + " times");
    return {(full.frames - 1) / k + 1, full.height / k, full.width / k};
}

double forward_flops(const DiTConfig& c, std::int64_t tokens) {
    if (tokens < 0) throw std::invalid_argument("token count must be nonnegative");
    if (tokens == 0) return 0.0;
    const double L = static_cast<double>(tokens), d = c.hidden, f = c.ffn, T = c.text_tokens;
    // Multiply-accumulates per block.
    const double self_proj = 4.0 * L * d * d;    // q, k, v, out
    const double self_attn = 2.0 * L * L * d;    // q k^T and weights times v
    const double mlp = 2.0 * L * d * f;
    const double cross = 2.0 * L * d * d         // q, out
                         + 2.0 * T * d * d       // k, v over text
                         + 2.0 * L * T * d;      // scores and mix
    return 2.0 * c.layers * (self_proj + self_attn + mlp + cross) * c.calibration;
}

nlohmann::json ScheduleCost::to_json() const {
    nlohmann::json st = nlohmann::json::array();
    for (const StageCost& s : stages)
        st.push_back({{"stage", s.stage},
                      {"latent", {s.latent.frames, s.latent.height, s.latent.width}},
                      {"tokens", s.tokens},
                      {"step_tflops", s.step_tflops},
                      {"steps", s.steps},
                      {"subtotal_tflops", s.subtotal_tflops}});
    return {{"schedule", schedule}, {"stages", st}, {"total_tflops", total_tflops}};
}

ScheduleCost schedule_cost(const std::string& schedule, const DiTConfig& c, const VideoShape& full) {
    c.validate();
    const std::vector<int> steps = parse_steps(schedule);
    ScheduleCost out;
    out.schedule = schedule;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        StageCost s;
        s.stage = static_cast<int>(i);
        s.latent = latent_shape(stage_video(full, s.stage), c.vae_stride);
        s.tokens = token_count(s.latent, c.patch);
        s.step_tflops = forward_flops(c, s.tokens) / 1e12;
        s.steps = steps[i];
        s.subtotal_tflops = s.steps * s.step_tflops * c.cfg_factor;
        out.total_tflops += s.subtotal_tflops;
        out.stages.push_back(s);
    }
    return out;
}

std::vector<CostRow> published_cost_rows() {
    return {{"0-0-4", 1007.0}, {"0-0-2", 504.0}, {"2-2-2", 534.0}, {"2-2-1", 282.0}, {"1-1-1", 267.0}};
}

std::array<double, 2> fit_stage_costs(const std::vector<CostRow>& rows) {
    if (rows.size() < 2) throw std::invalid_argument("need at least two rows to fit two costs");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const std::vector<int> s = parse_steps(rows[k].schedule);
        if (s.size() != 3 || s[1] != s[2])
            throw std::invalid_argument("row '" + rows[k].schedule + "' must have equal coarse and middle steps");
        X(static_cast<Eigen::Index>(k), 0) = s[0];
        X(static_cast<Eigen::Index>(k), 1) = s[1];
        y[static_cast<Eigen::Index>(k)] = rows[k].tflops;
    }
    const Eigen::Vector2d c = X.colPivHouseholderQr().solve(y);
    return {c[0], c[1]};
}

}  // namespace pyramid
