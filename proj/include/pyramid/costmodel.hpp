#pragma once

// Token and FLOPs accounting of a video DiT over pyramidal stage schedules.
// Counting convention: one multiply-accumulate is 2 FLOPs; norms, softmax,
// modulation and the patch embedding are ignored.

#include <json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace pyramid {

struct DiTConfig {
    std::string name = "wan2.1-t2v-1.3b";
    int layers = 30;
    int hidden = 1536;
    int ffn = 8960;
    int heads = 12;
    std::array<int, 3> patch{1, 2, 2};       // (t, h, w) over latents
    std::array<int, 3> vae_stride{4, 8, 8};  // (t, h, w) over pixels
    int text_tokens = 512;
    int cfg_factor = 1;          // 2 with classifier-free guidance
    double calibration = 1.0;    // multiplies every FLOPs figure
    // Pyramidal-patchification models see the same token counts per stage,
    // so they share this cost path.
    bool ppf_equivalent = true;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static DiTConfig from_json(const nlohmann::json& j);
};

struct VideoShape {
    int frames = 1, height = 1, width = 1;
    friend bool operator==(const VideoShape&, const VideoShape&) = default;
};

// frames (F - 1)/stride_t + 1; spatial sizes must divide evenly.
VideoShape latent_shape(const VideoShape& video, const std::array<int, 3>& stride);
// Product of ceil-divided latent sizes.
std::int64_t token_count(const VideoShape& latent, const std::array<int, 3>& patch);
// Pixel-space resolution of stage i: frames (F - 1)/2^i + 1, spatial / 2^i.
VideoShape stage_video(const VideoShape& full, int stage);

// One forward pass over `tokens` video tokens.
double forward_flops(const DiTConfig& c, std::int64_t tokens);

struct StageCost {
    int stage = 0;
    VideoShape latent;
    std::int64_t tokens = 0;
    double step_tflops = 0.0;  // one forward pass, without the CFG factor
    int steps = 0;
    double subtotal_tflops = 0.0;  // steps * step * cfg
};

struct ScheduleCost {
    std::string schedule;
    std::vector<StageCost> stages;  // stage 0 (finest) first
    double total_tflops = 0.0;
    [[nodiscard]] nlohmann::json to_json() const;
};

// `schedule` lists steps coarsest stage first, e.g. "20-20-10".
ScheduleCost schedule_cost(const std::string& schedule, const DiTConfig& c, const VideoShape& full);

inline constexpr VideoShape kWanVideo{81, 448, 832};

// Rows of the published cost table for the distilled and pyramidal models.
struct CostRow {
    std::string schedule;
    double tflops;
};
std::vector<CostRow> published_cost_rows();

// Least-squares (c0, c1 + c2) from rows "a-b-c" with a = b (cost
// c * c0 + b * (c1 + c2)).
std::array<double, 2> fit_stage_costs(const std::vector<CostRow>& rows);

}  // namespace pyramid
