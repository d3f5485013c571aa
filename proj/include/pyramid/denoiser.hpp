#pragma once

// Per-(stage, level-bucket) affine velocity models.
//
// Each stage's natural interval is cut into buckets (half-open (e_k, e_k+1],
// the lowest edge belonging to bucket 0); inside a bucket the prediction is
// A x + b. On Gaussian sources the Bayes-optimal stage velocity is affine, so
// the family can reach the oracle floor up to the within-bucket variation of
// the level.

#include "pyramid/core.hpp"
#include "pyramid/oracle.hpp"
#include "pyramid/resample.hpp"
#include "pyramid/rng.hpp"
#include "pyramid/schedule.hpp"
#include "pyramid/velocity.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace pyramid {

struct StageBuckets {
    Grid grid;
    std::vector<double> edges;  // strictly increasing, size = buckets + 1
    std::vector<AffineMap> maps;

    [[nodiscard]] int buckets() const { return static_cast<int>(maps.size()); }
    [[nodiscard]] double midpoint(int k) const { return 0.5 * (edges[k] + edges[k + 1]); }
};

class AffineDenoiser : public VelocityModel {
public:
    AffineDenoiser() = default;
    explicit AffineDenoiser(std::vector<StageBuckets> stages);
    // Zero maps on uniform buckets of each stage's natural interval.
    static AffineDenoiser zeros(const std::vector<Grid>& grids, const StageSchedule& schedule, int buckets);

    [[nodiscard]] int stages() const { return static_cast<int>(stages_.size()); }
    [[nodiscard]] const StageBuckets& stage(int i) const;
    StageBuckets& stage(int i);
    // Throws std::invalid_argument when eta lies in no bucket of the stage.
    [[nodiscard]] int bucket_of(int stage, double eta) const;
    [[nodiscard]] const AffineMap& map_for(int stage, double eta) const;

    [[nodiscard]] Batch predict(const Batch& x, double eta, int stage) const override;
    using VelocityModel::predict;

    [[nodiscard]] nlohmann::json to_json() const;
    static AffineDenoiser from_json(const nlohmann::json& j);

private:
    std::vector<StageBuckets> stages_;
};

std::vector<double> uniform_edges(const LevelInterval& natural, int buckets);

struct TrainConfig {
    enum class Mode { Refit, Sgd };
    int buckets = 8;
    Eigen::Index samples_per_bucket = 20000;
    double ridge = 1e-6;           // ridge toward the initialization
    double distill_weight = 0.1;   // weight of L_dist relative to L_pyr
    Mode mode = Mode::Refit;
    // SGD mode only.
    int iterations = 2000;
    double learning_rate = 1e-2;
    Eigen::Index batch_size = 64;

    void validate() const;
};

// Weighted ridge least squares: minimizes
//   sum_j w_j |A x_j + b - t_j|^2 + ridge |A - A0|_F^2
// (b unpenalized). X, T hold samples column-wise; empty weights mean 1.
AffineMap ridge_fit(const Matrix& X, const Matrix& T, const Vector& weights, double ridge, const AffineMap& prior);
// Same solve from accumulated moments: G = sum w z z^T and C = sum w t z^T
// with z = (x, 1).
AffineMap ridge_solve(const Matrix& G, const Matrix& C, double ridge, const AffineMap& prior);

// Conventional (single-stage) per-bucket fit on [0, 1]; the returned model
// has one stage on the source grid.
AffineDenoiser fit_conventional(const GaussianSource& source, const TrainConfig& cfg, RngStream& rng);
// Same, with clean samples drawn uniformly from a fixed data batch.
AffineDenoiser fit_conventional(const Batch& data, const TrainConfig& cfg, RngStream& rng);

// Carries a conventional model to every stage of a schedule: the stage-i map
// at level eta is D_i A(eta) U_i with D_i, U_i the i-fold down/up matrices.
AffineDenoiser transfer_to_stages(const AffineDenoiser& conventional, const StageSchedule& schedule,
                                  const OrthoResampler& r, int buckets);

// Summary of one finetune run.
struct FinetuneReport {
    std::vector<double> stage_fit_loss;      // MSE on the fitting samples, L_pyr part
    std::vector<double> stage_distill_loss;  // L_dist part (0 without a teacher)
    int iterations = 0;                      // SGD only
};

// Fits every stage bucket on L_pyr (+ distill_weight * L_dist when a teacher
// is given). The teacher is a stage-0 model queried at natural levels; its
// one-step cleaner-bound prediction is carried to stage i by down^i and the
// factor (1 - sigma_c) / (1 - eta_c), which turns
// (1 - eta_c) x0 + eta_c eps^(0) into y_c^(i) exactly when
// eps^(i) = omega^i down^i(eps^(0)).
AffineDenoiser pyramidal_finetune(const AffineDenoiser& init, const StageSchedule& schedule,
                                  const GaussianSource& source, const OrthoResampler& r, const TrainConfig& cfg,
                                  RngStream& rng, const VelocityModel* teacher = nullptr,
                                  FinetuneReport* report = nullptr);

// Analytic gradient of the minibatch L_pyr for one bucket map:
//   loss = (1/n) sum_j |A x_j + b - t_j|^2.
struct AffineGradient {
    Matrix dA;
    Vector db;
    double loss = 0.0;
};
AffineGradient pyramidal_loss_gradient(const AffineMap& f, const Matrix& X, const Matrix& T);

struct StageLoss {
    double mean = 0.0;
    double standard_error = 0.0;
};

// Monte Carlo L_pyr per stage with rho ~ Uni(0, 1], n samples per stage.
std::vector<StageLoss> eval_pyramidal_loss(const VelocityModel& model, const StageSchedule& schedule,
                                           const GaussianSource& source, const OrthoResampler& r, Eigen::Index n,
                                           RngStream& rng);

// Exact loss of every bucket map at its bucket midpoint next to the oracle
// floor at the same level.
struct BucketLoss {
    int stage = 0;
    int bucket = 0;
    double eta = 0.0;
    double loss = 0.0;
    double bayes = 0.0;
};
std::vector<BucketLoss> exact_midpoint_losses(const AffineDenoiser& d, const PyramidOracle& oracle);

}  // namespace pyramid
