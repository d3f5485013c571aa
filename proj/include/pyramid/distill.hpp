#pragma once

// Few-step distillation of a pyramidal sampler: DMD with a conventional
// teacher (OT), with a pyramidal teacher (PT) and its unit-weight variant
// (PT*), plus hinge losses for the adversarial alternative.
//
// The student predicts the clean stage signal in one hop,
//   x0_hat = x_sigma - sigma F_xi(x_sigma, eta),
// from an input rolled out of y_n with a detached student step.

#include "pyramid/denoiser.hpp"
#include "pyramid/oracle.hpp"
#include "pyramid/sampler.hpp"

#include <string>
#include <vector>

namespace pyramid {

enum class DmdVariant { OT, PT, PTStar };
std::string variant_name(DmdVariant v);
DmdVariant parse_variant(const std::string& name);

// ---- algebra ---------------------------------------------------------------

struct StudentStep {
    Batch x_sigma;     // detached rollout input
    Batch prediction;  // x_sigma - (sigma - sigma_target) F_xi(x_sigma, eta)
};

// sigma in (sigma_c, sigma_n] is the student's input level. sigma_target may
// be any level below sigma; 0 gives x0_hat.
StudentStep student_one_step(const VelocityModel& student, const Batch& y_n, int stage, double sigma,
                             double sigma_target, const StageSchedule& schedule);

struct Renoised {
    Batch y_c;
    Batch y_n;
    Batch x;  // (1 - rho') y_c + rho' y_n
    double sigma = 0.0;
    double rho = 0.0;
};

// Stage-wise re-noising of a predicted clean signal with shared eps'.
Renoised renoise_pyramidal(const Batch& x0_hat, int stage, double rho, const Batch& eps,
                           const StageSchedule& schedule, const OrthoResampler& r);

// Delta = sigma_n y_c - sigma_c y_n. When x0_hat is given the identity
// P Delta = (sigma_n - sigma_c) P x0_hat is checked to 1e-10 (std::logic_error).
Batch delta_combination(const Batch& y_c, const Batch& y_n, int stage, const StageSchedule& schedule,
                        const OrthoResampler& r, const Batch* x0_hat = nullptr);

// Closed-form noise estimate from a stage velocity F at x_sigma':
//   (x + (sigma_n - sigma') F) / sigma_n - (1 - sigma_n) / sigma_n (P x - sigma' P F).
Batch epsilon_estimate(const Batch& f, const Batch& x, int stage, double sigma_p, const StageSchedule& schedule,
                       const OrthoResampler& r);

struct DmdWeights {
    double beta1 = 1.0, beta2 = 0.0;    // on (F_phi - F_teacher) and its projection
    double gamma1 = 1.0, gamma2 = 0.0;  // on grad F_xi and its projection
};

// Normalized weights at renoise level sigma' in [sigma_c, sigma_n]. OT and
// PT* give (1, 0), (1, 0). A pair whose raw sum vanishes also falls back to
// (1, 0).
DmdWeights dmd_weights(DmdVariant v, double sigma_c, double sigma_n, double sigma_p);

// One bucket's worth of DMD terms, column-aligned.
struct DmdTerms {
    Matrix x_sigma;    // student inputs
    Matrix diff;       // F_phi - F_teacher at the renoised samples
    Vector weight;     // w_dmd per sample
    DmdWeights mix;
    const Matrix* projection = nullptr;  // P on the stage grid; required when beta2 or gamma2 != 0
};

// Per-sample gradient direction with respect to the student output:
//   h_j = w_j (g1 I + g2 P) (b1 d_j + b2 P d_j).
Matrix dmd_direction(const Matrix& diff, const Vector& weight, const DmdWeights& mix, const Matrix* projection);
// Chains per-sample output gradients H into (A, b): dA = H X^T / n, db = H 1 / n.
AffineGradient chain_affine(const Matrix& H, const Matrix& X);

// Gradient of the DMD loss for the student map:
//   dL/dF_xi(x_j) = w_j (g1 I + g2 P) (b1 d_j + b2 P d_j),
// averaged over samples and chained into (A, b). `loss` is the value of the
// implied surrogate mean_j w_j <sg[b1 d + b2 P d], g1 F + g2 P F>.
AffineGradient dmd_gradient(const AffineMap& student, const DmdTerms& t);

// Mean over samples of |F_student - F_teacher|^2 and its (A, b) gradient.
AffineGradient teach_gradient(const AffineMap& student, const Matrix& x, const Matrix& f_teacher);
double teach_loss(const Batch& f_student, const Batch& f_teacher);

// ---- adversarial losses ------------------------------------------------------

struct LinearDiscriminator {
    Vector w;
    double c = 0.0;
    [[nodiscard]] Vector score(const Matrix& features) const;
};

// mean max(0, 1 - D(real)) + mean max(0, 1 + D(fake)).
double hinge_discriminator_loss(const Vector& real_scores, const Vector& fake_scores);
// -lambda_adv mean D(fake) + lambda_rec mean |y_c_hat - y_c|^2.
double hinge_generator_loss(const Vector& fake_scores, const Batch& y_c_hat, const Batch& y_c,
                            double lambda_adv = 1.0, double lambda_rec = 2.0);

// ---- training ----------------------------------------------------------------

struct DmdConfig {
    DmdVariant variant = DmdVariant::PT;
    int iterations = 2000;
    Eigen::Index batch_size = 64;
    double learning_rate = 1e-2;  // Adam, student
    double final_lr_fraction = 0.1; // cosine decay down to this fraction
    int fake_updates = 2;         // per student update
    double teach_weight = 0.01;
    double shift = 5.0;           // OT renoise levels
    int renoise_levels = 16;      // quantized u grid for sigma'
    Eigen::Index fake_batch_size = 1024;
    double fake_forgetting = 0.95;// decay of the fake-score normal equations
    double fake_ridge = 1e-3;
    double weight_floor = 1e-8;   // clamp of the w_dmd denominators
    int log_every = 10;

    void validate() const;
};

struct DmdLogRow {
    int iteration = 0;
    std::vector<double> fake_loss;  // per stage, latest fake-score FM loss
    double weight_mean = 0.0;
    double weight_max = 0.0;
    double mean_distance = 0.0;  // |m - mu|_2 of the student's exact sample law
    double cov_distance = 0.0;   // |C - Sigma|_F
    [[nodiscard]] double distance() const { return mean_distance + cov_distance; }
};

struct DmdResult {
    AffineDenoiser student;
    AffineDenoiser fake;
    std::vector<DmdLogRow> log;
};

// Student with one bucket per preset level (plus unused filler), every map
// probed from the teacher at that level. OT teachers are queried at the
// global level, PT teachers at the natural level.
AffineDenoiser init_student(const VelocityModel& teacher, DmdVariant v, const StageSchedule& schedule,
                            const OrthoResampler& r, const Grid& fine, const SamplerConfig& preset);

// Exact moment distance of the student's few-step samples to the source.
DmdLogRow student_distance(const AffineDenoiser& student, const StageSchedule& schedule, const OrthoResampler& r,
                           const GaussianSource& source, const SamplerConfig& preset);

// Alternating fake-score / student updates. The teacher is frozen: a
// conventional model queried at (x, sigma', stage) for OT, a pyramidal one
// queried at (x, eta', stage) for PT and PT*. Throws std::runtime_error on
// divergence (non-finite parameters, or distance above twice its best for
// 100 consecutive logs).
DmdResult run_dmd_training(const AffineDenoiser& student, const VelocityModel& teacher, const StageSchedule& schedule,
                           const OrthoResampler& r, const GaussianSource& source, const SamplerConfig& preset,
                           const DmdConfig& cfg, RngStream& rng);

// Adversarial demo: linear head on identity features, hinge losses, student
// trained to land on y_c in one hop per stage.
struct AdversarialLogRow {
    int iteration = 0;
    double discriminator_loss = 0.0;
    double generator_loss = 0.0;
};
struct AdversarialResult {
    AffineDenoiser student;
    std::vector<AdversarialLogRow> log;
};
AdversarialResult run_adversarial_demo(const AffineDenoiser& student, const StageSchedule& schedule,
                                       const OrthoResampler& r, const GaussianSource& source,
                                       const SamplerConfig& preset, int iterations, Eigen::Index batch,
                                       double learning_rate, RngStream& rng);

}  // namespace pyramid
