// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gdistill/diffcore.hpp"
#include "gdistill/schedule.hpp"

namespace gdistill {

/// Oracles clamp t into [kOracleTimeMin, kOracleTimeMax] where the
/// posterior mean degenerates.
inline constexpr double kOracleTimeMin = 1e-5;
inline constexpr double kOracleTimeMax = 1.0 - 1e-5;

/// Row-batched prediction triple. Row i satisfies
/// z_i = alpha_i * x_hat_i + sigma_i * eps_hat_i and
/// v_hat_i = alpha_i * eps_hat_i - sigma_i * x_hat_i.
struct DenoiserOutput {
  Matrix x_hat;
  Matrix eps_hat;
  Matrix v_hat;
};

/// x = alpha z - sigma v, eps = sigma z + alpha v, row by row.
DenoiserOutput v_to_outputs(const Matrix& z, std::span<const double> t, const Matrix& v_hat,
                            const NoiseSchedule& schedule);

/// Completes the triple from (x_hat, eps_hat).
DenoiserOutput outputs_from_x_eps(std::span<const double> t, Matrix x_hat, Matrix eps_hat,
                                  const NoiseSchedule& schedule);

/// (1 + w) x_c - w x_u, row i using w[i].
Matrix combine_guided(const Matrix& x_cond, const Matrix& x_uncond, std::span<const double> w);
Vector combine_guided(const Vector& x_cond, const Vector& x_uncond, double w);

/// Interleaved [sin(2 pi f_j u), cos(2 pi f_j u)] rows with frequencies
/// geometric from 1 to max_freq over dim / 2 entries. dim must be even.
Matrix fourier_embedding(std::span<const double> u, std::size_t dim, double max_freq);

/// Fourier embedding of w normalised to [0, 1] over [w_min, w_max] with
/// frequencies 1..64. Out-of-range values are clamped and counted in
/// `clamped` when non-null.
Matrix embed_w(std::span<const double> w, std::size_t dim, double w_min, double w_max,
               std::size_t* clamped = nullptr);

/// Per-row conditioning. An empty span means "not supplied".
struct Conditioning {
  std::span<const int> labels;
  std::span<const double> w;
};

/// Evaluable denoising model. Implementations must be safe to evaluate
/// concurrently when their parameters are frozen.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t dim() const = 0;
  /// Number of real classes; 0 for an unconditional model.
  virtual std::size_t class_count() const = 0;
  /// True when label == class_count() is accepted as the null class.
  virtual bool has_null_class() const { return false; }
  virtual bool w_conditioned() const = 0;
  /// Network evaluations charged per row per call (2 for a guided pair).
  virtual int evaluations_per_call() const { return 1; }
  virtual const NoiseSchedule& schedule() const = 0;

  /// Validates the conditioning against the model, charges the evaluation
  /// counter, then predicts.
  DenoiserOutput eval(const Matrix& z, std::span<const double> t, const Conditioning& cond) const;

  std::uint64_t evaluations() const { return evaluations_.load(); }
  void reset_evaluations() const { evaluations_.store(0); }
  /// Number of rows whose t (or w) had to be clamped.
  std::uint64_t clamp_events() const { return clamps_.load(); }

 protected:
  virtual DenoiserOutput predict(const Matrix& z, std::span<const double> t,
                                 const Conditioning& cond) const = 0;
  void note_clamps(std::uint64_t n) const { clamps_ += n; }

 private:
  mutable std::atomic<std::uint64_t> evaluations_{0};
  mutable std::atomic<std::uint64_t> clamps_{0};
};

using DenoiserPtr = std::shared_ptr<const Denoiser>;

// ------------------------------------------------------------------ datasets

struct GmmComponent {
  Vector mean;
  double scale = 1.0;  // isotropic standard deviation
  double weight = 1.0;
  int label = 0;
};

/// Isotropic Gaussian mixture with a class label per component.
class GmmSpec {
 public:
  GmmSpec() = default;
  explicit GmmSpec(std::vector<GmmComponent> components);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return components_.size(); }
  std::size_t class_count() const { return class_count_; }
  const std::vector<GmmComponent>& components() const { return components_; }

  /// Components of one class with renormalised weights.
  GmmSpec for_class(int label) const;
  GmmSpec shifted(const Vector& offset) const;

  Vector mean() const;
  Matrix covariance() const;
  /// Marginal class probabilities.
  std::vector<double> class_weights() const;

  struct Draw {
    Matrix x;
    std::vector<int> labels;
  };
  Draw sample(std::size_t n, std::mt19937_64& rng) const;
  /// Draws x given fixed per-row labels.
  Matrix sample_given_labels(std::span<const int> labels, std::mt19937_64& rng) const;

 private:
  std::vector<GmmComponent> components_;
  std::size_t dim_ = 0;
  std::size_t class_count_ = 0;
};

// ------------------------------------------------------------------- oracles

/// Exact posterior mean for data ~ N(mean, scale^2 I).
class GaussianOracle final : public Denoiser {
 public:
  GaussianOracle(Vector mean, double scale, NoiseSchedule schedule = {});

  std::string kind() const override { return "gaussian-oracle"; }
  std::size_t dim() const override { return static_cast<std::size_t>(mean_.size()); }
  std::size_t class_count() const override { return 0; }
  bool w_conditioned() const override { return false; }
  const NoiseSchedule& schedule() const override { return schedule_; }

 protected:
  DenoiserOutput predict(const Matrix& z, std::span<const double> t,
                         const Conditioning& cond) const override;

 private:
  Vector mean_;
  double scale_;
  NoiseSchedule schedule_;
};

/// Exact posterior mean E[x | z_t] for a GMM. When class-conditional, the
/// label selects that class's sub-mixture and label == class_count() selects
/// the full mixture.
class GmmOracle final : public Denoiser {
 public:
  GmmOracle(GmmSpec spec, bool class_conditional, NoiseSchedule schedule = {});

  std::string kind() const override { return "gmm-oracle"; }
  std::size_t dim() const override { return spec_.dim(); }
  std::size_t class_count() const override { return conditional_ ? spec_.class_count() : 0; }
  bool has_null_class() const override { return conditional_; }
  bool w_conditioned() const override { return false; }
  const NoiseSchedule& schedule() const override { return schedule_; }
  const GmmSpec& spec() const { return spec_; }

 protected:
  DenoiserOutput predict(const Matrix& z, std::span<const double> t,
                         const Conditioning& cond) const override;

 private:
  GmmSpec spec_;
  bool conditional_;
  NoiseSchedule schedule_;
};

// ------------------------------------------------------------- learned MLP

struct MlpSpec {
  std::size_t dim = 2;
  std::size_t hidden = 256;
  std::size_t layers = 4;
  std::size_t time_embed_dim = 32;
  double time_max_freq = 16.0;
  std::size_t class_count = 0;  // 0: unconditional
  bool null_class = false;      // extra embedding row for the null class
  std::size_t class_embed_dim = 16;
  bool w_conditioned = false;
  std::size_t w_embed_dim = 32;
  double w_min = 0.0;
  double w_max = 4.0;

  /// Stable textual form used for fingerprinting.
  std::string canonical() const;
  std::string fingerprint() const;
  MlpSpec with_w_conditioning(double w_min, double w_max) const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// v-parameterised MLP. Time and w Fourier features are projected to the
/// hidden width and summed; the class embedding and z are concatenated with
/// that sum before the trunk. The `w.*` parameters are the only ones that
/// depend on w.
class MlpDenoiser final : public Denoiser {
 public:
  MlpDenoiser(MlpSpec spec, NoiseSchedule schedule, std::uint64_t init_seed);
  MlpDenoiser(MlpSpec spec, NoiseSchedule schedule, ad::ParamStore params);

  std::unique_ptr<MlpDenoiser> clone() const;

  std::string kind() const override { return "learned-mlp"; }
  std::size_t dim() const override { return spec_.dim; }
  std::size_t class_count() const override { return spec_.class_count; }
  bool has_null_class() const override { return spec_.null_class; }
  bool w_conditioned() const override { return spec_.w_conditioned; }
  const NoiseSchedule& schedule() const override { return schedule_; }

  const MlpSpec& spec() const { return spec_; }
  const ad::ParamStore& params() const { return params_; }
  ad::ParamStore& params() { return params_; }

  /// Rows of a weighted x-space regression batch.
  struct TrainingBatch {
    Matrix z;
    std::vector<double> t;
    std::vector<int> labels;
    std::vector<double> w;
    Matrix target;
    std::vector<double> weight;  // per-row loss weight, normalisation included
  };

  /// Zeroes gradients, then computes sum_i weight_i ||x_hat_i - target_i||^2
  /// and its parameter gradient.
  double loss_and_gradient(const TrainingBatch& batch);

 protected:
  DenoiserOutput predict(const Matrix& z, std::span<const double> t,
                         const Conditioning& cond) const override;

 private:
  void build_graphs();
  ad::Feed make_feed(const Matrix& z, std::span<const double> t, const Conditioning& cond) const;

  MlpSpec spec_;
  NoiseSchedule schedule_;
  ad::ParamStore params_;
  ad::Graph inference_;
  ad::Graph training_;
};

/// Copies every teacher parameter bitwise into a student whose spec differs
/// only by w-conditioning; the w pathway starts at zero so the student
/// initially reproduces the teacher exactly.
std::unique_ptr<MlpDenoiser> init_student_from_teacher(const MlpDenoiser& teacher,
                                                       const MlpSpec& student_spec);

/// Classifier-free guided pair. The two heads may be the same network, in
/// which case the unconditional head is queried with the null class.
class GuidedTeacher final : public Denoiser {
 public:
  GuidedTeacher(DenoiserPtr conditional, DenoiserPtr unconditional);
  /// Single network with a null-class token.
  explicit GuidedTeacher(DenoiserPtr joint);

  std::string kind() const override { return "guided(" + conditional_->kind() + ")"; }
  std::size_t dim() const override { return conditional_->dim(); }
  std::size_t class_count() const override { return conditional_->class_count(); }
  bool w_conditioned() const override { return true; }
  int evaluations_per_call() const override { return 2; }
  const NoiseSchedule& schedule() const override { return conditional_->schedule(); }

  const Denoiser& conditional() const { return *conditional_; }
  const Denoiser& unconditional() const { return *unconditional_; }
  DenoiserPtr conditional_ptr() const { return conditional_; }
  DenoiserPtr unconditional_ptr() const { return unconditional_; }

  /// Both head outputs without combining (used by the two-student baseline).
  std::pair<DenoiserOutput, DenoiserOutput> heads(const Matrix& z, std::span<const double> t,
                                                  const Conditioning& cond) const;

 protected:
  DenoiserOutput predict(const Matrix& z, std::span<const double> t,
                         const Conditioning& cond) const override;

 private:
  DenoiserPtr conditional_;
  DenoiserPtr unconditional_;
};

/// Guided oracle pair for a class-labelled GMM.
std::shared_ptr<GuidedTeacher> make_oracle_teacher(const GmmSpec& spec,
                                                   NoiseSchedule schedule = {});

}  // namespace gdistill
