// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "gdistill/denoiser.hpp"
#include "gdistill/error.hpp"

namespace gdistill {

enum class SamplerMode { Ddim, Stochastic, Ancestral, Encode };

/// Accepts "ddim"/"det", "stochastic"/"stoch", "ancestral", "encode".
SamplerMode parse_sampler_mode(std::string_view name);
std::string_view sampler_mode_name(SamplerMode mode);

struct SamplerPlan {
  int steps = 1;
  SamplerMode mode = SamplerMode::Ddim;
  double w = 0.0;
  std::uint64_t seed = 0;
  bool record_trajectory = false;
};

/// Batch states at each visited time, in visiting order.
struct Trajectory {
  std::vector<double> times;
  std::vector<Matrix> states;

  void push(double t, const Matrix& z) {
    times.push_back(t);
    states.push_back(z);
  }
  /// CSV with columns step,t,sample,z0..z{d-1}; at most `max_samples` rows per step.
  void write_csv(const std::filesystem::path& path, std::size_t max_samples = 64) const;
};

struct SampleBatch {
  Matrix samples;
  Trajectory trajectory;
  std::uint64_t evaluations = 0;  // network evaluations, summed over rows
  std::uint64_t clamped_rows = 0;
};

class SamplerDiverged : public Error {
 public:
  SamplerDiverged(const std::string& message, Trajectory trajectory)
      : Error(ErrorCode::Numeric, message), trajectory_(std::move(trajectory)) {}
  const Trajectory& trajectory() const { return trajectory_; }

 private:
  Trajectory trajectory_;
};

/// z_s = alpha_s x_hat + sigma_s (z_t - alpha_t x_hat) / sigma_t.
/// Works in either direction (s < t samples, s > t encodes); sigma_t must be > 0.
Matrix ddim_step(const Matrix& z_t, double t, double s, const Matrix& x_hat,
                 const NoiseSchedule& schedule);

/// The unique x_hat for which ddim_step(z_t, t, s, x_hat) == z_s:
/// (z_s - (sigma_s / sigma_t) z_t) / (alpha_s - (sigma_s / sigma_t) alpha_t).
/// Rejects a denominator below 1e-12 in magnitude.
Matrix ddim_x_target(const Matrix& z_t, double t, const Matrix& z_s, double s,
                     const NoiseSchedule& schedule);

/// Row-wise forms: row i steps from t[i] to s[i].
Matrix ddim_step(const Matrix& z_t, std::span<const double> t, std::span<const double> s,
                 const Matrix& x_hat, const NoiseSchedule& schedule);
Matrix ddim_x_target(const Matrix& z_t, std::span<const double> t, const Matrix& z_s,
                     std::span<const double> s, const NoiseSchedule& schedule);

/// Forward re-noising from time k to the noisier time s:
/// (alpha_s / alpha_k) z_k + sigma_{s|k} eps.
Matrix renoise(const Matrix& z_k, double k, double s, const Matrix& eps,
               const NoiseSchedule& schedule);

Matrix standard_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng);
/// z_1 ~ N(0, I) drawn from its own stream of `seed`.
Matrix initial_noise(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// Deterministic sampler on t = 1, (N-1)/N, ..., 1/N; the sample is x_hat at
/// the last state. Exactly N evaluations per row.
SampleBatch ddim_sample(const Denoiser& model, const SamplerPlan& plan, const Matrix& z1,
                        std::span<const int> labels = {});

/// Double-length deterministic step followed by a single-length re-noise;
/// the last step from 1/N is deterministic, so N = 1 is a single DDIM step.
SampleBatch stochastic_sample(const Denoiser& model, const SamplerPlan& plan, const Matrix& z1,
                              std::span<const int> labels = {});

/// Gaussian posterior sampler with variance (1 - e^(lambda_t - lambda_s)) sigma_s^2.
SampleBatch ancestral_sample(const Denoiser& model, const SamplerPlan& plan, const Matrix& z1,
                             std::span<const int> labels = {});

/// Reversed DDIM from z_0 = x up to t = 1. The first step uses the noise
/// estimate at t = kOracleTimeMin since sigma_0 = 0.
SampleBatch encode(const Denoiser& model, const SamplerPlan& plan, const Matrix& x,
                   std::span<const int> labels = {});

/// Dispatches on plan.mode. For Encode, `start` is the data batch.
SampleBatch run_sampler(const Denoiser& model, const SamplerPlan& plan, const Matrix& start,
                        std::span<const int> labels = {});

/// Encode with `encoder` then decode the latent deterministically with `decoder`.
SampleBatch style_transfer(const Denoiser& encoder, const SamplerPlan& encode_plan,
                           const Denoiser& decoder, const SamplerPlan& decode_plan,
                           const Matrix& x, std::span<const int> encode_labels = {},
                           std::span<const int> decode_labels = {});

}  // namespace gdistill
