// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

namespace gdistill {

struct AlphaSigma {
  double alpha;
  double sigma;
};

enum class ScheduleKind { CosineVP };

/// Variance-preserving noise schedule: alpha_t^2 + sigma_t^2 = 1 on [0, 1].
///
/// Only the cosine form is provided: alpha = cos(pi t / 2), sigma = sin(pi t / 2).
/// The endpoints are exact (alpha_0 = 1, sigma_1 = 1, both complements 0).
class NoiseSchedule {
 public:
  constexpr NoiseSchedule() = default;
  constexpr explicit NoiseSchedule(ScheduleKind kind) : kind_(kind) {}

  /// Parses a config string; only "cosine-vp" is recognised.
  static NoiseSchedule parse(std::string_view name);

  ScheduleKind kind() const { return kind_; }
  std::string_view name() const;

  /// Rejects t outside [0, 1].
  AlphaSigma alpha_sigma(double t) const;

  /// log(alpha^2 / sigma^2). The endpoints map to +/-inf and are rejected;
  /// callers that touch t = 0 or t = 1 work with alpha/sigma directly.
  double log_snr(double t) const;

 private:
  ScheduleKind kind_ = ScheduleKind::CosineVP;
};

enum class LossWeightKind { Snr, TruncatedSnr };

LossWeightKind parse_loss_weight(std::string_view name);
std::string_view loss_weight_name(LossWeightKind kind);

/// snr: e^lambda. truncated-snr: max(e^lambda, 1).
double loss_weight(LossWeightKind kind, double lambda);

/// Loss weight evaluated from time directly so that t = 1 (lambda = -inf)
/// is usable: snr gives 0 there, truncated-snr gives 1. Rejects t = 0.
double loss_weight_at(LossWeightKind kind, const NoiseSchedule& schedule, double t);

/// Variance of the forward re-noising step from time b to the noisier time a:
/// (1 - e^(lambda_a - lambda_b)) sigma_a^2. Requires lambda_a <= lambda_b.
double bridge_variance(double lambda_a, double lambda_b, double sigma_a);

/// Same quantity expressed through the schedule, valid for b = 0 (lambda_b = inf):
/// sigma_a^2 - (alpha_a / alpha_b)^2 sigma_b^2. Requires 0 <= b <= a < 1.
double bridge_variance(const NoiseSchedule& schedule, double a, double b);

}  // namespace gdistill
