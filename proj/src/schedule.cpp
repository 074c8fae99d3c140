// SPDX-License-Identifier: Apache-2.0
#include "gdistill/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gdistill/error.hpp"

namespace gdistill {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
    case ErrorCode::Fingerprint: return "fingerprint_mismatch";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::UnknownCommand: return "unknown_subcommand";
    case ErrorCode::Internal: return "internal";
  }
  return "internal";
}

NoiseSchedule NoiseSchedule::parse(std::string_view name) {
  if (name == "cosine-vp") return NoiseSchedule(ScheduleKind::CosineVP);
  fail(ErrorCode::Config, "unknown schedule kind '" + std::string(name) + "'");
}

std::string_view NoiseSchedule::name() const { return "cosine-vp"; }

AlphaSigma NoiseSchedule::alpha_sigma(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "schedule time outside [0, 1]: " + std::to_string(t));
  }
  if (t == 0.0) return {1.0, 0.0};
  if (t == 1.0) return {0.0, 1.0};
  const double angle = 0.5 * std::numbers::pi * t;
  return {std::cos(angle), std::sin(angle)};
}

double NoiseSchedule::log_snr(double t) const {
  if (!(t > 0.0 && t < 1.0)) {
    fail(ErrorCode::InvalidArgument, "log-SNR is infinite at t = " + std::to_string(t));
  }
  const auto [alpha, sigma] = alpha_sigma(t);
  return 2.0 * (std::log(alpha) - std::log(sigma));
}

LossWeightKind parse_loss_weight(std::string_view name) {
  if (name == "snr") return LossWeightKind::Snr;
  if (name == "truncated-snr") return LossWeightKind::TruncatedSnr;
  fail(ErrorCode::Config, "unknown loss weight '" + std::string(name) + "'");
}

std::string_view loss_weight_name(LossWeightKind kind) {
  return kind == LossWeightKind::Snr ? "snr" : "truncated-snr";
}

double loss_weight(LossWeightKind kind, double lambda) {
  require(std::isfinite(lambda), "loss weight needs a finite log-SNR");
  const double snr = std::exp(lambda);
  return kind == LossWeightKind::Snr ? snr : std::max(snr, 1.0);
}

double loss_weight_at(LossWeightKind kind, const NoiseSchedule& schedule, double t) {
  const auto [alpha, sigma] = schedule.alpha_sigma(t);
  require(sigma > 0.0, "loss weight is unbounded at t = 0");
  const double snr = (alpha * alpha) / (sigma * sigma);
  return kind == LossWeightKind::Snr ? snr : std::max(snr, 1.0);
}

double bridge_variance(double lambda_a, double lambda_b, double sigma_a) {
  require(sigma_a >= 0.0, "bridge variance needs sigma_a >= 0");
  if (lambda_a > lambda_b) {
    fail(ErrorCode::InvalidArgument, "bridge variance needs lambda_a <= lambda_b");
  }
  if (std::isinf(lambda_b)) return sigma_a * sigma_a;
  return -std::expm1(lambda_a - lambda_b) * sigma_a * sigma_a;
}

double bridge_variance(const NoiseSchedule& schedule, double a, double b) {
  require(b >= 0.0 && b <= a && a < 1.0, "bridge variance needs 0 <= b <= a < 1");
  const auto sa = schedule.alpha_sigma(a);
  const auto sb = schedule.alpha_sigma(b);
  const double ratio = sa.alpha / sb.alpha;
  return std::max(0.0, sa.sigma * sa.sigma - ratio * ratio * sb.sigma * sb.sigma);
}

}  // namespace gdistill
