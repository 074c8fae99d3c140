// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdistill/denoiser.hpp"

namespace gdistill {

struct MetricReport {
  std::string metric;
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
  std::string fingerprint;

  std::string to_json() const;
};

struct EnergyOptions {
  std::size_t bootstrap = 20;
  std::uint64_t seed = 0;
};

/// Unbiased energy statistic 2E|a-b| - E|a-a'| - E|b-b'|. Identical sets give
/// exactly 0. The standard error comes from `bootstrap` disjoint batches of
/// shuffled rows: sd(batch statistics) / sqrt(bootstrap).
MetricReport energy_distance(const Matrix& a, const Matrix& b, const EnergyOptions& options = {});

/// Point estimate only.
double energy_statistic(const Matrix& a, const Matrix& b);

struct ModeStats {
  std::vector<std::size_t> counts;
  std::vector<Vector> means;        // empirical mean per mode (centre when empty)
  std::vector<Matrix> covariances;  // empirical covariance per mode (zero when < 2 samples)
  double entropy = 0.0;             // occupancy entropy, nats
  /// sqrt(sum_k p_k trace(C_k) / d): occupancy-weighted within-mode deviation.
  double spread = 0.0;
  double entropy_se = 0.0;
  double spread_se = 0.0;
  /// Fraction of samples whose nearest mode belongs to `labels[i]`'s class.
  double label_accuracy = 0.0;
};

/// Hard nearest-centre assignment to the mixture's component means. When
/// `labels` is non-empty it must have one entry per sample.
ModeStats mode_stats(const Matrix& samples, const GmmSpec& spec, std::span<const int> labels = {},
                     std::size_t bootstrap = 20, std::uint64_t seed = 0);

std::vector<std::size_t> nearest_modes(const Matrix& samples, const GmmSpec& spec);

/// sqrt(mean_i ||x_i - y_i||^2).
MetricReport reconstruction_error(const Matrix& x, const Matrix& y);

/// Mean and covariance of the rows.
Vector sample_mean(const Matrix& x);
Matrix sample_covariance(const Matrix& x);

}  // namespace gdistill
