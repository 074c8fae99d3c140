// SPDX-License-Identifier: Apache-2.0
#include "gdistill/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "gdistill/error.hpp"

namespace gdistill {
namespace {

double mean_pair_distance(const Matrix& a, const Matrix& b) {
  const Eigen::Index d = a.cols();
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i).data();
    double row = 0.0;
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double* bj = b.row(j).data();
      double sq = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = ai[k] - bj[k];
        sq += diff * diff;
      }
      row += std::sqrt(sq);
    }
    total += row;
  }
  return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

/// Mean over i != j; 0 for a single row.
double mean_within_distance(const Matrix& a) {
  const Eigen::Index n = a.rows();
  if (n < 2) return 0.0;
  const Eigen::Index d = a.cols();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* ai = a.row(i).data();
    double row = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double* aj = a.row(j).data();
      double sq = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = ai[k] - aj[k];
        sq += diff * diff;
      }
      row += std::sqrt(sq);
    }
    total += row;
  }
  return 2.0 * total / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

struct Occupancy {
  double entropy = 0.0;
  double spread = 0.0;
};

/// Entropy and spread for the multiset given by `index` (sample indices).
Occupancy occupancy(const Matrix& samples, const std::vector<std::size_t>& mode, std::size_t modes,
                    const std::vector<std::size_t>& index) {
  const Eigen::Index d = samples.cols();
  std::vector<double> count(modes, 0.0);
  Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(modes), d);
  std::vector<double> sq(modes, 0.0);
  for (std::size_t i : index) {
    const std::size_t k = mode[i];
    count[k] += 1.0;
    sum.row(static_cast<Eigen::Index>(k)) += samples.row(static_cast<Eigen::Index>(i));
    sq[k] += samples.row(static_cast<Eigen::Index>(i)).squaredNorm();
  }
  const double n = static_cast<double>(index.size());
  Occupancy out;
  double within = 0.0;
  for (std::size_t k = 0; k < modes; ++k) {
    if (count[k] == 0.0) continue;
    const double p = count[k] / n;
    out.entropy -= p * std::log(p);
    if (count[k] < 2.0) continue;
    // trace of the unbiased covariance
    const double trace = (sq[k] - sum.row(static_cast<Eigen::Index>(k)).squaredNorm() / count[k]) / (count[k] - 1.0);
    within += p * std::max(trace, 0.0);
  }
  out.spread = std::sqrt(within / static_cast<double>(d));
  return out;
}

}  // namespace

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["metric"] = metric;
  j["value"] = value;
  j["std_error"] = std_error;
  j["samples"] = samples;
  j["fingerprint"] = fingerprint;
  return j.dump();
}

double energy_statistic(const Matrix& a, const Matrix& b) {
  require(a.rows() > 0 && b.rows() > 0, "energy distance needs non-empty sets");
  require(a.cols() == b.cols(), "energy distance sets differ in dimension");
  if (a.rows() == b.rows() && a == b) return 0.0;
  return 2.0 * mean_pair_distance(a, b) - mean_within_distance(a) - mean_within_distance(b);
}

MetricReport energy_distance(const Matrix& a, const Matrix& b, const EnergyOptions& options) {
  MetricReport report;
  report.metric = "energy_distance";
  report.value = energy_statistic(a, b);
  report.samples = static_cast<std::size_t>(std::min(a.rows(), b.rows()));
  if (report.value == 0.0 && a.rows() == b.rows() && a == b) return report;

  // Batch means: disjoint batches of a shuffled copy, SE = sd / sqrt(batches).
  const std::size_t batches = options.bootstrap;
  const auto na = static_cast<std::size_t>(a.rows());
  const auto nb = static_cast<std::size_t>(b.rows());
  if (batches < 2 || na < 2 * batches || nb < 2 * batches) return report;
  auto rng = make_stream(options.seed, 0xED);
  std::vector<std::size_t> ia(na), ib(nb);
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ib.begin(), ib.end(), 0);
  std::shuffle(ia.begin(), ia.end(), rng);
  std::shuffle(ib.begin(), ib.end(), rng);
  const std::size_t ma = na / batches;
  const std::size_t mb = nb / batches;
  std::vector<double> stats;
  for (std::size_t k = 0; k < batches; ++k) {
    Matrix sa(static_cast<Eigen::Index>(ma), a.cols());
    Matrix sb(static_cast<Eigen::Index>(mb), b.cols());
    for (std::size_t i = 0; i < ma; ++i) sa.row(static_cast<Eigen::Index>(i)) = a.row(static_cast<Eigen::Index>(ia[k * ma + i]));
    for (std::size_t i = 0; i < mb; ++i) sb.row(static_cast<Eigen::Index>(i)) = b.row(static_cast<Eigen::Index>(ib[k * mb + i]));
    stats.push_back(2.0 * mean_pair_distance(sa, sb) - mean_within_distance(sa) - mean_within_distance(sb));
  }
  report.std_error = stddev(stats) / std::sqrt(static_cast<double>(batches));
  return report;
}

std::vector<std::size_t> nearest_modes(const Matrix& samples, const GmmSpec& spec) {
  require(spec.size() > 0, "mode statistics need mode centres");
  require(static_cast<std::size_t>(samples.cols()) == spec.dim(), "samples and mixture differ in dimension");
  std::vector<std::size_t> out(static_cast<std::size_t>(samples.rows()));
  const auto& comps = spec.components();
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t k = 0; k < comps.size(); ++k) {
      const double d2 = (samples.row(i).transpose() - comps[k].mean).squaredNorm();
      if (d2 < best) {
        best = d2;
        arg = k;
      }
    }
    out[static_cast<std::size_t>(i)] = arg;
  }
  return out;
}

ModeStats mode_stats(const Matrix& samples, const GmmSpec& spec, std::span<const int> labels, std::size_t bootstrap,
                     std::uint64_t seed) {
  require(samples.rows() > 0, "mode statistics need samples");
  require(labels.empty() || labels.size() == static_cast<std::size_t>(samples.rows()),
          "mode statistics need one label per sample");
  const auto mode = nearest_modes(samples, spec);
  const std::size_t modes = spec.size();
  const auto n = static_cast<std::size_t>(samples.rows());
  const Eigen::Index d = samples.cols();

  ModeStats stats;
  stats.counts.assign(modes, 0);
  for (std::size_t k : mode) ++stats.counts[k];
  for (std::size_t k = 0; k < modes; ++k) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < n; ++i) {
      if (mode[i] == k) rows.push_back(static_cast<Eigen::Index>(i));
    }
    if (rows.empty()) {
      stats.means.push_back(spec.components()[k].mean);
      stats.covariances.push_back(Matrix::Zero(d, d));
      continue;
    }
    Matrix sub(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = samples.row(rows[r]);
    stats.means.push_back(sample_mean(sub));
    stats.covariances.push_back(rows.size() < 2 ? Matrix::Zero(d, d) : sample_covariance(sub));
  }

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const Occupancy point = occupancy(samples, mode, modes, all);
  stats.entropy = point.entropy;
  stats.spread = point.spread;

  if (!labels.empty()) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (spec.components()[mode[i]].label == labels[i]) ++hits;
    }
    stats.label_accuracy = static_cast<double>(hits) / static_cast<double>(n);
  }

  if (bootstrap >= 2) {
    auto rng = make_stream(seed, 0xB0);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> entropies, spreads;
    std::vector<std::size_t> index(n);
    for (std::size_t b = 0; b < bootstrap; ++b) {
      for (auto& i : index) i = pick(rng);
      const Occupancy o = occupancy(samples, mode, modes, index);
      entropies.push_back(o.entropy);
      spreads.push_back(o.spread);
    }
    stats.entropy_se = stddev(entropies);
    stats.spread_se = stddev(spreads);
  }
  return stats;
}

MetricReport reconstruction_error(const Matrix& x, const Matrix& y) {
  require(x.rows() == y.rows() && x.cols() == y.cols(), "reconstruction pairs differ in shape");
  require(x.rows() > 0, "reconstruction error needs pairs");
  MetricReport report;
  report.metric = "reconstruction_rms";
  report.samples = static_cast<std::size_t>(x.rows());
  const Eigen::VectorXd per = (x - y).rowwise().squaredNorm();
  report.value = std::sqrt(per.mean());
  if (x.rows() > 1) {
    // delta method on the mean squared error
    const double mse = per.mean();
    const double var = (per.array() - mse).square().sum() / static_cast<double>(x.rows() - 1);
    report.std_error = mse > 0.0 ? std::sqrt(var / static_cast<double>(x.rows())) / (2.0 * std::sqrt(mse)) : 0.0;
  }
  return report;
}

Vector sample_mean(const Matrix& x) {
  require(x.rows() > 0, "mean of an empty set");
  return x.colwise().mean().transpose();
}

Matrix sample_covariance(const Matrix& x) {
  require(x.rows() > 1, "covariance needs two or more rows");
  const Matrix centred = x.rowwise() - x.colwise().mean();
  return (centred.transpose() * centred) / static_cast<double>(x.rows() - 1);
}

}  // namespace gdistill
