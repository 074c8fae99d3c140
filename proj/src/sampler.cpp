// SPDX-License-Identifier: Apache-2.0
#include "gdistill/sampler.hpp"

#include <cmath>
#include <fstream>

namespace gdistill {

SamplerMode parse_sampler_mode(std::string_view name) {
  if (name == "ddim" || name == "det") return SamplerMode::Ddim;
  if (name == "stochastic" || name == "stoch") return SamplerMode::Stochastic;
  if (name == "ancestral") return SamplerMode::Ancestral;
  if (name == "encode") return SamplerMode::Encode;
  fail(ErrorCode::InvalidArgument, "unknown sampler '" + std::string(name) + "'");
}

std::string_view sampler_mode_name(SamplerMode mode) {
  switch (mode) {
    case SamplerMode::Ddim: return "ddim";
    case SamplerMode::Stochastic: return "stochastic";
    case SamplerMode::Ancestral: return "ancestral";
    case SamplerMode::Encode: return "encode";
  }
  return "ddim";
}

void Trajectory::write_csv(const std::filesystem::path& path, std::size_t max_samples) const {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write trajectory to " + path.string());
  out.precision(17);
  const auto d = states.empty() ? 0 : states.front().cols();
  out << "step,t,sample";
  for (Eigen::Index j = 0; j < d; ++j) out << ",z" << j;
  out << '\n';
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto rows = std::min<Eigen::Index>(states[k].rows(), static_cast<Eigen::Index>(max_samples));
    for (Eigen::Index i = 0; i < rows; ++i) {
      out << k << ',' << times[k] << ',' << i;
      for (Eigen::Index j = 0; j < d; ++j) out << ',' << states[k](i, j);
      out << '\n';
    }
  }
}

Matrix ddim_step(const Matrix& z_t, double t, double s, const Matrix& x_hat,
                 const NoiseSchedule& schedule) {
  const auto at = schedule.alpha_sigma(t);
  const auto as = schedule.alpha_sigma(s);
  require(at.sigma > 0.0, "DDIM step needs sigma_t > 0");
  return as.alpha * x_hat + (as.sigma / at.sigma) * (z_t - at.alpha * x_hat);
}

Matrix ddim_x_target(const Matrix& z_t, double t, const Matrix& z_s, double s,
                     const NoiseSchedule& schedule) {
  const auto at = schedule.alpha_sigma(t);
  const auto as = schedule.alpha_sigma(s);
  require(at.sigma > 0.0, "target inversion needs sigma_t > 0");
  const double ratio = as.sigma / at.sigma;
  const double denom = as.alpha - ratio * at.alpha;
  if (std::abs(denom) < 1e-12) {
    fail(ErrorCode::Numeric, "degenerate target denominator between t=" + std::to_string(t) +
                                 " and s=" + std::to_string(s));
  }
  return (z_s - ratio * z_t) / denom;
}

Matrix ddim_step(const Matrix& z_t, std::span<const double> t, std::span<const double> s,
                 const Matrix& x_hat, const NoiseSchedule& schedule) {
  require(t.size() == static_cast<std::size_t>(z_t.rows()) && s.size() == t.size(),
          "row-wise DDIM step needs one (t, s) pair per row");
  Matrix out(z_t.rows(), z_t.cols());
  for (Eigen::Index i = 0; i < z_t.rows(); ++i) {
    const auto at = schedule.alpha_sigma(t[static_cast<std::size_t>(i)]);
    const auto as = schedule.alpha_sigma(s[static_cast<std::size_t>(i)]);
    require(at.sigma > 0.0, "DDIM step needs sigma_t > 0");
    out.row(i) = as.alpha * x_hat.row(i) + (as.sigma / at.sigma) * (z_t.row(i) - at.alpha * x_hat.row(i));
  }
  return out;
}

Matrix ddim_x_target(const Matrix& z_t, std::span<const double> t, const Matrix& z_s,
                     std::span<const double> s, const NoiseSchedule& schedule) {
  require(t.size() == static_cast<std::size_t>(z_t.rows()) && s.size() == t.size(),
          "row-wise target needs one (t, s) pair per row");
  Matrix out(z_t.rows(), z_t.cols());
  for (Eigen::Index i = 0; i < z_t.rows(); ++i) {
    const double ti = t[static_cast<std::size_t>(i)];
    const double si = s[static_cast<std::size_t>(i)];
    out.row(i) = ddim_x_target(z_t.row(i), ti, z_s.row(i), si, schedule);
  }
  return out;
}

Matrix renoise(const Matrix& z_k, double k, double s, const Matrix& eps,
               const NoiseSchedule& schedule) {
  const auto ak = schedule.alpha_sigma(k);
  const auto as = schedule.alpha_sigma(s);
  const double std_dev = std::sqrt(bridge_variance(schedule, s, k));
  return (as.alpha / ak.alpha) * z_k + std_dev * eps;
}

Matrix standard_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal(rng);
  }
  return m;
}

Matrix initial_noise(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 1u};
  std::mt19937_64 rng(seq);
  return standard_normal(rows, cols, rng);
}

namespace {

std::mt19937_64 sampler_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 2u};
  return std::mt19937_64(seq);
}

// Shared bookkeeping for one sampler invocation.
class Run {
 public:
  Run(const Denoiser& model, const SamplerPlan& plan, const Matrix& start,
      std::span<const int> labels)
      : model_(model), plan_(plan), labels_(labels) {
    require(plan.steps >= 1, "sampler needs at least one step");
    require(static_cast<std::size_t>(start.cols()) == model.dim(), "start state has wrong dimension");
    const auto n = static_cast<std::size_t>(start.rows());
    if (model.w_conditioned()) {
      w_.assign(n, plan.w);
    } else if (plan.w != 0.0) {
      fail(ErrorCode::InvalidArgument, model.kind() + " cannot apply guidance weight w != 0");
    }
    if (!labels.empty()) require(labels.size() == n, "one label per sample required");
    t_.resize(n);
  }

  DenoiserOutput eval(const Matrix& z, double t) {
    std::fill(t_.begin(), t_.end(), t);
    const auto clamps_before = model_.clamp_events();
    auto out = model_.eval(z, t_, Conditioning{labels_, w_});
    batch_.clamped_rows += model_.clamp_events() - clamps_before;
    batch_.evaluations += t_.size() * static_cast<std::uint64_t>(model_.evaluations_per_call());
    return out;
  }

  void flag_clamped(std::uint64_t rows) { batch_.clamped_rows += rows; }

  void record(double t, const Matrix& z) {
    if (!z.allFinite()) {
      batch_.trajectory.push(t, z);
      throw SamplerDiverged("non-finite sampler state at t=" + std::to_string(t),
                            std::move(batch_.trajectory));
    }
    if (plan_.record_trajectory) batch_.trajectory.push(t, z);
  }

  SampleBatch finish(Matrix samples, double t_final, bool record_final = true) {
    if (record_final) record(t_final, samples);
    batch_.samples = std::move(samples);
    return std::move(batch_);
  }

  const NoiseSchedule& schedule() const { return model_.schedule(); }

 private:
  const Denoiser& model_;
  const SamplerPlan& plan_;
  std::span<const int> labels_;
  std::vector<double> w_;
  std::vector<double> t_;
  SampleBatch batch_;
};

double grid(int i, int n) { return static_cast<double>(i) / static_cast<double>(n); }

}  // namespace

SampleBatch ddim_sample(const Denoiser& model, const SamplerPlan& plan, const Matrix& z1,
                        std::span<const int> labels) {
  Run run(model, plan, z1, labels);
  const int n = plan.steps;
  Matrix z = z1;
  run.record(1.0, z);
  for (int i = n; i > 1; --i) {
    const double t = grid(i, n);
    const double s = grid(i - 1, n);
    z = ddim_step(z, t, s, run.eval(z, t).x_hat, run.schedule());
    run.record(s, z);
  }
  return run.finish(run.eval(z, grid(1, n)).x_hat, 0.0);
}

SampleBatch stochastic_sample(const Denoiser& model, const SamplerPlan& plan, const Matrix& z1,
                              std::span<const int> labels) {
  require(plan.steps >= 1, "stochastic sampling needs N >= 1");
  Run run(model, plan, z1, labels);
  auto rng = sampler_rng(plan.seed);
  const int n = plan.steps;
  Matrix z = z1;
  run.record(1.0, z);
  for (int i = n; i > 1; --i) {
    const double t = grid(i, n);
    const double k = grid(i - 2, n);
    const double s = grid(i - 1, n);
    const Matrix z_k = ddim_step(z, t, k, run.eval(z, t).x_hat, run.schedule());
    const Matrix eps = standard_normal(static_cast<std::size_t>(z.rows()),
                                       static_cast<std::size_t>(z.cols()), rng);
    z = renoise(z_k, k, s, eps, run.schedule());
    run.record(s, z);
  }
  return run.finish(run.eval(z, grid(1, n)).x_hat, 0.0);
}

SampleBatch ancestral_sample(const Denoiser& model, const SamplerPlan& plan, const Matrix& z1,
                             std::span<const int> labels) {
  Run run(model, plan, z1, labels);
  auto rng = sampler_rng(plan.seed);
  const int n = plan.steps;
  Matrix z = z1;
  run.record(1.0, z);
  for (int i = n; i > 1; --i) {
    const double t = grid(i, n);
    const double s = grid(i - 1, n);
    const auto at = run.schedule().alpha_sigma(t);
    const auto as = run.schedule().alpha_sigma(s);
    // r = e^(lambda_t - lambda_s); the z coefficient r * alpha_s / alpha_t is
    // written without dividing by alpha_t so t = 1 stays finite.
    const double r = std::pow(at.alpha * as.sigma / (at.sigma * as.alpha), 2);
    const double z_coef = at.alpha * as.sigma * as.sigma / (at.sigma * at.sigma * as.alpha);
    const double variance = (1.0 - r) * as.sigma * as.sigma;
    const Matrix x_hat = run.eval(z, t).x_hat;
    const Matrix eps = standard_normal(static_cast<std::size_t>(z.rows()),
                                       static_cast<std::size_t>(z.cols()), rng);
    z = z_coef * z + (1.0 - r) * as.alpha * x_hat + std::sqrt(std::max(variance, 0.0)) * eps;
    run.record(s, z);
  }
  return run.finish(run.eval(z, grid(1, n)).x_hat, 0.0);
}

SampleBatch encode(const Denoiser& model, const SamplerPlan& plan, const Matrix& x,
                   std::span<const int> labels) {
  Run run(model, plan, x, labels);
  const int n = plan.steps;
  const auto& schedule = run.schedule();
  run.record(0.0, x);

  const double first = grid(1, n);
  const auto a1 = schedule.alpha_sigma(first);
  Matrix z = a1.alpha * x + a1.sigma * run.eval(x, kOracleTimeMin).eps_hat;
  run.flag_clamped(static_cast<std::uint64_t>(x.rows()));
  run.record(first, z);
  for (int i = 1; i < n; ++i) {
    const double t = grid(i, n);
    const double s = grid(i + 1, n);
    z = ddim_step(z, t, s, run.eval(z, t).x_hat, schedule);
    run.record(s, z);
  }
  return run.finish(std::move(z), 1.0, false);
}

SampleBatch run_sampler(const Denoiser& model, const SamplerPlan& plan, const Matrix& start,
                        std::span<const int> labels) {
  switch (plan.mode) {
    case SamplerMode::Ddim: return ddim_sample(model, plan, start, labels);
    case SamplerMode::Stochastic: return stochastic_sample(model, plan, start, labels);
    case SamplerMode::Ancestral: return ancestral_sample(model, plan, start, labels);
    case SamplerMode::Encode: return encode(model, plan, start, labels);
  }
  fail(ErrorCode::Internal, "unhandled sampler mode");
}

SampleBatch style_transfer(const Denoiser& encoder, const SamplerPlan& encode_plan,
                           const Denoiser& decoder, const SamplerPlan& decode_plan,
                           const Matrix& x, std::span<const int> encode_labels,
                           std::span<const int> decode_labels) {
  require(encoder.dim() == decoder.dim(), "encoder and decoder differ in dimension");
  require(decode_plan.mode != SamplerMode::Encode, "decode plan cannot be an encode plan");
  SampleBatch latent = encode(encoder, encode_plan, x, encode_labels);
  SampleBatch decoded = run_sampler(decoder, decode_plan, latent.samples, decode_labels);
  decoded.evaluations += latent.evaluations;
  decoded.clamped_rows += latent.clamped_rows;
  return decoded;
}

}  // namespace gdistill
