// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL/WARN line per criterion, tolerances below.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gdistill/config.hpp"
#include "gdistill/distill.hpp"
#include "gdistill/eval.hpp"
#include "gdistill/experiment.hpp"
#include "gdistill/sampler.hpp"

using namespace gdistill;
namespace fs = std::filesystem;

namespace {

constexpr double kIdentityTol = 1e-10;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradAbsFloor = 1e-8;
constexpr double kFdStep = 1e-5;
constexpr double kFlowTol = 1e-2;
constexpr double kRatioLo = 1.5;
constexpr double kRatioHi = 2.5;
constexpr double kMomentSe = 3.0;
constexpr double kStage1Mse = 1e-2;
constexpr double kStage1Seconds = 15 * 60;
constexpr double kParityFactor = 1.5;
constexpr double kParitySeconds = 30 * 60;
// progressive chains for the parity and naive comparisons start here
constexpr int kChainStartSteps = 256;
constexpr double kNaiveFactor = 1.2;
constexpr double kRoundtripFactor = 2.0;
constexpr double kEncoderSeconds = 20 * 60;
constexpr std::uint64_t kSeed = 20240601;
constexpr std::size_t kSamples = 10000;
// energy noise at 1e4 samples is about 2e-4, the size of the w = 0 distances
constexpr std::size_t kParitySamples = 30000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;
std::map<int, std::string> summary;

void report(int id, const char* status, const std::string& detail) {
  std::printf("criterion %d %s %s\n", id, status, detail.c_str());
  std::fflush(stdout);
  summary[id] = status;
  if (std::string(status) == "FAIL") ++failures;
}

void report(int id, bool pass, const std::string& detail) { report(id, pass ? "PASS" : "FAIL", detail); }

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

void progress(const std::string& line) {
  std::printf("  .. %s\n", line.c_str());
  std::fflush(stdout);
}

double max_abs(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

std::vector<double> grid_times(std::size_t n, int steps, int lo, int hi, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(lo, hi);
  std::vector<double> t(n);
  for (double& v : t) v = static_cast<double>(pick(rng)) / steps;
  return t;
}

// ------------------------------------------------------------ criterion 1

void target_identity(const GmmSpec& data) {
  const auto teacher = make_oracle_teacher(data);
  const NoiseSchedule& s = teacher->schedule();
  std::mt19937_64 rng(kSeed + 1);
  std::uniform_real_distribution<double> uw(0.0, 4.0);
  std::map<std::string, double> worst;
  std::map<std::string, std::size_t> count;
  const std::size_t n = 250;
  for (int steps : {2, 4, 16, 64}) {
    const Matrix z = standard_normal(n, data.dim(), rng);
    std::vector<int> labels(n);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng() % data.class_count());
      w[i] = uw(rng);
    }
    const Conditioning cond{labels, w};
    const auto note = [&](const std::string& name, double err, std::size_t rows) {
      worst[name] = std::max(worst[name], err);
      count[name] += rows;
    };

    auto t = grid_times(n, steps, 1, steps, rng);
    auto d = deterministic_target(*teacher, z, t, steps, cond);
    note("det", max_abs(ddim_step(z, t, d.t_end, d.x_target, s), d.endpoint), n);

    t = grid_times(n, steps, 1, steps, rng);
    d = stochastic_target(*teacher, z, t, steps, cond);
    const Matrix one_step = ddim_step(z, t, d.t_end, d.x_target, s);
    for (std::size_t i = 0; i < n; ++i) {
      const double err = (one_step.row(i) - d.endpoint.row(i)).cwiseAbs().maxCoeff();
      note(t[i] * steps < 1.5 ? "stoch-last" : "stoch-double", err, 1);
    }

    t = grid_times(n, steps, 0, steps - 1, rng);
    d = encoder_target(*teacher, z, t, steps, cond);
    std::vector<double> start(n);
    for (std::size_t i = 0; i < n; ++i) start[i] = std::max(t[i], kOracleTimeMin);
    note("encoder", max_abs(ddim_step(z, start, d.t_end, d.x_target, s), d.endpoint), n);

    t = grid_times(n, steps, 1, steps, rng);
    const auto pair = two_student_target(*teacher, z, t, steps, labels, w);
    note("pair-cond", max_abs(ddim_step(z, t, pair.conditional.t_end, pair.conditional.x_target, s),
                              pair.conditional.endpoint),
         n);
    note("pair-uncond", max_abs(ddim_step(z, t, pair.unconditional.t_end, pair.unconditional.x_target, s),
                                pair.unconditional.endpoint),
         n);
  }
  double overall = 0.0;
  std::string detail;
  bool covered = true;
  for (const auto& [name, err] : worst) {
    overall = std::max(overall, err);
    detail += fmt(" %s=%.2e(n=%zu)", name.c_str(), err, count[name]);
    covered = covered && count[name] > 0;
  }
  report(1, covered && overall < kIdentityTol, fmt("max_abs=%.3e tol=%.0e", overall, kIdentityTol) + detail);
}

// ------------------------------------------------------------ criterion 2

void gradient_check() {
  std::mt19937_64 rng(kSeed + 2);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_rel = 0.0;
  std::size_t checked = 0, violations = 0;
  for (int net = 0; net < 50; ++net) {
    MlpSpec spec;
    spec.dim = static_cast<std::size_t>(pick(1, 3));
    spec.hidden = static_cast<std::size_t>(pick(3, 8));
    spec.layers = static_cast<std::size_t>(pick(1, 3));
    spec.time_embed_dim = static_cast<std::size_t>(2 * pick(1, 3));
    spec.time_max_freq = 4.0;
    spec.class_count = static_cast<std::size_t>(pick(0, 3));
    spec.null_class = spec.class_count > 0 && pick(0, 1) == 1;
    spec.class_embed_dim = static_cast<std::size_t>(pick(1, 3));
    spec.w_conditioned = pick(0, 1) == 1;
    spec.w_embed_dim = static_cast<std::size_t>(2 * pick(1, 2));
    MlpDenoiser model(spec, NoiseSchedule{}, rng());

    const std::size_t rows = 5;
    MlpDenoiser::TrainingBatch batch;
    batch.z = standard_normal(rows, spec.dim, rng);
    batch.target = standard_normal(rows, spec.dim, rng);
    for (std::size_t i = 0; i < rows; ++i) {
      batch.t.push_back(0.05 + 0.9 * unit(rng));
      batch.weight.push_back(0.1 + unit(rng));
      if (spec.class_count > 0) {
        batch.labels.push_back(pick(0, static_cast<int>(spec.class_count) - (spec.null_class ? 0 : 1)));
      }
      if (spec.w_conditioned) batch.w.push_back(spec.w_min + (spec.w_max - spec.w_min) * unit(rng));
    }

    model.loss_and_gradient(batch);
    std::map<std::string, std::vector<double>> analytic;
    for (const auto& [name, slot] : model.params().slots()) {
      analytic[name].assign(slot.grad.data().begin(), slot.grad.data().end());
    }
    for (const auto& [name, grads] : analytic) {
      for (std::size_t k = 0; k < grads.size(); ++k) {
        const double original = model.params().value(name).data()[k];
        model.params().mutable_value(name).data()[k] = original + kFdStep;
        const double up = model.loss_and_gradient(batch);
        model.params().mutable_value(name).data()[k] = original - kFdStep;
        const double down = model.loss_and_gradient(batch);
        model.params().mutable_value(name).data()[k] = original;
        const double fd = (up - down) / (2.0 * kFdStep);
        const double abs_err = std::abs(fd - grads[k]);
        const double rel = abs_err / std::max({std::abs(fd), std::abs(grads[k]), kGradAbsFloor});
        ++checked;
        worst_rel = std::max(worst_rel, rel);
        if (rel >= kGradRelTol) ++violations;
      }
    }
  }
  report(2, violations == 0,
         fmt("networks=50 scalars=%zu worst_rel=%.3e violations=%zu tol_rel=%.0e abs_floor=%.0e", checked, worst_rel,
             violations, kGradRelTol, kGradAbsFloor));
}

// --------------------------------------------------------- criteria 3, 4

const Vector kGaussMean{{0.5, -0.25}};
constexpr double kGaussScale = 0.7;

void oracle_convergence() {
  const GaussianOracle oracle(kGaussMean, kGaussScale);
  const Matrix z1 = initial_noise(256, 2, kSeed + 3);
  const Matrix exact = (kGaussScale * z1).rowwise() + kGaussMean.transpose();
  std::map<int, double> err;
  for (int n : {64, 128, 256, 512, 1024}) {
    err[n] = max_abs(ddim_sample(oracle, {n, SamplerMode::Ddim, 0.0, 0}, z1).samples, exact);
  }
  bool pass = err[1024] < kFlowTol;
  std::string detail = fmt("err1024=%.3e tol=%.0e ratios", err[1024], kFlowTol);
  for (int n : {64, 128, 256, 512}) {
    const double r = err[n] / err[2 * n];
    pass = pass && r >= kRatioLo && r <= kRatioHi;
    detail += fmt(" %d:%.3f", n, r);
  }
  report(3, pass, detail + fmt(" band=[%.1f,%.1f]", kRatioLo, kRatioHi));
}

/// Largest deviation of the sample mean and covariance from the analytic
/// values, in standard errors.
double moment_deviation(SamplerMode mode, int steps, std::uint64_t seed) {
  const GaussianOracle oracle(kGaussMean, kGaussScale);
  const double n = static_cast<double>(kSamples);
  const double var = kGaussScale * kGaussScale;
  const double se_mean = kGaussScale / std::sqrt(n);
  const double se_diag = var * std::sqrt(2.0 / n);
  const double se_off = var / std::sqrt(n);
  const Matrix z1 = initial_noise(kSamples, 2, seed);
  const Matrix x = run_sampler(oracle, {steps, mode, 0.0, seed}, z1).samples;
  const Vector mean = sample_mean(x);
  const Matrix cov = sample_covariance(x);
  double worst = 0.0;
  for (int i = 0; i < 2; ++i) {
    worst = std::max(worst, std::abs(mean(i) - kGaussMean(i)) / se_mean);
    for (int j = 0; j < 2; ++j) {
      const double expected = i == j ? var : 0.0;
      worst = std::max(worst, std::abs(cov(i, j) - expected) / (i == j ? se_diag : se_off));
    }
  }
  return worst;
}

void moment_fidelity() {
  struct Run {
    const char* name;
    SamplerMode mode;
    int steps;
  };
  bool pass = true;
  std::string detail;
  for (const Run& run : {Run{"ddim", SamplerMode::Ddim, 1024}, Run{"stochastic", SamplerMode::Stochastic, 16},
                         Run{"ancestral", SamplerMode::Ancestral, 1024}}) {
    const double worst = moment_deviation(run.mode, run.steps, kSeed + 40 + static_cast<std::uint64_t>(run.mode));
    pass = pass && worst < kMomentSe;
    detail += fmt(" %s(N=%d)=%.2fse", run.name, run.steps, worst);
  }
  // not gated: shows the stochastic sampler's bias shrinking with N
  for (int steps : {64, 1024}) {
    detail += fmt(" info:stochastic(N=%d)=%.2fse", steps, moment_deviation(SamplerMode::Stochastic, steps, kSeed + 45));
  }
  report(4, pass, fmt("limit=%.0fse", kMomentSe) + detail);
}

// ------------------------------------------------------------ criterion 7

void tradeoff_direction(const GmmSpec& data) {
  const auto teacher = make_oracle_teacher(data);
  const auto labels = draw_labels(data, kSamples, -1, kSeed + 7);
  const Matrix z1 = initial_noise(kSamples, data.dim(), kSeed + 70);
  std::vector<ModeStats> stats;
  const std::vector<double> ws{0.0, 1.0, 2.0, 4.0};
  for (double w : ws) {
    const Matrix x = ddim_sample(*teacher, {256, SamplerMode::Ddim, w, 0}, z1, labels).samples;
    stats.push_back(mode_stats(x, data, labels, 20, kSeed + 71));
  }
  bool pass = true;
  std::string detail;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    detail += fmt(" w=%g:spread=%.4f(%.4f),entropy=%.4f(%.4f)", ws[i], stats[i].spread, stats[i].spread_se,
                  stats[i].entropy, stats[i].entropy_se);
    if (i == 0) continue;
    const double spread_se = std::max(stats[i].spread_se, stats[i - 1].spread_se);
    const double entropy_se = std::max(stats[i].entropy_se, stats[i - 1].entropy_se);
    pass = pass && stats[i].spread <= stats[i - 1].spread + spread_se;
    pass = pass && stats[i].entropy <= stats[i - 1].entropy + entropy_se;
  }
  report(7, pass, "oracle ddim N=256 samples=10000" + detail);
}

// ---------------------------------------------------- learned pipeline

struct Sampled {
  Matrix x;
  std::uint64_t evaluations = 0;
};

Sampled sample_model(const Denoiser& model, int steps, double w, const GmmSpec& data, std::uint64_t seed,
                     std::size_t rows = kSamples) {
  const auto labels = draw_labels(data, rows, -1, seed);
  const Matrix z1 = initial_noise(rows, data.dim(), seed + 1);
  const auto batch = ddim_sample(model, {steps, SamplerMode::Ddim, w, 0}, z1, labels);
  return {batch.samples, batch.evaluations};
}

double energy_to(const Matrix& x, const Matrix& reference) {
  return energy_distance(x, reference, {20, kSeed + 9}).value;
}

double stage1_mse(const Denoiser& student, const Denoiser& teacher, const GmmSpec& data) {
  std::mt19937_64 rng(kSeed + 5);
  const std::size_t n = 1000;
  double total = 0.0;
  int cells = 0;
  for (int ti = 1; ti <= 9; ++ti) {
    const double t = ti / 10.0;
    for (double w : {0.0, 0.3, 1.0, 2.0, 4.0}) {
      const auto draw = data.sample(n, rng);
      const Matrix eps = standard_normal(n, data.dim(), rng);
      const auto [alpha, sigma] = teacher.schedule().alpha_sigma(t);
      const Matrix z = alpha * draw.x + sigma * eps;
      const std::vector<double> tv(n, t), wv(n, w);
      const Conditioning cond{draw.labels, wv};
      const Matrix diff = student.eval(z, tv, cond).x_hat - teacher.eval(z, tv, cond).x_hat;
      total += diff.squaredNorm() / static_cast<double>(n * data.dim());
      ++cells;
    }
  }
  return total / cells;
}

std::shared_ptr<const MlpDenoiser> find_round(const std::vector<RoundResult>& rounds, int steps) {
  for (const auto& r : rounds) {
    if (r.steps == steps) return r.student;
  }
  throw Error(ErrorCode::Internal, "missing round for N=" + std::to_string(steps));
}

DistillJob acceptance_job(const ExperimentConfig& c, DistillJob job, const char* purpose) {
  job.seed = derive_seed(c.seed, purpose);
  job.w_min = c.w_min;
  job.w_max = c.w_max;
  job.log_every = 0;
  job.progress = {};
  return job;
}

double roundtrip(const Denoiser& encoder, int encode_steps, const Denoiser& decoder, int decode_steps,
                 const Matrix& x, std::span<const int> labels) {
  const auto out = style_transfer(encoder, {encode_steps, SamplerMode::Encode, 0.0, 0}, decoder,
                                  {decode_steps, SamplerMode::Ddim, 0.0, 0}, x, labels, labels);
  return reconstruction_error(x, out.samples).value;
}

void learned_pipeline(const ExperimentConfig& c) {
  const GmmSpec data = c.data.build();
  const auto oracle = make_oracle_teacher(data, c.schedule);
  const auto parity_start = Clock::now();

  // criterion 5
  auto init = std::make_unique<MlpDenoiser>(c.student_spec(), c.schedule, derive_seed(c.seed, "stage1-init"));
  const DistillJob job1 = acceptance_job(c, c.stage1, "stage1");
  progress(fmt("stage1 iterations=%ld hidden=%zu layers=%zu", job1.iterations, c.model.hidden, c.model.layers));
  const std::shared_ptr<const MlpDenoiser> stage1 = distill_stage1(*oracle, std::move(init), data, job1);
  const double stage1_seconds = seconds_since(parity_start);
  const double mse = stage1_mse(*stage1, *oracle, data);
  report(5, mse < kStage1Mse && stage1_seconds < kStage1Seconds,
         fmt("mse=%.5f tol=%.0e train_seconds=%.0f limit=%.0f", mse, kStage1Mse, stage1_seconds, kStage1Seconds));

  // criterion 6: the deterministic chain down to four steps
  const auto log_round = [](const char* stage) {
    return [stage](const RoundResult& r) {
      progress(fmt("%s N=%d loss %.3e -> %.3e", stage, r.steps, r.initial_loss, r.final_loss));
    };
  };
  const DistillJob job2 = acceptance_job(c, c.stage2.job, "distill-stage2");
  auto det = distill_progressive(stage1, data, job2, kChainStartSteps, 4, Stage2Variant::Deterministic,
                                 log_round("stage2"));
  std::mt19937_64 reference_rng(kSeed + 60);
  const Matrix reference = data.sample(kParitySamples, reference_rng).x;
  const auto four = find_round(det.rounds, 4);
  bool parity = true;
  std::string detail;
  for (double w : {0.0, 0.3, 1.0}) {
    const double e4 = energy_to(sample_model(*four, 4, w, data, kSeed + 61, kParitySamples).x, reference);
    const double e512 = energy_to(sample_model(*stage1, 512, w, data, kSeed + 61, kParitySamples).x, reference);
    parity = parity && e4 <= kParityFactor * e512;
    detail += fmt(" w=%g:N4=%.5f,stage1_N512=%.5f", w, e4, e512);
  }
  const double parity_seconds = seconds_since(parity_start);
  report(6, parity && parity_seconds < kParitySeconds,
         fmt("factor=%.1f samples=%zu start_steps=%d seconds=%.0f limit=%.0f", kParityFactor, kParitySamples,
             kChainStartSteps, parity_seconds, kParitySeconds) +
             detail);

  // the same chain continued to one step
  const DistillJob tail_job = acceptance_job(c, c.stage2.job, "distill-stage2-tail");
  const auto tail = distill_progressive(four, data, tail_job, 4, c.stage2.final_steps, Stage2Variant::Deterministic,
                                        log_round("stage2"));
  det.rounds.insert(det.rounds.end(), tail.rounds.begin(), tail.rounds.end());

  // criterion 9
  const auto enc_start = Clock::now();
  const DistillJob jobe = acceptance_job(c, c.encoder.job, "distill-encoder");
  const auto enc = distill_progressive(stage1, data, jobe, c.encoder.start_steps, c.encoder.final_steps,
                                       Stage2Variant::Encoder, log_round("encoder"));
  std::mt19937_64 rng(kSeed + 90);
  const auto draw = data.sample(2000, rng);
  bool encoder_pass = true;
  detail.clear();
  double previous = INFINITY;
  for (int n : {64, 128, 256, 512}) {
    const double rms = roundtrip(*stage1, n, *stage1, n, draw.x, draw.labels);
    encoder_pass = encoder_pass && rms < previous;
    previous = rms;
    detail += fmt(" N=%d:%.5f", n, rms);
  }
  const double distilled = roundtrip(*find_round(enc.rounds, 16), 16, *find_round(det.rounds, 16), 16, draw.x,
                                     draw.labels);
  const double undistilled = roundtrip(*stage1, 16, *stage1, 16, draw.x, draw.labels);
  const double enc_seconds = seconds_since(enc_start);
  encoder_pass = encoder_pass && distilled <= kRoundtripFactor * undistilled && enc_seconds < kEncoderSeconds;
  report(9, encoder_pass,
         fmt("distilled16=%.5f ddim16=%.5f factor=%.1f seconds=%.0f limit=%.0f stage1_rms", distilled, undistilled,
             kRoundtripFactor, enc_seconds, kEncoderSeconds) +
             detail);

  // criterion 10
  const std::size_t rows = 100;
  const auto labels = draw_labels(data, rows, -1, kSeed + 100);
  const Matrix z1 = initial_noise(rows, data.dim(), kSeed + 101);
  const auto fast = ddim_sample(*four, {4, SamplerMode::Ddim, 1.0, 0}, z1, labels);
  const auto slow = ddim_sample(*oracle, {1024, SamplerMode::Ddim, 1.0, 0}, z1, labels);
  const bool exact = fast.evaluations == 4 * rows && slow.evaluations == 2 * 1024 * rows &&
                     slow.evaluations == 512 * fast.evaluations;
  report(10, exact,
         fmt("distilled_N4=%llu guided_N1024=%llu samples=%zu reduction=%.1f",
             static_cast<unsigned long long>(fast.evaluations), static_cast<unsigned long long>(slow.evaluations), rows,
             static_cast<double>(slow.evaluations) / static_cast<double>(fast.evaluations)));

  // criterion 8
  // The two-student baseline starts from a joint network trained on data for
  // the stage-one budget; both methods then distil the same oracle pair.
  DistillJob job_base = acceptance_job(c, c.teacher, "naive-base");
  job_base.iterations = job1.iterations;
  job_base.lr = job1.lr;
  const auto base = train_teacher(data, c.teacher_spec(), job_base, c.schedule);
  auto naive_init = init_student_from_teacher(*base, c.student_spec());
  const DistillJob jobn = acceptance_job(c, c.naive.job, "distill-naive");
  const auto naive =
      naive_two_student(oracle, std::move(naive_init), data, jobn, kChainStartSteps, 1, log_round("naive"));
  bool trend = true;
  detail.clear();
  for (int n : {1, 2}) {
    const GuidedTeacher pair(find_round(naive.rounds, n));
    const auto two_stage = find_round(det.rounds, n);
    for (double w : {0.0, 0.3, 1.0}) {
      const double en = energy_to(sample_model(pair, n, w, data, kSeed + 80).x, reference);
      const double e2 = energy_to(sample_model(*two_stage, n, w, data, kSeed + 80).x, reference);
      trend = trend && en >= kNaiveFactor * e2;
      detail += fmt(" N=%d,w=%g:naive=%.5f,two_stage=%.5f", n, w, en, e2);
    }
  }
  report(8, trend ? "PASS" : "WARN", fmt("factor=%.1f", kNaiveFactor) + detail);
}

// ----------------------------------------------------------- criterion 11

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const char* dir : {"checkpoints", "samples", "metrics"}) {
    if (!fs::exists(root / dir)) continue;
    for (const auto& entry : fs::recursive_directory_iterator(root / dir)) {
      if (!entry.is_regular_file()) continue;
      std::ifstream in(entry.path(), std::ios::binary);
      std::ostringstream bytes;
      bytes << in.rdbuf();
      files[fs::relative(entry.path(), root).string()] = bytes.str();
    }
  }
  return files;
}

void determinism() {
  const fs::path out = fs::temp_directory_path() / "gdistill-acceptance-determinism";
  std::string text = "seed = 11\nmodel.hidden = 16\nmodel.layers = 2\nteacher.iterations = 60\nstage1.iterations = 60\n";
  for (const char* s : {"stage2", "encoder", "naive"}) {
    const std::string p(s);
    text += p + ".iterations = 20\n" + p + ".iterations_small = 20\n" + p + ".start_steps = 8\n";
  }
  text += "encoder.final_steps = 4\nsample.count = 200\nsample.w = 1\neval.reference = 500\nout = " + out.string() +
          "\n";
  const ExperimentConfig c = parse_config(text);
  std::vector<std::map<std::string, std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(out);
    for (const char* sub : {"train-teacher", "distill-stage1", "distill-stage2", "distill-encoder", "distill-naive",
                            "sample", "eval"}) {
      run_subcommand(sub, c);
    }
    runs.push_back(snapshot(out));
  }
  fs::remove_all(out);
  std::size_t differing = 0;
  for (const auto& [name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) ++differing;
  }
  if (runs[1].size() != runs[0].size()) ++differing;
  report(11, differing == 0 && runs[0].size() > 10,
         fmt("files=%zu differing=%zu (checkpoints, samples, metrics)", runs[0].size(), differing));
}

}  // namespace

int main() {
  const auto start = Clock::now();
  try {
    ExperimentConfig c = parse_config("");
    c.seed = kSeed;
    const GmmSpec data = c.data.build();
    target_identity(data);
    gradient_check();
    oracle_convergence();
    moment_fidelity();
    tradeoff_direction(data);
    learned_pipeline(c);
    determinism();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  for (const auto& [id, status] : summary) std::printf("summary criterion %d %s\n", id, status.c_str());
  std::printf("acceptance finished in %.0f s with %d failing criteria\n", seconds_since(start), failures);
  return failures == 0 ? 0 : 1;
}
