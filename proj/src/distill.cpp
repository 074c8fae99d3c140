// SPDX-License-Identifier: Apache-2.0
#include "gdistill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <utility>

#include "gdistill/sampler.hpp"

namespace gdistill {
namespace {

enum StreamTag : std::uint64_t {
  kTeacherInit = 10,
  kTeacherData = 11,
  kStage1Data = 20,
  kRoundData = 30,
  kRoundEval = 31,
  kNaiveData = 40,
  kNaiveEval = 41,
};

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t round = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(round)};
  return std::mt19937_64(seq);
}

int grid_index(double t, int steps) {
  const double scaled = t * steps;
  const double rounded = std::round(scaled);
  require(std::abs(scaled - rounded) < 1e-9, "training time is not on the N-step grid");
  return static_cast<int>(rounded);
}

/// Conditioning accepted by `model` for a batch's labels and w.
Conditioning conditioning_for(const Denoiser& model, std::span<const int> labels, std::span<const double> w) {
  Conditioning cond;
  if (model.class_count() > 0) cond.labels = labels;
  if (model.w_conditioned()) cond.w = w;
  return cond;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

template <typename T>
std::vector<T> gather(std::span<const T> v, const std::vector<std::size_t>& rows) {
  std::vector<T> out;
  if (v.empty()) return out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(v[r]);
  return out;
}

/// One evaluation followed by a row-wise DDIM step.
Matrix teacher_step(const Denoiser& teacher, const Matrix& z, std::span<const double> t,
                    std::span<const double> s, const Conditioning& cond) {
  const DenoiserOutput out = teacher.eval(z, t, cond);
  return ddim_step(z, t, s, out.x_hat, teacher.schedule());
}

MlpDenoiser::TrainingBatch student_batch(const MlpDenoiser& student, const DrawnBatch& drawn, Matrix target,
                                         LossWeightKind loss, const NoiseSchedule& schedule) {
  MlpDenoiser::TrainingBatch batch;
  batch.z = drawn.z;
  batch.t = drawn.t_eval;
  if (student.class_count() > 0) batch.labels = drawn.labels;
  if (student.w_conditioned()) batch.w = drawn.w;
  batch.target = std::move(target);
  const double norm = 1.0 / static_cast<double>(drawn.z.rows());
  batch.weight.resize(drawn.t_eval.size());
  for (std::size_t i = 0; i < drawn.t_eval.size(); ++i) {
    batch.weight[i] = loss_weight_at(loss, schedule, drawn.t_eval[i]) * norm;
  }
  return batch;
}

/// Adam loop state shared by every stage.
class Trainer {
 public:
  Trainer(MlpDenoiser& model, const DistillJob& job, std::string stage, int round, int steps)
      : model_(model), job_(job), stage_(std::move(stage)), round_(round), steps_(steps) {
    if (job_.ema_decay > 0.0) ema_ = model_.params();
    last_good_ = model_.clone();
  }

  double step(const MlpDenoiser::TrainingBatch& batch, long iteration, long total) {
    double loss = 0.0;
    try {
      loss = model_.loss_and_gradient(batch);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Numeric) throw;
      diverge(iteration, e.what());
    }
    if (!std::isfinite(loss)) diverge(iteration, "non-finite loss");
    const double lr = job_.lr.at(iteration, total);
    if (!adam_.step(model_.params(), lr)) diverge(iteration, "non-finite gradient");
    if (ema_) update_ema();

    const bool last = iteration + 1 == total;
    if (job_.log_every > 0 && (iteration % job_.log_every == 0 || last)) {
      if (job_.progress) job_.progress({stage_, round_, steps_, iteration, loss, lr});
      last_good_ = model_.clone();
    }
    return loss;
  }

  /// The trained weights, EMA-averaged when enabled.
  std::unique_ptr<MlpDenoiser> finish() {
    if (!ema_) return model_.clone();
    return std::make_unique<MlpDenoiser>(model_.spec(), model_.schedule(), std::move(*ema_));
  }

 private:
  [[noreturn]] void diverge(long iteration, const std::string& why) {
    std::ostringstream msg;
    msg << stage_ << " diverged at iteration " << iteration << ": " << why;
    throw TrainingDiverged(msg.str(), iteration, std::shared_ptr<const MlpDenoiser>(std::move(last_good_)));
  }

  void update_ema() {
    const double d = job_.ema_decay;
    for (auto& [name, slot] : ema_->mutable_slots()) {
      const auto& live = model_.params().value(name).data();
      auto avg = slot.value.data();
      for (std::size_t i = 0; i < avg.size(); ++i) avg[i] = d * avg[i] + (1.0 - d) * live[i];
    }
  }

  MlpDenoiser& model_;
  const DistillJob& job_;
  std::string stage_;
  int round_;
  int steps_;
  ad::Adam adam_;
  std::optional<ad::ParamStore> ema_;
  std::unique_ptr<MlpDenoiser> last_good_;
};

void check_progressive_steps(int start_steps, int final_steps) {
  require(start_steps >= 2 && final_steps >= 1, "progressive distillation needs start N >= 2 and final N >= 1");
  require((start_steps & (start_steps - 1)) == 0 && (final_steps & (final_steps - 1)) == 0,
          "step counts must be powers of two");
  require(final_steps < start_steps, "final N must be below start N");
}

StepTarget variant_target(Stage2Variant variant, const Denoiser& teacher, const DrawnBatch& drawn, int steps) {
  const Conditioning cond = conditioning_for(teacher, drawn.labels, drawn.w);
  switch (variant) {
    case Stage2Variant::Deterministic:
      return deterministic_target(teacher, drawn.z, drawn.t, steps, cond);
    case Stage2Variant::Stochastic:
      return stochastic_target(teacher, drawn.z, drawn.t, steps, cond);
    case Stage2Variant::Encoder:
      return encoder_target(teacher, drawn.z, drawn.t, steps, cond);
  }
  fail(ErrorCode::Internal, "unknown distillation variant");
}

const char* variant_stage(Stage2Variant variant) {
  switch (variant) {
    case Stage2Variant::Deterministic: return "stage2-det";
    case Stage2Variant::Stochastic: return "stage2-stoch";
    case Stage2Variant::Encoder: return "encoder";
  }
  return "stage2";
}

}  // namespace

double LearningRate::at(long iteration, long total) const {
  if (total <= 0) return start;
  return start + (end - start) * static_cast<double>(iteration) / static_cast<double>(total);
}

void DistillJob::validate() const {
  require(std::isfinite(w_min) && std::isfinite(w_max) && w_min <= w_max, "w interval must satisfy w_min <= w_max");
  require(iterations > 0 && iterations_small > 0, "iteration budgets must be positive");
  require(batch > 0, "batch size must be positive");
  require(p_uncond >= 0.0 && p_uncond <= 1.0, "p_uncond must lie in [0, 1]");
  require(ema_decay >= 0.0 && ema_decay < 1.0, "ema decay must lie in [0, 1)");
  require(std::isfinite(lr.start) && std::isfinite(lr.end) && lr.start >= 0.0 && lr.end >= 0.0,
          "learning rates must be finite and non-negative");
}

long DistillJob::iterations_for(int round, int student_steps) const {
  if (round == 1 && first_round_iterations > 0) return first_round_iterations;
  return student_steps <= small_steps ? iterations_small : iterations;
}

DrawnBatch draw_batch(const GmmSpec& data, std::size_t n, const TimeGrid& grid, double w_min, double w_max,
                      std::mt19937_64& rng, const NoiseSchedule& schedule) {
  require(n > 0, "batch must be non-empty");
  require(w_min <= w_max, "w interval must satisfy w_min <= w_max");
  require(grid.kind == TimeGrid::Kind::Continuous || grid.steps >= 1, "time grid needs N >= 1");

  DrawnBatch b;
  auto draw = data.sample(n, rng);
  b.x = std::move(draw.x);
  b.labels = std::move(draw.labels);
  b.t.resize(n);
  b.t_eval.resize(n);
  b.w.resize(n);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int lo = grid.kind == TimeGrid::Kind::Reverse ? 1 : 0;
  const int hi = grid.kind == TimeGrid::Kind::Reverse ? grid.steps : grid.steps - 1;
  std::uniform_int_distribution<int> pick(lo, std::max(lo, hi));
  for (std::size_t i = 0; i < n; ++i) {
    if (grid.kind == TimeGrid::Kind::Continuous) {
      b.t[i] = std::clamp(unit(rng), kOracleTimeMin, kOracleTimeMax);
    } else {
      b.t[i] = static_cast<double>(pick(rng)) / grid.steps;
    }
    b.t_eval[i] = std::max(b.t[i], kOracleTimeMin);
    b.w[i] = w_min + (w_max - w_min) * unit(rng);
  }

  b.eps = standard_normal(n, data.dim(), rng);
  b.z.resize(b.x.rows(), b.x.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto [a, s] = schedule.alpha_sigma(b.t_eval[i]);
    const auto r = static_cast<Eigen::Index>(i);
    b.z.row(r) = a * b.x.row(r) + s * b.eps.row(r);
  }
  return b;
}

StepTarget deterministic_target(const Denoiser& teacher, const Matrix& z, std::span<const double> t, int steps,
                                const Conditioning& cond) {
  require(steps >= 1, "N must be >= 1");
  const std::size_t n = t.size();
  std::vector<double> mid(n), end(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = grid_index(t[i], steps);
    require(k >= 1, "deterministic target needs t >= 1/N");
    mid[i] = (2.0 * k - 1.0) / (2.0 * steps);
    end[i] = static_cast<double>(k - 1) / steps;
  }
  const Matrix z_mid = teacher_step(teacher, z, t, mid, cond);
  Matrix z_end = teacher_step(teacher, z_mid, mid, end, cond);
  Matrix x = ddim_x_target(z, t, z_end, end, teacher.schedule());
  return {std::move(z_end), std::move(end), std::move(x)};
}

StepTarget stochastic_target(const Denoiser& teacher, const Matrix& z, std::span<const double> t, int steps,
                             const Conditioning& cond) {
  require(steps >= 1, "N must be >= 1");
  const std::size_t n = t.size();
  std::vector<double> mid(n), end(n);
  std::vector<std::size_t> inner;
  for (std::size_t i = 0; i < n; ++i) {
    const int k = grid_index(t[i], steps);
    require(k >= 1, "stochastic target needs t >= 1/N");
    mid[i] = static_cast<double>(k - 1) / steps;
    end[i] = k == 1 ? 0.0 : static_cast<double>(k - 2) / steps;
    if (k >= 2) inner.push_back(i);
  }
  const Matrix z_mid = teacher_step(teacher, z, t, mid, cond);
  Matrix z_end = z_mid;
  if (!inner.empty()) {
    const auto labels = gather(cond.labels, inner);
    const auto w = gather(cond.w, inner);
    const auto sub_mid = gather<double>(mid, inner);
    const auto sub_end = gather<double>(end, inner);
    const Matrix stepped =
        teacher_step(teacher, gather_rows(z_mid, inner), sub_mid, sub_end, Conditioning{labels, w});
    for (std::size_t j = 0; j < inner.size(); ++j) {
      z_end.row(static_cast<Eigen::Index>(inner[j])) = stepped.row(static_cast<Eigen::Index>(j));
    }
  }
  Matrix x = ddim_x_target(z, t, z_end, end, teacher.schedule());
  return {std::move(z_end), std::move(end), std::move(x)};
}

StepTarget encoder_target(const Denoiser& teacher, const Matrix& z, std::span<const double> t, int steps,
                          const Conditioning& cond) {
  require(steps >= 1, "N must be >= 1");
  const std::size_t n = t.size();
  std::vector<double> start(n), mid(n), end(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = grid_index(t[i], steps);
    require(k >= 0 && k < steps, "encoder target needs t in [0, (N-1)/N]");
    start[i] = std::max(t[i], kOracleTimeMin);
    mid[i] = (2.0 * k + 1.0) / (2.0 * steps);
    end[i] = static_cast<double>(k + 1) / steps;
  }
  const Matrix z_mid = teacher_step(teacher, z, start, mid, cond);
  Matrix z_end = teacher_step(teacher, z_mid, mid, end, cond);
  Matrix x = ddim_x_target(z, start, z_end, end, teacher.schedule());
  return {std::move(z_end), std::move(end), std::move(x)};
}

PairTarget two_student_target(const GuidedTeacher& teacher, const Matrix& z, std::span<const double> t, int steps,
                              std::span<const int> labels, std::span<const double> w) {
  require(steps >= 1, "N must be >= 1");
  const std::size_t n = t.size();
  std::vector<double> mid(n), end(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = grid_index(t[i], steps);
    require(k >= 1, "two-student target needs t >= 1/N");
    mid[i] = (2.0 * k - 1.0) / (2.0 * steps);
    end[i] = static_cast<double>(k - 1) / steps;
  }
  const NoiseSchedule& schedule = teacher.schedule();
  const Conditioning cond{labels, w};
  const Matrix z_mid = teacher_step(teacher, z, t, mid, cond);
  auto [c, u] = teacher.heads(z_mid, mid, cond);

  PairTarget out;
  out.conditional.endpoint = ddim_step(z_mid, mid, end, c.x_hat, schedule);
  out.conditional.t_end = end;
  out.conditional.x_target = ddim_x_target(z, t, out.conditional.endpoint, end, schedule);
  out.unconditional.endpoint = ddim_step(z_mid, mid, end, u.x_hat, schedule);
  out.unconditional.t_end = end;
  out.unconditional.x_target = ddim_x_target(z, t, out.unconditional.endpoint, end, schedule);
  return out;
}

std::unique_ptr<MlpDenoiser> train_teacher(const GmmSpec& data, MlpSpec spec, const DistillJob& job,
                                           const NoiseSchedule& schedule) {
  job.validate();
  require(data.size() > 0, "teacher training needs a dataset");
  require(spec.dim == data.dim(), "model and dataset dimensions differ");
  spec.class_count = data.class_count();
  spec.null_class = true;
  spec.w_conditioned = false;

  auto init_rng = make_stream(job.seed, kTeacherInit);
  auto model = std::make_unique<MlpDenoiser>(spec, schedule, init_rng());
  auto rng = make_stream(job.seed, kTeacherData);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int null_label = static_cast<int>(spec.class_count);

  Trainer trainer(*model, job, "teacher", 0, 0);
  for (long it = 0; it < job.iterations; ++it) {
    DrawnBatch drawn = draw_batch(data, job.batch, TimeGrid::continuous(), 0.0, 0.0, rng, schedule);
    for (int& label : drawn.labels) {
      if (unit(rng) < job.p_uncond) label = null_label;
    }
    auto batch = student_batch(*model, drawn, drawn.x, job.loss, schedule);
    trainer.step(batch, it, job.iterations);
  }
  return trainer.finish();
}

std::unique_ptr<MlpDenoiser> distill_stage1(const Denoiser& teacher, std::unique_ptr<MlpDenoiser> student,
                                            const GmmSpec& data, const DistillJob& job) {
  job.validate();
  require(student != nullptr, "stage one needs an initialised student");
  require(student->w_conditioned(), "stage-one student must be w-conditioned");
  require(teacher.dim() == student->dim() && data.dim() == student->dim(), "stage-one dimensions differ");
  require(student->class_count() == teacher.class_count(), "student and teacher class counts differ");

  const NoiseSchedule& schedule = student->schedule();
  auto rng = make_stream(job.seed, kStage1Data);
  Trainer trainer(*student, job, "stage1", 0, 0);
  for (long it = 0; it < job.iterations; ++it) {
    DrawnBatch drawn = draw_batch(data, job.batch, TimeGrid::continuous(), job.w_min, job.w_max, rng, schedule);
    const Conditioning cond = conditioning_for(teacher, drawn.labels, drawn.w);
    Matrix target = teacher.eval(drawn.z, drawn.t_eval, cond).x_hat;
    auto batch = student_batch(*student, drawn, std::move(target), job.loss, schedule);
    trainer.step(batch, it, job.iterations);
  }
  return trainer.finish();
}

ProgressiveState distill_progressive(std::shared_ptr<const MlpDenoiser> start, const GmmSpec& data,
                                     const DistillJob& job, int start_steps, int final_steps,
                                     Stage2Variant variant, const RoundSink& on_round) {
  job.validate();
  check_progressive_steps(start_steps, final_steps);
  require(start != nullptr, "progressive distillation needs a starting model");
  require(data.dim() == start->dim(), "model and dataset dimensions differ");

  ProgressiveState state{std::move(start), start_steps, 0, {}};
  const NoiseSchedule& schedule = state.teacher->schedule();
  const TimeGrid::Kind grid_kind =
      variant == Stage2Variant::Encoder ? TimeGrid::Kind::Forward : TimeGrid::Kind::Reverse;

  while (state.steps > final_steps) {
    const int round = state.round + 1;
    const int steps = state.steps / 2;
    const TimeGrid grid{grid_kind, steps};
    const long total = job.iterations_for(round, steps);
    const MlpDenoiser& teacher = *state.teacher;

    auto eval_rng = make_stream(job.seed, kRoundEval, static_cast<std::uint64_t>(round));
    const DrawnBatch held = draw_batch(data, job.batch, grid, job.w_min, job.w_max, eval_rng, schedule);
    auto student = teacher.clone();
    auto held_batch =
        student_batch(*student, held, variant_target(variant, teacher, held, steps).x_target, job.loss, schedule);

    RoundResult result;
    result.round = round;
    result.steps = steps;
    result.iterations = total;
    result.initial_loss = student->loss_and_gradient(held_batch);

    auto rng = make_stream(job.seed, kRoundData, static_cast<std::uint64_t>(round));
    Trainer trainer(*student, job, variant_stage(variant), round, steps);
    for (long it = 0; it < total; ++it) {
      const DrawnBatch drawn = draw_batch(data, job.batch, grid, job.w_min, job.w_max, rng, schedule);
      auto batch =
          student_batch(*student, drawn, variant_target(variant, teacher, drawn, steps).x_target, job.loss, schedule);
      trainer.step(batch, it, total);
    }
    std::shared_ptr<const MlpDenoiser> trained = trainer.finish();
    result.final_loss = std::const_pointer_cast<MlpDenoiser>(trained)->loss_and_gradient(held_batch);
    result.student = trained;

    state.teacher = trained;
    state.steps = steps;
    state.round = round;
    state.rounds.push_back(result);
    if (on_round) on_round(result);
  }
  return state;
}

TwoStudentState naive_two_student(std::shared_ptr<const GuidedTeacher> teacher,
                                  std::unique_ptr<MlpDenoiser> initial_student, const GmmSpec& data,
                                  const DistillJob& job, int start_steps, int final_steps,
                                  const RoundSink& on_round) {
  job.validate();
  check_progressive_steps(start_steps, final_steps);
  require(teacher != nullptr && initial_student != nullptr, "two-student distillation needs a teacher and a student");
  require(initial_student->w_conditioned() && initial_student->has_null_class(),
          "two-student baseline needs a w-conditioned student with a null class");
  require(initial_student->class_count() == teacher->class_count(), "student and teacher class counts differ");

  const NoiseSchedule& schedule = initial_student->schedule();
  const int null_label = static_cast<int>(initial_student->class_count());
  TwoStudentState state{std::move(teacher), start_steps, {}};
  std::unique_ptr<MlpDenoiser> next = std::move(initial_student);

  // The stacked batch holds conditional rows then unconditional rows.
  auto stacked = [&](const DrawnBatch& drawn, int steps) {
    const PairTarget target = two_student_target(*state.teacher, drawn.z, drawn.t, steps, drawn.labels, drawn.w);
    const auto n = drawn.z.rows();
    MlpDenoiser::TrainingBatch batch;
    batch.z.resize(2 * n, drawn.z.cols());
    batch.z << drawn.z, drawn.z;
    batch.target.resize(2 * n, drawn.z.cols());
    batch.target << target.conditional.x_target, target.unconditional.x_target;
    batch.t = drawn.t_eval;
    batch.t.insert(batch.t.end(), drawn.t_eval.begin(), drawn.t_eval.end());
    batch.w = drawn.w;
    batch.w.insert(batch.w.end(), drawn.w.begin(), drawn.w.end());
    batch.labels = drawn.labels;
    batch.labels.insert(batch.labels.end(), drawn.labels.size(), null_label);
    const double norm = 1.0 / static_cast<double>(n);
    for (double t : batch.t) batch.weight.push_back(loss_weight_at(job.loss, schedule, t) * norm);
    return batch;
  };

  int round = 0;
  while (state.steps > final_steps) {
    ++round;
    const int steps = state.steps / 2;
    const TimeGrid grid = TimeGrid::reverse(steps);
    const long total = job.iterations_for(round, steps);

    auto eval_rng = make_stream(job.seed, kNaiveEval, static_cast<std::uint64_t>(round));
    const DrawnBatch held = draw_batch(data, job.batch, grid, job.w_min, job.w_max, eval_rng, schedule);
    auto held_batch = stacked(held, steps);

    RoundResult result;
    result.round = round;
    result.steps = steps;
    result.iterations = total;
    result.initial_loss = next->loss_and_gradient(held_batch);

    auto rng = make_stream(job.seed, kNaiveData, static_cast<std::uint64_t>(round));
    Trainer trainer(*next, job, "naive", round, steps);
    for (long it = 0; it < total; ++it) {
      const DrawnBatch drawn = draw_batch(data, job.batch, grid, job.w_min, job.w_max, rng, schedule);
      auto batch = stacked(drawn, steps);
      trainer.step(batch, it, total);
    }
    auto trained = trainer.finish();
    result.final_loss = trained->loss_and_gradient(held_batch);
    std::shared_ptr<const MlpDenoiser> frozen = trained->clone();
    result.student = frozen;

    state.teacher = std::make_shared<GuidedTeacher>(frozen);
    state.steps = steps;
    state.rounds.push_back(result);
    if (on_round) on_round(result);
    next = std::move(trained);
  }
  return state;
}

}  // namespace gdistill
