// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gdistill/denoiser.hpp"
#include "gdistill/error.hpp"
#include "gdistill/schedule.hpp"

namespace gdistill {

/// Learning rate linearly interpolated from `start` to `end` over a round.
struct LearningRate {
  double start = 1e-4;
  double end = 0.0;

  static LearningRate constant(double lr) { return {lr, lr}; }
  double at(long iteration, long total) const;
};

/// One line of the JSON-lines training log.
struct TrainingRecord {
  std::string stage;
  int round = 0;
  int steps = 0;  // student sampling steps; 0 for continuous-time stages
  long iteration = 0;
  double loss = 0.0;
  double lr = 0.0;
};

using ProgressSink = std::function<void(const TrainingRecord&)>;

struct DistillJob {
  LossWeightKind loss = LossWeightKind::TruncatedSnr;
  double w_min = 0.0;
  double w_max = 4.0;
  long iterations = 2000;
  /// Budget for rounds whose student has at most `small_steps` steps.
  long iterations_small = 10000;
  int small_steps = 2;
  /// Overrides the first round's budget when positive.
  long first_round_iterations = 0;
  LearningRate lr{1e-4, 0.0};
  std::uint64_t seed = 0;
  std::size_t batch = 256;
  /// Label dropout probability (teacher training only).
  double p_uncond = 0.1;
  /// EMA decay of the returned weights; 0 disables.
  double ema_decay = 0.0;
  long log_every = 100;
  ProgressSink progress;

  void validate() const;
  long iterations_for(int round, int student_steps) const;
};

/// Thrown when a loss or gradient turns non-finite. Carries the weights from
/// the most recent finite iteration.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, long iteration, std::shared_ptr<const MlpDenoiser> last_good)
      : Error(ErrorCode::Numeric, what), iteration_(iteration), last_good_(std::move(last_good)) {}
  long iteration() const { return iteration_; }
  const std::shared_ptr<const MlpDenoiser>& last_good() const { return last_good_; }

 private:
  long iteration_;
  std::shared_ptr<const MlpDenoiser> last_good_;
};

// ------------------------------------------------------------- batch draws

/// How training times are drawn.
struct TimeGrid {
  enum class Kind { Continuous, Reverse, Forward } kind = Kind::Continuous;
  int steps = 0;

  static TimeGrid continuous() { return {}; }
  /// t = i / N with i ~ Cat[1..N].
  static TimeGrid reverse(int n) { return {Kind::Reverse, n}; }
  /// t = i / N with i ~ Cat[0..N-1].
  static TimeGrid forward(int n) { return {Kind::Forward, n}; }
};

/// A batch of (x, label, t, w, eps) and the resulting z_t. Times on the grid
/// are exact; `t_eval` is `t` with the evaluation clamp applied.
struct DrawnBatch {
  Matrix x;
  std::vector<int> labels;
  std::vector<double> t;
  std::vector<double> t_eval;
  std::vector<double> w;
  Matrix eps;
  Matrix z;
};

/// Every field consumes the generator in the same order regardless of the
/// w interval, so a collapsed interval only changes the w column.
DrawnBatch draw_batch(const GmmSpec& data, std::size_t n, const TimeGrid& grid, double w_min, double w_max,
                      std::mt19937_64& rng, const NoiseSchedule& schedule);

// ----------------------------------------------------------------- targets

/// Two-step teacher endpoint and the single-step target that reproduces it.
struct StepTarget {
  Matrix endpoint;     // teacher state at the far time
  std::vector<double> t_end;
  Matrix x_target;
};

/// Deterministic variant: half-steps t -> t - 0.5/N -> t - 1/N.
StepTarget deterministic_target(const Denoiser& teacher, const Matrix& z, std::span<const double> t, int steps,
                                const Conditioning& cond);

/// Stochastic variant: full steps t -> t - 1/N -> t - 2/N; rows at t = 1/N
/// take one step to 0.
StepTarget stochastic_target(const Denoiser& teacher, const Matrix& z, std::span<const double> t, int steps,
                             const Conditioning& cond);

/// Encoder variant: reversed half-steps t -> t + 0.5/N -> t + 1/N. Rows at
/// t = 0 are evaluated at kOracleTimeMin.
StepTarget encoder_target(const Denoiser& teacher, const Matrix& z, std::span<const double> t, int steps,
                          const Conditioning& cond);

/// Two-student variant: the trajectory advances with the guided prediction
/// and each head contributes a target from its own second half-step.
struct PairTarget {
  StepTarget conditional;
  StepTarget unconditional;
};
PairTarget two_student_target(const GuidedTeacher& teacher, const Matrix& z, std::span<const double> t, int steps,
                              std::span<const int> labels, std::span<const double> w);

// ---------------------------------------------------------------- training

/// Joint conditional/unconditional teacher with a null-class token.
/// `spec.class_count` and `spec.null_class` are taken from the data.
std::unique_ptr<MlpDenoiser> train_teacher(const GmmSpec& data, MlpSpec spec, const DistillJob& job,
                                           const NoiseSchedule& schedule = {});

/// Continuous-time regression of a w-conditioned student onto the guided
/// teacher prediction.
std::unique_ptr<MlpDenoiser> distill_stage1(const Denoiser& teacher, std::unique_ptr<MlpDenoiser> student,
                                            const GmmSpec& data, const DistillJob& job);

enum class Stage2Variant { Deterministic, Stochastic, Encoder };

struct RoundResult {
  int round = 0;
  int steps = 0;  // student steps
  long iterations = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::shared_ptr<const MlpDenoiser> student;
};

struct ProgressiveState {
  std::shared_ptr<const MlpDenoiser> teacher;
  int steps = 0;  // sampling steps of `teacher`
  int round = 0;
  std::vector<RoundResult> rounds;
};

using RoundSink = std::function<void(const RoundResult&)>;

/// Halves the step count each round from `start_steps` down to
/// `final_steps`. The first student uses start_steps / 2.
ProgressiveState distill_progressive(std::shared_ptr<const MlpDenoiser> start, const GmmSpec& data,
                                     const DistillJob& job, int start_steps, int final_steps,
                                     Stage2Variant variant, const RoundSink& on_round = {});

struct TwoStudentState {
  std::shared_ptr<const GuidedTeacher> teacher;
  int steps = 0;
  std::vector<RoundResult> rounds;
};

/// Progressive distillation of a guided pair into a joint null-token student
/// that keeps both heads. `initial_student` must be w-conditioned and carry a
/// null class.
TwoStudentState naive_two_student(std::shared_ptr<const GuidedTeacher> teacher,
                                  std::unique_ptr<MlpDenoiser> initial_student, const GmmSpec& data,
                                  const DistillJob& job, int start_steps, int final_steps,
                                  const RoundSink& on_round = {});

}  // namespace gdistill
