// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gdistill/denoiser.hpp"
#include "gdistill/distill.hpp"
#include "gdistill/sampler.hpp"
#include "gdistill/schedule.hpp"

namespace gdistill {

/// Mixture description as written in a config file.
struct DatasetConfig {
  std::vector<Vector> means;
  std::vector<double> scales;
  std::vector<double> weights;
  std::vector<int> labels;

  GmmSpec build() const;
};

/// Progressive stage: training job plus its step range.
struct StageConfig {
  DistillJob job;
  int start_steps = 64;
  int final_steps = 1;
};

struct SampleConfig {
  std::string model = "stage2";  // checkpoint path, stage name, "oracle" or "oracle:b"
  int steps = 4;
  SamplerMode mode = SamplerMode::Ddim;
  double w = 0.0;
  std::size_t count = 1000;
  int label = -1;  // -1: labels drawn from the class weights
  bool trajectory = false;
};

struct TransferConfig {
  std::string encoder = "oracle:a";
  std::string decoder = "oracle:b";
  int encode_steps = 64;
  int decode_steps = 64;
  double w = 0.0;
  std::size_t count = 1000;
};

struct EvalConfig {
  std::string samples;  // CSV of samples to score; empty scores `sample` output
  std::size_t reference = 10000;
};

struct SweepConfig {
  std::vector<int> steps{1, 4, 8, 16};
  std::vector<double> w{0.0, 0.3, 1.0, 2.0, 4.0};
  std::vector<std::string> samplers{"ddim", "stochastic"};
  std::vector<std::string> methods{"distilled", "teacher"};
  std::size_t count = 2000;
  std::size_t reference = 2000;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  NoiseSchedule schedule;
  std::filesystem::path out = "runs/default";
  std::string profile = "desk";

  DatasetConfig data;
  DatasetConfig data_b;
  MlpSpec model;
  double w_min = 0.0;
  double w_max = 4.0;

  DistillJob teacher;
  DistillJob stage1;
  /// Guided teacher for stage one and the two-student baseline: "teacher"
  /// (the trained checkpoint) or "oracle" (the analytic mixture posterior).
  std::string stage1_teacher = "teacher";
  std::string naive_teacher = "teacher";
  StageConfig stage2;
  Stage2Variant stage2_variant = Stage2Variant::Deterministic;
  StageConfig encoder;
  StageConfig naive;

  SampleConfig sample;
  TransferConfig transfer;
  EvalConfig eval;
  SweepConfig sweep;

  ExperimentConfig();

  /// Every effective setting as sorted `key = value` lines.
  std::string canonical() const;
  std::string fingerprint() const;

  /// The teacher architecture (null-class, not w-conditioned) and the
  /// w-conditioned student architecture derived from `model`.
  MlpSpec teacher_spec() const;
  MlpSpec student_spec() const;
};

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Parses flat `key = value` text. `#` starts a comment. Lists are separated
/// by spaces or commas; vectors inside data.means are separated by `;`.
/// `profile` is applied first, then every other key in file order, then the
/// overrides.
ExperimentConfig parse_config(std::string_view text, const ConfigOverrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// Resolves an output directory against GDISTILL_OUT_ROOT when set and the
/// path is relative.
std::filesystem::path resolve_output_dir(const std::filesystem::path& out);

/// Names of every accepted key.
std::vector<std::string> config_keys();

}  // namespace gdistill
