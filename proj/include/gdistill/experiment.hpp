// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "gdistill/config.hpp"
#include "gdistill/denoiser.hpp"

namespace gdistill {

struct RunOptions {
  /// Receives one human-readable progress line at a time; may be empty.
  std::function<void(const std::string&)> progress;
};

struct RunSummary {
  std::string subcommand;
  std::filesystem::path out_dir;
  std::vector<std::filesystem::path> artifacts;
  /// Total network evaluations performed by sampling (0 for training).
  std::uint64_t evaluations = 0;
  std::size_t samples = 0;
};

/// Subcommand names in display order.
const std::vector<std::string>& subcommands();

/// Runs one subcommand end to end. Unknown names fail with
/// ErrorCode::UnknownCommand.
RunSummary run_subcommand(std::string_view name, const ExperimentConfig& config, const RunOptions& options = {});

/// Deterministic per-purpose seed derived from the experiment seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

/// Resolves a model reference against the output directory:
/// "oracle" / "oracle:a" / "oracle:b" build the analytic guided pair,
/// "teacher" / "stage1" / "stage2" / "stage2-stoch" / "encoder" / "naive"
/// load the standard checkpoint for `steps`, anything else is a checkpoint
/// path. Null-class checkpoints (teacher, naive) come back wrapped as a
/// guided pair.
DenoiserPtr resolve_model(const ExperimentConfig& config, std::string_view ref, int steps);

/// Path of a standard checkpoint inside the output directory.
std::filesystem::path checkpoint_path(const ExperimentConfig& config, std::string_view role, int steps = 0);

/// Per-row labels: all `label` when >= 0, otherwise drawn from the class
/// weights of `data`.
std::vector<int> draw_labels(const GmmSpec& data, std::size_t n, int label, std::uint64_t seed);

/// CSV with a `label` column followed by x0..x{d-1}.
void write_samples_csv(const std::filesystem::path& path, const Matrix& x, std::span<const int> labels);
Matrix read_samples_csv(const std::filesystem::path& path, std::vector<int>* labels = nullptr);

}  // namespace gdistill
