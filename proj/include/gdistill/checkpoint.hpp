// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "gdistill/denoiser.hpp"

namespace gdistill {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Training provenance stored with the weights.
struct CheckpointMeta {
  std::string role;  // teacher, stage1, stage2-det, stage2-stoch, encoder, naive
  int round = 0;
  int steps = 0;  // sampling steps the weights were trained for; 0 if continuous
  long iteration = 0;
  double w_min = 0.0;
  double w_max = 0.0;
  std::string config_fingerprint;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct LoadedCheckpoint {
  std::unique_ptr<MlpDenoiser> model;
  CheckpointMeta meta;
};

/// Container layout: 8-byte magic "GDSTLCK1", u32 format version, u32 header
/// length, UTF-8 JSON header, then every parameter as little-endian IEEE-754
/// doubles in the order of the header's tensor table.
std::string serialize_checkpoint(const MlpDenoiser& model, const CheckpointMeta& meta);
LoadedCheckpoint deserialize_checkpoint(std::string_view bytes,
                                        const std::optional<MlpSpec>& expected = std::nullopt);

/// Writes atomically through a temporary sibling file.
void save_checkpoint(const std::filesystem::path& path, const MlpDenoiser& model, const CheckpointMeta& meta);
/// Fails with ErrorCode::Fingerprint when the stored fingerprint disagrees
/// with the stored spec, or with `expected` when given.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<MlpSpec>& expected = std::nullopt);

}  // namespace gdistill
