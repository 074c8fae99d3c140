// SPDX-License-Identifier: Apache-2.0
#include "gdistill/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gdistill/error.hpp"

namespace gdistill {
namespace {

constexpr char kMagic[8] = {'G', 'D', 'S', 'T', 'L', 'C', 'K', '1'};

using Json = nlohmann::ordered_json;

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return out;
  }
  return v;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

Json spec_to_json(const MlpSpec& s) {
  return Json{{"dim", s.dim},
              {"hidden", s.hidden},
              {"layers", s.layers},
              {"time_embed_dim", s.time_embed_dim},
              {"time_max_freq", s.time_max_freq},
              {"class_count", s.class_count},
              {"null_class", s.null_class},
              {"class_embed_dim", s.class_embed_dim},
              {"w_conditioned", s.w_conditioned},
              {"w_embed_dim", s.w_embed_dim},
              {"w_min", s.w_min},
              {"w_max", s.w_max}};
}

MlpSpec spec_from_json(const Json& j) {
  MlpSpec s;
  s.dim = j.at("dim").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::size_t>();
  s.layers = j.at("layers").get<std::size_t>();
  s.time_embed_dim = j.at("time_embed_dim").get<std::size_t>();
  s.time_max_freq = j.at("time_max_freq").get<double>();
  s.class_count = j.at("class_count").get<std::size_t>();
  s.null_class = j.at("null_class").get<bool>();
  s.class_embed_dim = j.at("class_embed_dim").get<std::size_t>();
  s.w_conditioned = j.at("w_conditioned").get<bool>();
  s.w_embed_dim = j.at("w_embed_dim").get<std::size_t>();
  s.w_min = j.at("w_min").get<double>();
  s.w_max = j.at("w_max").get<double>();
  return s;
}

[[noreturn]] void corrupt(const std::string& why) { fail(ErrorCode::Io, "corrupt checkpoint: " + why); }

}  // namespace

std::string serialize_checkpoint(const MlpDenoiser& model, const CheckpointMeta& meta) {
  const ad::ParamStore& params = model.params();
  Json tensors = Json::array();
  std::size_t offset = 0;
  for (const auto& [name, slot] : params.slots()) {
    tensors.push_back(Json{{"name", name}, {"shape", slot.value.shape()}, {"offset", offset}});
    offset += slot.value.size();
  }
  Json header{{"format", "gdistill-checkpoint"},
              {"schedule", std::string(model.schedule().name())},
              {"model", spec_to_json(model.spec())},
              {"fingerprint", model.spec().fingerprint()},
              {"meta",
               Json{{"role", meta.role},
                    {"round", meta.round},
                    {"steps", meta.steps},
                    {"iteration", meta.iteration},
                    {"w_min", meta.w_min},
                    {"w_max", meta.w_max},
                    {"config_fingerprint", meta.config_fingerprint}}},
              {"values", offset},
              {"tensors", std::move(tensors)}};
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + 8 * offset);
  for (const auto& [name, slot] : params.slots()) {
    for (double v : slot.value.data()) {
      const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
      char buf[8];
      std::memcpy(buf, &bits, 8);
      out.append(buf, 8);
    }
  }
  return out;
}

LoadedCheckpoint deserialize_checkpoint(std::string_view bytes, const std::optional<MlpSpec>& expected) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) corrupt("bad magic");
  const std::uint32_t version = get_u32(bytes, 8);
  if (version != kCheckpointVersion) {
    fail(ErrorCode::Io, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t header_len = get_u32(bytes, 12);
  if (bytes.size() < 16 + static_cast<std::size_t>(header_len)) corrupt("truncated header");

  Json header;
  try {
    header = Json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("header is not JSON: ") + e.what());
  }

  try {
    const MlpSpec spec = spec_from_json(header.at("model"));
    const std::string stored = header.at("fingerprint").get<std::string>();
    if (stored != spec.fingerprint()) {
      fail(ErrorCode::Fingerprint, "checkpoint fingerprint " + stored + " does not match its model spec " +
                                       spec.fingerprint());
    }
    if (expected && !(*expected == spec)) {
      fail(ErrorCode::Fingerprint, "checkpoint fingerprint " + stored + " differs from the configured model " +
                                       expected->fingerprint());
    }
    const NoiseSchedule schedule = NoiseSchedule::parse(header.at("schedule").get<std::string>());

    const std::size_t values = header.at("values").get<std::size_t>();
    const std::size_t payload = 16 + static_cast<std::size_t>(header_len);
    if (bytes.size() != payload + 8 * values) corrupt("payload size does not match the tensor table");

    ad::ParamStore params;
    for (const auto& t : header.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      const std::size_t offset = t.at("offset").get<std::size_t>();
      ad::Tensor value(shape);
      if (offset + value.size() > values) corrupt("tensor extends past the payload");
      auto data = value.data();
      for (std::size_t i = 0; i < data.size(); ++i) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, bytes.data() + payload + 8 * (offset + i), 8);
        data[i] = std::bit_cast<double>(to_little(bits));
      }
      params.add(t.at("name").get<std::string>(), std::move(value));
    }

    const Json& m = header.at("meta");
    CheckpointMeta meta;
    meta.role = m.at("role").get<std::string>();
    meta.round = m.at("round").get<int>();
    meta.steps = m.at("steps").get<int>();
    meta.iteration = m.at("iteration").get<long>();
    meta.w_min = m.at("w_min").get<double>();
    meta.w_max = m.at("w_max").get<double>();
    meta.config_fingerprint = m.at("config_fingerprint").get<std::string>();

    return {std::make_unique<MlpDenoiser>(spec, schedule, std::move(params)), std::move(meta)};
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("malformed header: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const MlpDenoiser& model, const CheckpointMeta& meta) {
  const std::string bytes = serialize_checkpoint(model, meta);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::optional<MlpSpec>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str(), expected);
}

}  // namespace gdistill
