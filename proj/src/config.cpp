// SPDX-License-Identifier: Apache-2.0
#include "gdistill/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "gdistill/error.hpp"

namespace gdistill {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  fail(ErrorCode::Config, "key '" + std::string(key) + "': expected " + std::string(expected) + ", got '" +
                              std::string(value) + "'");
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) bad_value(key, v, "a finite number");
  return out;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view v) {
  Int out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, v, "an integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ' ';
    if constexpr (std::is_floating_point_v<T>) os << fmt(v[i]);
    else os << v[i];
  }
  return os.str();
}

template <typename T>
std::vector<T> parse_numbers(std::string_view key, std::string_view v) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) {
    if constexpr (std::is_floating_point_v<T>) out.push_back(to_double(key, item));
    else out.push_back(to_int<T>(key, item));
  }
  if (out.empty()) bad_value(key, v, "a non-empty list");
  return out;
}

std::vector<Vector> parse_means(std::string_view key, std::string_view v) {
  std::vector<Vector> out;
  std::string_view rest = v;
  while (!rest.empty()) {
    const auto cut = rest.find(';');
    const std::string item = trim(rest.substr(0, cut));
    if (!item.empty()) {
      const auto coords = parse_numbers<double>(key, item);
      out.push_back(Eigen::Map<const Vector>(coords.data(), static_cast<Eigen::Index>(coords.size())));
    }
    if (cut == std::string_view::npos) break;
    rest = rest.substr(cut + 1);
  }
  if (out.empty()) bad_value(key, v, "';'-separated mean vectors");
  return out;
}

std::string format_means(const std::vector<Vector>& means) {
  std::ostringstream os;
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (i) os << "; ";
    for (Eigen::Index k = 0; k < means[i].size(); ++k) {
      if (k) os << ' ';
      os << fmt(means[i][k]);
    }
  }
  return os.str();
}

struct Key {
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

using Registry = std::map<std::string, Key, std::less<>>;

template <typename Ref>
Key number_key(Ref ref) {
  return {[ref](ExperimentConfig& c, std::string_view k, std::string_view v) {
            auto& field = ref(c);
            using T = std::remove_reference_t<decltype(field)>;
            if constexpr (std::is_floating_point_v<T>) field = to_double(k, v);
            else field = to_int<T>(k, v);
          },
          [ref](const ExperimentConfig& c) {
            const auto& field = ref(const_cast<ExperimentConfig&>(c));
            using T = std::remove_cvref_t<decltype(field)>;
            if constexpr (std::is_floating_point_v<T>) return fmt(field);
            else return std::to_string(field);
          }};
}

template <typename Ref>
Key bool_key(Ref ref) {
  return {[ref](ExperimentConfig& c, std::string_view k, std::string_view v) { ref(c) = to_bool(k, v); },
          [ref](const ExperimentConfig& c) {
            return std::string(ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          }};
}

template <typename Ref>
Key string_key(Ref ref) {
  return {[ref](ExperimentConfig& c, std::string_view, std::string_view v) { ref(c) = std::string(v); },
          [ref](const ExperimentConfig& c) { return std::string(ref(const_cast<ExperimentConfig&>(c))); }};
}

template <typename T, typename Ref>
Key list_key(Ref ref) {
  return {[ref](ExperimentConfig& c, std::string_view k, std::string_view v) { ref(c) = parse_numbers<T>(k, v); },
          [ref](const ExperimentConfig& c) { return join(ref(const_cast<ExperimentConfig&>(c))); }};
}

template <typename Ref>
Key word_list_key(Ref ref) {
  return {[ref](ExperimentConfig& c, std::string_view k, std::string_view v) {
            auto items = split_list(v);
            if (items.empty()) bad_value(k, v, "a non-empty list");
            ref(c) = std::move(items);
          },
          [ref](const ExperimentConfig& c) { return join(ref(const_cast<ExperimentConfig&>(c))); }};
}

void add_dataset(Registry& r, const std::string& prefix, DatasetConfig& (*ds)(ExperimentConfig&)) {
  r[prefix + ".means"] = {[ds](ExperimentConfig& c, std::string_view k, std::string_view v) {
                            ds(c).means = parse_means(k, v);
                          },
                          [ds](const ExperimentConfig& c) {
                            return format_means(ds(const_cast<ExperimentConfig&>(c)).means);
                          }};
  r[prefix + ".scales"] = list_key<double>([ds](ExperimentConfig& c) -> auto& { return ds(c).scales; });
  r[prefix + ".weights"] = list_key<double>([ds](ExperimentConfig& c) -> auto& { return ds(c).weights; });
  r[prefix + ".labels"] = list_key<int>([ds](ExperimentConfig& c) -> auto& { return ds(c).labels; });
}

void add_job(Registry& r, const std::string& prefix, DistillJob& (*job)(ExperimentConfig&)) {
  r[prefix + ".iterations"] = number_key([job](ExperimentConfig& c) -> auto& { return job(c).iterations; });
  r[prefix + ".batch"] = number_key([job](ExperimentConfig& c) -> auto& { return job(c).batch; });
  r[prefix + ".lr_start"] = number_key([job](ExperimentConfig& c) -> auto& { return job(c).lr.start; });
  r[prefix + ".lr_end"] = number_key([job](ExperimentConfig& c) -> auto& { return job(c).lr.end; });
  r[prefix + ".ema"] = number_key([job](ExperimentConfig& c) -> auto& { return job(c).ema_decay; });
  r[prefix + ".log_every"] = number_key([job](ExperimentConfig& c) -> auto& { return job(c).log_every; });
  r[prefix + ".loss"] = {[job](ExperimentConfig& c, std::string_view k, std::string_view v) {
                           try {
                             job(c).loss = parse_loss_weight(v);
                           } catch (const Error&) {
                             bad_value(k, v, "snr or truncated-snr");
                           }
                         },
                         [job](const ExperimentConfig& c) {
                           return std::string(loss_weight_name(job(const_cast<ExperimentConfig&>(c)).loss));
                         }};
}

void add_stage(Registry& r, const std::string& prefix, StageConfig& (*stage)(ExperimentConfig&)) {
  r[prefix + ".start_steps"] = number_key([stage](ExperimentConfig& c) -> auto& { return stage(c).start_steps; });
  r[prefix + ".final_steps"] = number_key([stage](ExperimentConfig& c) -> auto& { return stage(c).final_steps; });
  r[prefix + ".iterations_small"] =
      number_key([stage](ExperimentConfig& c) -> auto& { return stage(c).job.iterations_small; });
  r[prefix + ".small_steps"] = number_key([stage](ExperimentConfig& c) -> auto& { return stage(c).job.small_steps; });
  r[prefix + ".first_round_iterations"] =
      number_key([stage](ExperimentConfig& c) -> auto& { return stage(c).job.first_round_iterations; });
}

const Registry& registry() {
  static const Registry r = [] {
    Registry r;
    r["seed"] = number_key([](ExperimentConfig& c) -> auto& { return c.seed; });
    r["schedule"] = {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
                       try {
                         c.schedule = NoiseSchedule::parse(v);
                       } catch (const Error&) {
                         bad_value(k, v, "a known schedule (cosine-vp)");
                       }
                     },
                     [](const ExperimentConfig& c) { return std::string(c.schedule.name()); }};
    r["out"] = {[](ExperimentConfig& c, std::string_view, std::string_view v) { c.out = std::string(v); },
                [](const ExperimentConfig& c) { return c.out.string(); }};
    r["profile"] = string_key([](ExperimentConfig& c) -> auto& { return c.profile; });

    add_dataset(r, "data", [](ExperimentConfig& c) -> DatasetConfig& { return c.data; });
    add_dataset(r, "data_b", [](ExperimentConfig& c) -> DatasetConfig& { return c.data_b; });

    r["model.hidden"] = number_key([](ExperimentConfig& c) -> auto& { return c.model.hidden; });
    r["model.layers"] = number_key([](ExperimentConfig& c) -> auto& { return c.model.layers; });
    r["model.time_embed_dim"] = number_key([](ExperimentConfig& c) -> auto& { return c.model.time_embed_dim; });
    r["model.time_max_freq"] = number_key([](ExperimentConfig& c) -> auto& { return c.model.time_max_freq; });
    r["model.class_embed_dim"] = number_key([](ExperimentConfig& c) -> auto& { return c.model.class_embed_dim; });
    r["model.w_embed_dim"] = number_key([](ExperimentConfig& c) -> auto& { return c.model.w_embed_dim; });
    r["guidance.w_min"] = number_key([](ExperimentConfig& c) -> auto& { return c.w_min; });
    r["guidance.w_max"] = number_key([](ExperimentConfig& c) -> auto& { return c.w_max; });

    add_job(r, "teacher", [](ExperimentConfig& c) -> DistillJob& { return c.teacher; });
    r["teacher.p_uncond"] = number_key([](ExperimentConfig& c) -> auto& { return c.teacher.p_uncond; });
    add_job(r, "stage1", [](ExperimentConfig& c) -> DistillJob& { return c.stage1; });
    r["stage1.teacher"] = string_key([](ExperimentConfig& c) -> auto& { return c.stage1_teacher; });
    r["naive.teacher"] = string_key([](ExperimentConfig& c) -> auto& { return c.naive_teacher; });
    r["stage2.sampler"] = {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
                             if (v == "det" || v == "ddim") c.stage2_variant = Stage2Variant::Deterministic;
                             else if (v == "stoch" || v == "stochastic") c.stage2_variant = Stage2Variant::Stochastic;
                             else bad_value(k, v, "det or stoch");
                           },
                           [](const ExperimentConfig& c) {
                             return std::string(c.stage2_variant == Stage2Variant::Stochastic ? "stoch" : "det");
                           }};
    add_job(r, "stage2", [](ExperimentConfig& c) -> DistillJob& { return c.stage2.job; });
    add_stage(r, "stage2", [](ExperimentConfig& c) -> StageConfig& { return c.stage2; });
    add_job(r, "encoder", [](ExperimentConfig& c) -> DistillJob& { return c.encoder.job; });
    add_stage(r, "encoder", [](ExperimentConfig& c) -> StageConfig& { return c.encoder; });
    add_job(r, "naive", [](ExperimentConfig& c) -> DistillJob& { return c.naive.job; });
    add_stage(r, "naive", [](ExperimentConfig& c) -> StageConfig& { return c.naive; });

    r["sample.model"] = string_key([](ExperimentConfig& c) -> auto& { return c.sample.model; });
    r["sample.steps"] = number_key([](ExperimentConfig& c) -> auto& { return c.sample.steps; });
    r["sample.mode"] = {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
                          try {
                            c.sample.mode = parse_sampler_mode(v);
                          } catch (const Error&) {
                            bad_value(k, v, "ddim, stochastic, ancestral or encode");
                          }
                        },
                        [](const ExperimentConfig& c) { return std::string(sampler_mode_name(c.sample.mode)); }};
    r["sample.w"] = number_key([](ExperimentConfig& c) -> auto& { return c.sample.w; });
    r["sample.count"] = number_key([](ExperimentConfig& c) -> auto& { return c.sample.count; });
    r["sample.label"] = number_key([](ExperimentConfig& c) -> auto& { return c.sample.label; });
    r["sample.trajectory"] = bool_key([](ExperimentConfig& c) -> auto& { return c.sample.trajectory; });

    r["transfer.encoder"] = string_key([](ExperimentConfig& c) -> auto& { return c.transfer.encoder; });
    r["transfer.decoder"] = string_key([](ExperimentConfig& c) -> auto& { return c.transfer.decoder; });
    r["transfer.encode_steps"] = number_key([](ExperimentConfig& c) -> auto& { return c.transfer.encode_steps; });
    r["transfer.decode_steps"] = number_key([](ExperimentConfig& c) -> auto& { return c.transfer.decode_steps; });
    r["transfer.w"] = number_key([](ExperimentConfig& c) -> auto& { return c.transfer.w; });
    r["transfer.count"] = number_key([](ExperimentConfig& c) -> auto& { return c.transfer.count; });

    r["eval.samples"] = string_key([](ExperimentConfig& c) -> auto& { return c.eval.samples; });
    r["eval.reference"] = number_key([](ExperimentConfig& c) -> auto& { return c.eval.reference; });

    r["sweep.steps"] = list_key<int>([](ExperimentConfig& c) -> auto& { return c.sweep.steps; });
    r["sweep.w"] = list_key<double>([](ExperimentConfig& c) -> auto& { return c.sweep.w; });
    r["sweep.samplers"] = word_list_key([](ExperimentConfig& c) -> auto& { return c.sweep.samplers; });
    r["sweep.methods"] = word_list_key([](ExperimentConfig& c) -> auto& { return c.sweep.methods; });
    r["sweep.count"] = number_key([](ExperimentConfig& c) -> auto& { return c.sweep.count; });
    r["sweep.reference"] = number_key([](ExperimentConfig& c) -> auto& { return c.sweep.reference; });
    return r;
  }();
  return r;
}

void apply_profile(ExperimentConfig& c, std::string_view profile) {
  if (profile == "desk") {
    c.profile = "desk";
    return;
  }
  if (profile != "paper-scale") bad_value("profile", profile, "desk or paper-scale");
  c.profile = "paper-scale";
  for (StageConfig* s : {&c.stage2, &c.encoder, &c.naive}) {
    s->start_steps = 1024;
    s->job.iterations = 50000;
    s->job.iterations_small = 100000;
    s->job.lr = {1e-4, 0.0};
  }
  c.stage1.lr = LearningRate::constant(1e-3);
  c.stage1.ema_decay = 0.9999;
}

void validate(const ExperimentConfig& c) {
  const GmmSpec a = c.data.build();
  const GmmSpec b = c.data_b.build();
  if (a.dim() != b.dim()) fail(ErrorCode::Config, "data and data_b differ in dimension");
  if (c.model.hidden == 0 || c.model.layers == 0) fail(ErrorCode::Config, "model.hidden and model.layers must be > 0");
  if (c.model.time_embed_dim % 2 || c.model.w_embed_dim % 2) {
    fail(ErrorCode::Config, "embedding widths must be even");
  }
  if (!(c.w_min <= c.w_max)) fail(ErrorCode::Config, "guidance.w_min must not exceed guidance.w_max");
  for (const StageConfig* s : {&c.stage2, &c.encoder, &c.naive}) {
    const auto pow2 = [](int n) { return n >= 1 && (n & (n - 1)) == 0; };
    if (!pow2(s->start_steps) || !pow2(s->final_steps) || s->final_steps >= s->start_steps) {
      fail(ErrorCode::Config, "start_steps and final_steps must be powers of two with final < start");
    }
  }
  try {
    for (const DistillJob* j : {&c.teacher, &c.stage1, &c.stage2.job, &c.encoder.job, &c.naive.job}) j->validate();
  } catch (const Error& e) {
    fail(ErrorCode::Config, e.what());
  }
  for (const std::string* t : {&c.stage1_teacher, &c.naive_teacher}) {
    if (*t != "teacher" && *t != "oracle") fail(ErrorCode::Config, "teacher source must be 'teacher' or 'oracle'");
  }
  if (c.sample.steps < 1) fail(ErrorCode::Config, "sample.steps must be >= 1");
  if (c.sample.count == 0 || c.transfer.count == 0 || c.sweep.count == 0) {
    fail(ErrorCode::Config, "sample counts must be positive");
  }
}

}  // namespace

GmmSpec DatasetConfig::build() const {
  const std::size_t k = means.size();
  if (k == 0) fail(ErrorCode::Config, "dataset needs at least one mean");
  if (scales.size() != k && scales.size() != 1) fail(ErrorCode::Config, "dataset scales must match the means");
  if (weights.size() != k && !weights.empty()) fail(ErrorCode::Config, "dataset weights must match the means");
  if (labels.size() != k && !labels.empty()) fail(ErrorCode::Config, "dataset labels must match the means");
  std::vector<GmmComponent> comps;
  for (std::size_t i = 0; i < k; ++i) {
    GmmComponent c;
    c.mean = means[i];
    c.scale = scales.size() == 1 ? scales[0] : scales[i];
    c.weight = weights.empty() ? 1.0 : weights[i];
    c.label = labels.empty() ? 0 : labels[i];
    comps.push_back(std::move(c));
  }
  try {
    return GmmSpec(std::move(comps));
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("invalid dataset: ") + e.what());
  }
}

ExperimentConfig::ExperimentConfig() {
  data.means = {Vector{{-1.0, 0.0}}, Vector{{0.3, 0.7}}, Vector{{1.0, 0.0}}, Vector{{-0.3, -0.7}}};
  data.scales = {0.15};
  data.weights = {0.3, 0.2, 0.3, 0.2};
  data.labels = {0, 0, 1, 1};
  data_b = data;
  for (auto& m : data_b.means) m += Vector{{0.0, 1.5}};

  model.hidden = 128;
  model.layers = 3;

  teacher.loss = LossWeightKind::TruncatedSnr;
  teacher.iterations = 4000;
  teacher.lr = LearningRate::constant(1e-3);
  teacher.p_uncond = 0.1;

  stage1.loss = LossWeightKind::Snr;
  stage1.iterations = 8000;
  stage1.lr = {1e-3, 0.0};

  for (StageConfig* s : {&stage2, &encoder, &naive}) {
    s->start_steps = 64;
    s->final_steps = 1;
    s->job.loss = LossWeightKind::TruncatedSnr;
    s->job.iterations = 2000;
    s->job.iterations_small = 10000;
    s->job.small_steps = 2;
    s->job.lr = {1e-3, 0.0};
  }
  encoder.final_steps = 16;
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream os;
  for (const auto& [name, key] : registry()) os << name << " = " << key.get(*this) << '\n';
  return os.str();
}

std::string ExperimentConfig::fingerprint() const { return fnv1a_hex(canonical()); }

MlpSpec ExperimentConfig::teacher_spec() const {
  MlpSpec s = model;
  const GmmSpec d = data.build();
  s.dim = d.dim();
  s.class_count = d.class_count();
  s.null_class = true;
  s.w_conditioned = false;
  s.w_min = w_min;
  s.w_max = w_max;
  return s;
}

MlpSpec ExperimentConfig::student_spec() const { return teacher_spec().with_w_conditioning(w_min, w_max); }

ExperimentConfig parse_config(std::string_view text, const ConfigOverrides& overrides) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::Config, "line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) fail(ErrorCode::Config, "line " + std::to_string(lineno) + ": empty key");
    entries.emplace_back(std::move(key), std::move(value));
  }
  entries.insert(entries.end(), overrides.begin(), overrides.end());

  ExperimentConfig config;
  std::string profile = "desk";
  for (const auto& [k, v] : entries) {
    if (k == "profile") profile = v;
  }
  apply_profile(config, profile);

  const Registry& keys = registry();
  for (const auto& [k, v] : entries) {
    if (k == "profile") continue;
    const auto it = keys.find(k);
    if (it == keys.end()) fail(ErrorCode::Config, "unknown key '" + k + "'");
    it->second.set(config, k, v);
  }
  for (DistillJob* j : {&config.teacher, &config.stage1, &config.stage2.job, &config.encoder.job,
                        &config.naive.job}) {
    j->w_min = config.w_min;
    j->w_max = config.w_max;
  }
  validate(config);
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), overrides);
}

std::filesystem::path resolve_output_dir(const std::filesystem::path& out) {
  if (out.is_absolute()) return out;
  if (const char* root = std::getenv("GDISTILL_OUT_ROOT"); root != nullptr && *root != '\0') {
    return std::filesystem::path(root) / out;
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [name, key] : registry()) out.push_back(name);
  return out;
}

}  // namespace gdistill
