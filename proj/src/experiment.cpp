// SPDX-License-Identifier: Apache-2.0
#include "gdistill/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "gdistill/checkpoint.hpp"
#include "gdistill/distill.hpp"
#include "gdistill/error.hpp"
#include "gdistill/eval.hpp"
#include "gdistill/sampler.hpp"
#include "gdistill/version.hpp"

namespace fs = std::filesystem;

namespace gdistill {
namespace {

using Json = nlohmann::ordered_json;

struct Context {
  const ExperimentConfig& config;
  const RunOptions& options;
  fs::path out;
  RunSummary summary;

  void note(const std::string& line) const {
    if (options.progress) options.progress(line);
  }
  fs::path artifact(const fs::path& relative) {
    const fs::path p = out / relative;
    fs::create_directories(p.parent_path());
    summary.artifacts.push_back(p);
    return p;
  }
};

/// Truncates on open, then appends one JSON object per line.
class JsonLines {
 public:
  explicit JsonLines(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) fail(ErrorCode::Io, "cannot write " + path.string());
  }
  void write(const Json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

ProgressSink training_sink(Context& ctx, JsonLines& log) {
  return [&ctx, &log](const TrainingRecord& r) {
    log.write(Json{{"stage", r.stage}, {"round", r.round}, {"N", r.steps}, {"iteration", r.iteration},
                   {"loss", r.loss}, {"lr", r.lr}});
    std::ostringstream line;
    line << r.stage << " round=" << r.round << " N=" << r.steps << " it=" << r.iteration << " loss=" << r.loss;
    ctx.note(line.str());
  };
}

DistillJob job_for(const ExperimentConfig& c, DistillJob job, std::string_view purpose, const ProgressSink& sink) {
  job.seed = derive_seed(c.seed, purpose);
  job.w_min = c.w_min;
  job.w_max = c.w_max;
  job.progress = sink;
  return job;
}

std::string stage_role(Stage2Variant v) {
  switch (v) {
    case Stage2Variant::Deterministic: return "stage2-det";
    case Stage2Variant::Stochastic: return "stage2-stoch";
    case Stage2Variant::Encoder: return "encoder";
  }
  return "stage2";
}

CheckpointMeta meta_for(const ExperimentConfig& c, std::string role, int round, int steps, long iteration) {
  CheckpointMeta m;
  m.role = std::move(role);
  m.round = round;
  m.steps = steps;
  m.iteration = iteration;
  m.w_min = c.w_min;
  m.w_max = c.w_max;
  m.config_fingerprint = c.fingerprint();
  return m;
}

void write_manifest(Context& ctx, std::string_view subcommand) {
  const ExperimentConfig& c = ctx.config;
  Json artifacts = Json::array();
  for (const auto& p : ctx.summary.artifacts) artifacts.push_back(fs::relative(p, ctx.out).generic_string());
  Json manifest{{"tool", "gdistill"},
                {"version", kVersionString},
                {"subcommand", std::string(subcommand)},
                {"seed", c.seed},
                {"profile", c.profile},
                {"config_fingerprint", c.fingerprint()},
                {"config", c.canonical()},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"compiler", __VERSION__},
                {"artifacts", std::move(artifacts)}};
  const fs::path path = ctx.out / "manifests" / (std::string(subcommand) + ".json");
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << manifest.dump(2) << '\n';
}

std::shared_ptr<const MlpDenoiser> load_role(const ExperimentConfig& c, std::string_view role, int steps,
                                             const MlpSpec& expected) {
  const fs::path path = checkpoint_path(c, role, steps);
  if (!fs::exists(path)) fail(ErrorCode::Io, "missing checkpoint " + path.string());
  return load_checkpoint(path, expected).model;
}

Matrix data_batch(const GmmSpec& data, std::size_t n, std::uint64_t seed, std::vector<int>* labels) {
  std::mt19937_64 rng(seed);
  auto draw = data.sample(n, rng);
  if (labels) *labels = std::move(draw.labels);
  return std::move(draw.x);
}

SampleBatch generate(const Denoiser& model, const SamplerPlan& plan, std::size_t count, std::span<const int> labels,
                     std::uint64_t noise_seed) {
  const Matrix z1 = initial_noise(count, model.dim(), noise_seed);
  return run_sampler(model, plan, z1, model.class_count() > 0 ? labels : std::span<const int>{});
}

// ------------------------------------------------------------- subcommands

void cmd_train_teacher(Context& ctx) {
  const auto& c = ctx.config;
  JsonLines log(ctx.artifact("logs/train-teacher.jsonl"));
  const DistillJob job = job_for(c, c.teacher, "teacher", training_sink(ctx, log));
  const auto model = train_teacher(c.data.build(), c.teacher_spec(), job, c.schedule);
  save_checkpoint(ctx.artifact(fs::relative(checkpoint_path(c, "teacher"), ctx.out)), *model,
                  meta_for(c, "teacher", 0, 0, job.iterations));
}

DenoiserPtr guided_source(const ExperimentConfig& c, const std::string& source) {
  if (source == "oracle") return make_oracle_teacher(c.data.build(), c.schedule);
  return std::make_shared<GuidedTeacher>(load_role(c, "teacher", 0, c.teacher_spec()));
}

void cmd_stage1(Context& ctx) {
  const auto& c = ctx.config;
  const GmmSpec data = c.data.build();
  JsonLines log(ctx.artifact("logs/distill-stage1.jsonl"));
  const DistillJob job = job_for(c, c.stage1, "stage1", training_sink(ctx, log));

  DenoiserPtr teacher;
  std::unique_ptr<MlpDenoiser> student;
  if (c.stage1_teacher == "oracle") {
    teacher = make_oracle_teacher(data, c.schedule);
    student = std::make_unique<MlpDenoiser>(c.student_spec(), c.schedule, derive_seed(c.seed, "stage1-init"));
  } else {
    auto trained = load_role(c, "teacher", 0, c.teacher_spec());
    student = init_student_from_teacher(*trained, c.student_spec());
    teacher = std::make_shared<GuidedTeacher>(trained);
  }
  const auto model = distill_stage1(*teacher, std::move(student), data, job);
  save_checkpoint(ctx.artifact(fs::relative(checkpoint_path(c, "stage1"), ctx.out)), *model,
                  meta_for(c, "stage1", 0, 0, job.iterations));
}

void cmd_progressive(Context& ctx, Stage2Variant variant, const StageConfig& stage, std::string_view name) {
  const auto& c = ctx.config;
  const std::string role = stage_role(variant);
  JsonLines log(ctx.artifact("logs/" + std::string(name) + ".jsonl"));
  const DistillJob job = job_for(c, stage.job, role, training_sink(ctx, log));
  auto start = load_role(c, "stage1", 0, c.student_spec());
  const auto on_round = [&](const RoundResult& r) {
    log.write(Json{{"stage", role}, {"round", r.round}, {"N", r.steps}, {"event", "round"},
                   {"initial_loss", r.initial_loss}, {"final_loss", r.final_loss}});
    save_checkpoint(ctx.artifact(fs::relative(checkpoint_path(c, role, r.steps), ctx.out)), *r.student,
                    meta_for(c, role, r.round, r.steps, r.iterations));
  };
  distill_progressive(std::move(start), c.data.build(), job, stage.start_steps, stage.final_steps, variant,
                      on_round);
}

void cmd_naive(Context& ctx) {
  const auto& c = ctx.config;
  const GmmSpec data = c.data.build();
  JsonLines log(ctx.artifact("logs/distill-naive.jsonl"));
  const DistillJob job = job_for(c, c.naive.job, "naive", training_sink(ctx, log));

  std::shared_ptr<const GuidedTeacher> teacher;
  std::unique_ptr<MlpDenoiser> student;
  if (c.naive_teacher == "oracle") {
    teacher = make_oracle_teacher(data, c.schedule);
    student = std::make_unique<MlpDenoiser>(c.student_spec(), c.schedule, derive_seed(c.seed, "naive-init"));
  } else {
    auto trained = load_role(c, "teacher", 0, c.teacher_spec());
    student = init_student_from_teacher(*trained, c.student_spec());
    teacher = std::make_shared<GuidedTeacher>(trained);
  }
  const auto on_round = [&](const RoundResult& r) {
    log.write(Json{{"stage", "naive"}, {"round", r.round}, {"N", r.steps}, {"event", "round"},
                   {"initial_loss", r.initial_loss}, {"final_loss", r.final_loss}});
    save_checkpoint(ctx.artifact(fs::relative(checkpoint_path(c, "naive", r.steps), ctx.out)), *r.student,
                    meta_for(c, "naive", r.round, r.steps, r.iterations));
  };
  naive_two_student(std::move(teacher), std::move(student), data, job, c.naive.start_steps, c.naive.final_steps,
                    on_round);
}

void cmd_sample(Context& ctx) {
  const auto& c = ctx.config;
  const auto& s = c.sample;
  require(s.mode != SamplerMode::Encode, "use the encode subcommand for encoding");
  const DenoiserPtr model = resolve_model(c, s.model, s.steps);
  const auto labels = draw_labels(c.data.build(), s.count, s.label, derive_seed(c.seed, "sample-labels"));
  SamplerPlan plan{s.steps, s.mode, s.w, derive_seed(c.seed, "sample-noise"), s.trajectory};
  const SampleBatch batch = generate(*model, plan, s.count, labels, derive_seed(c.seed, "sample-z1"));

  write_samples_csv(ctx.artifact("samples/sample.csv"), batch.samples, labels);
  if (s.trajectory) batch.trajectory.write_csv(ctx.artifact("samples/trajectory.csv"));
  JsonLines log(ctx.artifact("logs/sample.jsonl"));
  log.write(Json{{"event", "sample"},
                 {"model", s.model},
                 {"kind", model->kind()},
                 {"sampler", std::string(sampler_mode_name(s.mode))},
                 {"N", s.steps},
                 {"w", s.w},
                 {"samples", s.count},
                 {"evaluations", batch.evaluations},
                 {"evaluations_per_sample", static_cast<double>(batch.evaluations) / static_cast<double>(s.count)},
                 {"clamped_rows", batch.clamped_rows}});
  ctx.summary.evaluations = batch.evaluations;
  ctx.summary.samples = s.count;
}

void cmd_encode(Context& ctx) {
  const auto& c = ctx.config;
  const auto& s = c.sample;
  const DenoiserPtr model = resolve_model(c, s.model, s.steps);
  std::vector<int> labels;
  const Matrix x = data_batch(c.data.build(), s.count, derive_seed(c.seed, "encode-data"), &labels);
  SamplerPlan plan{s.steps, SamplerMode::Encode, s.w, 0, s.trajectory};
  const SampleBatch latents = encode(*model, plan, x, model->class_count() > 0 ? labels : std::vector<int>{});

  write_samples_csv(ctx.artifact("samples/encode-input.csv"), x, labels);
  write_samples_csv(ctx.artifact("samples/latents.csv"), latents.samples, labels);
  if (s.trajectory) latents.trajectory.write_csv(ctx.artifact("samples/encode-trajectory.csv"));

  SamplerPlan back{s.steps, SamplerMode::Ddim, s.w, 0, false};
  const SampleBatch decoded = ddim_sample(*model, back, latents.samples,
                                          model->class_count() > 0 ? labels : std::vector<int>{});
  const MetricReport rms = reconstruction_error(x, decoded.samples);
  JsonLines log(ctx.artifact("logs/encode.jsonl"));
  log.write(Json{{"event", "encode"},
                 {"model", s.model},
                 {"N", s.steps},
                 {"samples", s.count},
                 {"evaluations", latents.evaluations + decoded.evaluations},
                 {"roundtrip_rms", rms.value},
                 {"roundtrip_rms_se", rms.std_error}});
  ctx.summary.evaluations = latents.evaluations + decoded.evaluations;
  ctx.summary.samples = s.count;
}

void cmd_style_transfer(Context& ctx) {
  const auto& c = ctx.config;
  const auto& t = c.transfer;
  const DenoiserPtr enc = resolve_model(c, t.encoder, t.encode_steps);
  const DenoiserPtr dec = resolve_model(c, t.decoder, t.decode_steps);
  std::vector<int> labels;
  const GmmSpec a = c.data.build();
  const GmmSpec b = c.data_b.build();
  const Matrix x = data_batch(a, t.count, derive_seed(c.seed, "transfer-data"), &labels);
  const SamplerPlan enc_plan{t.encode_steps, SamplerMode::Encode, t.w, 0, false};
  const SamplerPlan dec_plan{t.decode_steps, SamplerMode::Ddim, t.w, 0, false};
  const std::vector<int> none;
  const SampleBatch out = style_transfer(*enc, enc_plan, *dec, dec_plan, x, enc->class_count() > 0 ? labels : none,
                                         dec->class_count() > 0 ? labels : none);

  write_samples_csv(ctx.artifact("samples/transfer-input.csv"), x, labels);
  write_samples_csv(ctx.artifact("samples/transfer-output.csv"), out.samples, labels);
  const Vector in_mean = sample_mean(x);
  const Vector out_mean = sample_mean(out.samples);
  const Vector b_mean = b.mean();
  const auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  JsonLines log(ctx.artifact("logs/style-transfer.jsonl"));
  log.write(Json{{"event", "style-transfer"},
                 {"encoder", t.encoder},
                 {"decoder", t.decoder},
                 {"samples", t.count},
                 {"input_mean", vec(in_mean)},
                 {"output_mean", vec(out_mean)},
                 {"domain_b_mean", vec(b_mean)},
                 {"evaluations", out.evaluations}});
  ctx.summary.evaluations = out.evaluations;
  ctx.summary.samples = t.count;
}

void cmd_eval(Context& ctx) {
  const auto& c = ctx.config;
  const fs::path samples_path = c.eval.samples.empty() ? ctx.out / "samples/sample.csv"
                                                       : fs::path(resolve_output_dir(c.eval.samples));
  const fs::path resolved = samples_path.is_absolute() || fs::exists(samples_path) ? samples_path
                                                                                    : ctx.out / samples_path;
  std::vector<int> labels;
  const Matrix x = read_samples_csv(resolved, &labels);
  const GmmSpec data = c.data.build();
  const Matrix ref = data_batch(data, c.eval.reference, derive_seed(c.seed, "eval-reference"), nullptr);

  MetricReport ed = energy_distance(x, ref, {20, derive_seed(c.seed, "eval-bootstrap")});
  ed.fingerprint = c.fingerprint();
  const ModeStats ms = mode_stats(x, data, labels, 20, derive_seed(c.seed, "eval-modes"));

  Json counts = Json::array();
  for (auto n : ms.counts) counts.push_back(n);
  Json report{{"note", "energy distance and mode statistics on a toy mixture; not comparable to FID or IS"},
              {"samples_file", resolved.generic_string()},
              {"energy_distance", Json::parse(ed.to_json())},
              {"entropy", ms.entropy},
              {"entropy_se", ms.entropy_se},
              {"spread", ms.spread},
              {"spread_se", ms.spread_se},
              {"label_accuracy", ms.label_accuracy},
              {"mode_counts", counts},
              {"config_fingerprint", c.fingerprint()}};
  std::ofstream(ctx.artifact("metrics/eval.json")) << report.dump(2) << '\n';
  std::ofstream csv(ctx.artifact("metrics/eval.csv"));
  csv << std::setprecision(10) << "metric,value,std_error,samples\n"
      << "energy_distance," << ed.value << ',' << ed.std_error << ',' << ed.samples << '\n'
      << "entropy," << ms.entropy << ',' << ms.entropy_se << ',' << x.rows() << '\n'
      << "spread," << ms.spread << ',' << ms.spread_se << ',' << x.rows() << '\n';
  ctx.summary.samples = static_cast<std::size_t>(x.rows());
}

DenoiserPtr sweep_model(const ExperimentConfig& c, const std::string& method, SamplerMode mode, int steps) {
  if (method == "oracle") return make_oracle_teacher(c.data.build(), c.schedule);
  if (method == "teacher") return guided_source(c, c.stage1_teacher);
  if (method == "stage1") return resolve_model(c, "stage1", steps);
  if (method == "distilled") return resolve_model(c, mode == SamplerMode::Stochastic ? "stage2-stoch" : "stage2", steps);
  if (method == "naive") return resolve_model(c, "naive", steps);
  fail(ErrorCode::Config, "unknown sweep method '" + method + "'");
}

void cmd_sweep(Context& ctx) {
  const auto& c = ctx.config;
  const auto& sw = c.sweep;
  const GmmSpec data = c.data.build();
  const Matrix ref = data_batch(data, sw.reference, derive_seed(c.seed, "sweep-reference"), nullptr);
  const auto labels = draw_labels(data, sw.count, -1, derive_seed(c.seed, "sweep-labels"));

  std::ofstream table(ctx.artifact("sweep/table.csv"));
  table << std::setprecision(10)
        << "method,sampler,steps,w,energy_distance,energy_se,entropy,entropy_se,spread,spread_se,"
           "evaluations_per_sample,samples\n";
  std::ofstream curve(ctx.artifact("sweep/curve.csv"));
  curve << std::setprecision(10) << "method,sampler,steps,w,diversity_entropy,energy_distance\n";

  for (const auto& method : sw.methods) {
    for (const auto& sampler : sw.samplers) {
      const SamplerMode mode = parse_sampler_mode(sampler);
      require(mode != SamplerMode::Encode, "sweep samplers must generate samples");
      for (int steps : sw.steps) {
        const DenoiserPtr model = sweep_model(c, method, mode, steps);
        for (std::size_t wi = 0; wi < sw.w.size(); ++wi) {
          const double w = sw.w[wi];
          const std::string cell = method + "/" + sampler + "/" + std::to_string(steps) + "/" + std::to_string(wi);
          const SamplerPlan plan{steps, mode, w, derive_seed(c.seed, "sweep-noise/" + cell), false};
          const SampleBatch batch = generate(*model, plan, sw.count, labels, derive_seed(c.seed, "sweep-z1/" + cell));
          const MetricReport ed = energy_distance(batch.samples, ref, {20, derive_seed(c.seed, "sweep-ed/" + cell)});
          const ModeStats ms = mode_stats(batch.samples, data, labels, 20, derive_seed(c.seed, "sweep-ms/" + cell));
          const double per = static_cast<double>(batch.evaluations) / static_cast<double>(sw.count);
          table << method << ',' << sampler << ',' << steps << ',' << w << ',' << ed.value << ',' << ed.std_error
                << ',' << ms.entropy << ',' << ms.entropy_se << ',' << ms.spread << ',' << ms.spread_se << ',' << per
                << ',' << sw.count << '\n';
          curve << method << ',' << sampler << ',' << steps << ',' << w << ',' << ms.entropy << ',' << ed.value
                << '\n';
          ctx.summary.evaluations += batch.evaluations;
          ctx.summary.samples += sw.count;
          ctx.note("sweep " + cell + " energy=" + std::to_string(ed.value));
        }
      }
    }
  }
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"train-teacher", "distill-stage1", "distill-stage2", "distill-encoder",
                                              "distill-naive", "sample",         "encode",         "style-transfer",
                                              "eval",          "sweep"};
  return names;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  std::string bytes(8, '\0');
  for (int i = 0; i < 8; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<char>((seed >> (8 * i)) & 0xFFu);
  bytes += purpose;
  return std::stoull(fnv1a_hex(bytes), nullptr, 16);
}

fs::path checkpoint_path(const ExperimentConfig& config, std::string_view role, int steps) {
  std::string name(role);
  if (steps > 0) name += "-N" + std::to_string(steps);
  return resolve_output_dir(config.out) / "checkpoints" / (name + ".ckpt");
}

DenoiserPtr resolve_model(const ExperimentConfig& c, std::string_view ref, int steps) {
  if (ref == "oracle" || ref == "oracle:a") return make_oracle_teacher(c.data.build(), c.schedule);
  if (ref == "oracle:b") return make_oracle_teacher(c.data_b.build(), c.schedule);
  if (ref == "teacher") return std::make_shared<GuidedTeacher>(load_role(c, "teacher", 0, c.teacher_spec()));
  if (ref == "stage1") return load_role(c, "stage1", 0, c.student_spec());
  if (ref == "stage2") return load_role(c, "stage2-det", steps, c.student_spec());
  if (ref == "stage2-stoch") return load_role(c, "stage2-stoch", steps, c.student_spec());
  if (ref == "encoder") return load_role(c, "encoder", steps, c.student_spec());
  if (ref == "naive") return std::make_shared<GuidedTeacher>(load_role(c, "naive", steps, c.student_spec()));

  fs::path path{std::string(ref)};
  if (path.is_relative() && !fs::exists(path)) path = resolve_output_dir(c.out) / path;
  LoadedCheckpoint loaded = load_checkpoint(path);
  std::shared_ptr<const MlpDenoiser> model = std::move(loaded.model);
  if (loaded.meta.role == "teacher" || loaded.meta.role == "naive") return std::make_shared<GuidedTeacher>(model);
  return model;
}

std::vector<int> draw_labels(const GmmSpec& data, std::size_t n, int label, std::uint64_t seed) {
  if (label >= 0) {
    require(static_cast<std::size_t>(label) < data.class_count(), "sample.label is not a class of the dataset");
    return std::vector<int>(n, label);
  }
  const auto weights = data.class_weights();
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  std::mt19937_64 rng(seed);
  std::vector<int> out(n);
  for (auto& v : out) v = pick(rng);
  return out;
}

void write_samples_csv(const fs::path& path, const Matrix& x, std::span<const int> labels) {
  require(labels.empty() || labels.size() == static_cast<std::size_t>(x.rows()), "one label per sample row");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << "label";
  for (Eigen::Index k = 0; k < x.cols(); ++k) out << ",x" << k;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out << (labels.empty() ? -1 : labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index k = 0; k < x.cols(); ++k) out << ',' << x(i, k);
    out << '\n';
  }
}

Matrix read_samples_csv(const fs::path& path, std::vector<int>* labels) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot read samples " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Io, "empty samples file " + path.string());
  const auto cols = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
  require(cols >= 1, "samples file needs at least one coordinate column");
  std::vector<double> values;
  std::vector<int> row_labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    row_labels.push_back(std::stoi(cell));
    for (Eigen::Index k = 0; k < cols; ++k) {
      if (!std::getline(row, cell, ',')) fail(ErrorCode::Io, "ragged row in " + path.string());
      values.push_back(std::stod(cell));
    }
  }
  const auto rows = static_cast<Eigen::Index>(row_labels.size());
  if (rows == 0) fail(ErrorCode::Io, "no samples in " + path.string());
  Matrix x = Eigen::Map<const Matrix>(values.data(), rows, cols);
  if (labels) {
    const bool any = std::any_of(row_labels.begin(), row_labels.end(), [](int v) { return v >= 0; });
    *labels = any ? std::move(row_labels) : std::vector<int>{};
  }
  return x;
}

RunSummary run_subcommand(std::string_view name, const ExperimentConfig& config, const RunOptions& options) {
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    fail(ErrorCode::UnknownCommand, "unknown subcommand '" + std::string(name) + "'");
  }
  Context ctx{config, options, resolve_output_dir(config.out), {}};
  ctx.summary.subcommand = std::string(name);
  ctx.summary.out_dir = ctx.out;
  fs::create_directories(ctx.out);

  if (name == "train-teacher") cmd_train_teacher(ctx);
  else if (name == "distill-stage1") cmd_stage1(ctx);
  else if (name == "distill-stage2") cmd_progressive(ctx, config.stage2_variant, config.stage2, name);
  else if (name == "distill-encoder") cmd_progressive(ctx, Stage2Variant::Encoder, config.encoder, name);
  else if (name == "distill-naive") cmd_naive(ctx);
  else if (name == "sample") cmd_sample(ctx);
  else if (name == "encode") cmd_encode(ctx);
  else if (name == "style-transfer") cmd_style_transfer(ctx);
  else if (name == "eval") cmd_eval(ctx);
  else if (name == "sweep") cmd_sweep(ctx);
  else fail(ErrorCode::UnknownCommand, "unknown subcommand '" + std::string(name) + "'");

  write_manifest(ctx, name);
  return ctx.summary;
}

}  // namespace gdistill
