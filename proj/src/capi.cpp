// SPDX-License-Identifier: Apache-2.0
#include "gdistill/gdistill.h"

#include <cstring>
#include <exception>
#include <fstream>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "gdistill/checkpoint.hpp"
#include "gdistill/config.hpp"
#include "gdistill/error.hpp"
#include "gdistill/eval.hpp"
#include "gdistill/experiment.hpp"
#include "gdistill/sampler.hpp"
#include "gdistill/version.hpp"

struct gd_config {
  std::string text;
  gdistill::ConfigOverrides overrides;
  gdistill::ExperimentConfig config;
};

struct gd_model {
  gdistill::DenoiserPtr denoiser;
};

namespace {

thread_local std::string last_error;

gd_status record(gd_status status, const char* message) {
  last_error = message;
  return status;
}

template <typename F>
gd_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return GD_OK;
  } catch (const gdistill::Error& e) {
    return record(static_cast<gd_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return record(GD_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return record(GD_ERR_INTERNAL, e.what());
  } catch (...) {
    return record(GD_ERR_INTERNAL, "unknown failure");
  }
}

void need(const void* p, const char* what) {
  gdistill::require(p != nullptr, std::string(what) + " must not be null");
}

gdistill::Matrix copy_rows(const double* data, std::size_t rows, std::size_t cols) {
  return Eigen::Map<const gdistill::Matrix>(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

gdistill::SamplerPlan to_plan(const gd_sampler_plan& p) {
  gdistill::require(p.mode >= GD_SAMPLER_DDIM && p.mode <= GD_SAMPLER_ENCODE, "unknown sampler mode");
  return {p.steps, static_cast<gdistill::SamplerMode>(p.mode), p.w, p.seed, false};
}

}  // namespace

extern "C" {

const char* gd_version(void) { return gdistill::kVersionString; }

const char* gd_last_error(void) { return last_error.c_str(); }

const char* gd_status_name(gd_status status) {
  if (status == GD_OK) return "ok";
  if (status < GD_ERR_INVALID_ARGUMENT || status > GD_ERR_INTERNAL) return "unknown";
  return gdistill::error_code_name(static_cast<gdistill::ErrorCode>(status));
}

gd_status gd_config_load(const char* path, gd_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    auto config = gdistill::load_config(path);
    std::ifstream in(path);
    std::ostringstream text;
    text << in.rdbuf();
    *out = new gd_config{text.str(), {}, std::move(config)};
  });
}

gd_status gd_config_parse(const char* text, gd_config** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = nullptr;
    auto config = gdistill::parse_config(text);
    *out = new gd_config{text, {}, std::move(config)};
  });
}

gd_status gd_config_set(gd_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    auto overrides = config->overrides;
    overrides.emplace_back(key, value);
    config->config = gdistill::parse_config(config->text, overrides);
    config->overrides = std::move(overrides);
  });
}

gd_status gd_config_fingerprint(const gd_config* config, char* buf, size_t len) {
  return guarded([&] {
    need(config, "config");
    need(buf, "buf");
    const std::string fp = config->config.fingerprint();
    gdistill::require(len > fp.size(), "fingerprint buffer too small");
    std::memcpy(buf, fp.c_str(), fp.size() + 1);
  });
}

void gd_config_free(gd_config* config) { delete config; }

gd_status gd_run(const gd_config* config, const char* subcommand, uint64_t* evaluations) {
  return gd_run_with_progress(config, subcommand, nullptr, nullptr, evaluations);
}

gd_status gd_run_with_progress(const gd_config* config, const char* subcommand, gd_progress_fn progress, void* user,
                               uint64_t* evaluations) {
  return guarded([&] {
    need(config, "config");
    need(subcommand, "subcommand");
    gdistill::RunOptions options;
    if (progress) options.progress = [progress, user](const std::string& line) { progress(line.c_str(), user); };
    const auto summary = gdistill::run_subcommand(subcommand, config->config, options);
    if (evaluations) *evaluations = summary.evaluations;
  });
}

gd_status gd_model_load(const gd_config* config, const char* ref, int steps, gd_model** out) {
  return guarded([&] {
    need(config, "config");
    need(ref, "ref");
    need(out, "out");
    *out = nullptr;
    *out = new gd_model{gdistill::resolve_model(config->config, ref, steps)};
  });
}

gd_status gd_model_info(const gd_model* model, size_t* dim, size_t* classes, int* w_conditioned,
                        int* evaluations_per_call) {
  return guarded([&] {
    need(model, "model");
    const auto& d = *model->denoiser;
    if (dim) *dim = d.dim();
    if (classes) *classes = d.class_count();
    if (w_conditioned) *w_conditioned = d.w_conditioned() ? 1 : 0;
    if (evaluations_per_call) *evaluations_per_call = d.evaluations_per_call();
  });
}

gd_status gd_model_eval(const gd_model* model, const double* z, size_t rows, const double* t, const int* labels,
                        const double* w, double* x_hat) {
  return guarded([&] {
    need(model, "model");
    need(z, "z");
    need(t, "t");
    need(x_hat, "x_hat");
    const auto& d = *model->denoiser;
    const auto m = copy_rows(z, rows, d.dim());
    gdistill::Conditioning cond;
    if (labels) cond.labels = {labels, rows};
    if (w) cond.w = {w, rows};
    const auto out = d.eval(m, {t, rows}, cond);
    std::memcpy(x_hat, out.x_hat.data(), sizeof(double) * rows * d.dim());
  });
}

uint64_t gd_model_evaluations(const gd_model* model) { return model ? model->denoiser->evaluations() : 0; }

gd_status gd_model_save(const gd_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    const auto* mlp = dynamic_cast<const gdistill::MlpDenoiser*>(model->denoiser.get());
    gdistill::require(mlp != nullptr, "only learned models can be saved");
    gdistill::CheckpointMeta meta;
    meta.role = mlp->w_conditioned() ? "stage1" : "teacher";
    meta.w_min = mlp->spec().w_min;
    meta.w_max = mlp->spec().w_max;
    gdistill::save_checkpoint(path, *mlp, meta);
  });
}

void gd_model_free(gd_model* model) { delete model; }

gd_status gd_sample(const gd_model* model, const gd_sampler_plan* plan, const double* start, size_t rows,
                    const int* labels, double* out, uint64_t* evaluations) {
  return guarded([&] {
    need(model, "model");
    need(plan, "plan");
    need(start, "start");
    need(out, "out");
    const auto& d = *model->denoiser;
    const auto batch = gdistill::run_sampler(d, to_plan(*plan), copy_rows(start, rows, d.dim()),
                                             labels ? std::span<const int>(labels, rows) : std::span<const int>{});
    std::memcpy(out, batch.samples.data(), sizeof(double) * rows * d.dim());
    if (evaluations) *evaluations = batch.evaluations;
  });
}

gd_status gd_style_transfer(const gd_model* encoder, const gd_sampler_plan* encode_plan, const gd_model* decoder,
                            const gd_sampler_plan* decode_plan, const double* x, size_t rows, const int* labels,
                            double* out) {
  return guarded([&] {
    need(encoder, "encoder");
    need(decoder, "decoder");
    need(encode_plan, "encode_plan");
    need(decode_plan, "decode_plan");
    need(x, "x");
    need(out, "out");
    const auto& enc = *encoder->denoiser;
    const auto& dec = *decoder->denoiser;
    const std::span<const int> l = labels ? std::span<const int>(labels, rows) : std::span<const int>{};
    const auto batch = gdistill::style_transfer(enc, to_plan(*encode_plan), dec, to_plan(*decode_plan),
                                                copy_rows(x, rows, enc.dim()), enc.class_count() ? l : std::span<const int>{},
                                                dec.class_count() ? l : std::span<const int>{});
    std::memcpy(out, batch.samples.data(), sizeof(double) * rows * dec.dim());
  });
}

gd_status gd_energy_distance(const double* a, size_t rows_a, const double* b, size_t rows_b, size_t dim,
                             uint64_t seed, double* value, double* std_error) {
  return guarded([&] {
    need(a, "a");
    need(b, "b");
    need(value, "value");
    const auto report = gdistill::energy_distance(copy_rows(a, rows_a, dim), copy_rows(b, rows_b, dim), {20, seed});
    *value = report.value;
    if (std_error) *std_error = report.std_error;
  });
}

gd_status gd_reconstruction_error(const double* x, const double* y, size_t rows, size_t dim, double* rms) {
  return guarded([&] {
    need(x, "x");
    need(y, "y");
    need(rms, "rms");
    *rms = gdistill::reconstruction_error(copy_rows(x, rows, dim), copy_rows(y, rows, dim)).value;
  });
}

}  // extern "C"
