/* SPDX-License-Identifier: Apache-2.0 */
#ifndef GDISTILL_GDISTILL_H
#define GDISTILL_GDISTILL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(GDISTILL_BUILDING_LIBRARY)
#    define GDISTILL_API __declspec(dllexport)
#  else
#    define GDISTILL_API __declspec(dllimport)
#  endif
#else
#  define GDISTILL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Nonzero values match the CLI exit codes. */
typedef enum gd_status {
  GD_OK = 0,
  GD_ERR_INVALID_ARGUMENT = 1,
  GD_ERR_CONFIG = 2,
  GD_ERR_IO = 3,
  GD_ERR_FINGERPRINT = 4,
  GD_ERR_NUMERIC = 5,
  GD_ERR_UNKNOWN_COMMAND = 6,
  GD_ERR_INTERNAL = 7
} gd_status;

typedef enum gd_sampler_mode {
  GD_SAMPLER_DDIM = 0,
  GD_SAMPLER_STOCHASTIC = 1,
  GD_SAMPLER_ANCESTRAL = 2,
  GD_SAMPLER_ENCODE = 3
} gd_sampler_mode;

typedef struct gd_sampler_plan {
  int steps;
  gd_sampler_mode mode;
  double w;
  uint64_t seed;
} gd_sampler_plan;

typedef struct gd_config gd_config;
typedef struct gd_model gd_model;

GDISTILL_API const char* gd_version(void);
/* Message for the most recent failure on the calling thread ("" if none). */
GDISTILL_API const char* gd_last_error(void);
GDISTILL_API const char* gd_status_name(gd_status status);

/* ---- configuration ---- */
GDISTILL_API gd_status gd_config_load(const char* path, gd_config** out);
GDISTILL_API gd_status gd_config_parse(const char* text, gd_config** out);
/* Applies `key = value` on top of the loaded text; the config is unchanged on failure. */
GDISTILL_API gd_status gd_config_set(gd_config* config, const char* key, const char* value);
/* Writes the 16-hex-digit fingerprint plus NUL; `len` must be >= 17. */
GDISTILL_API gd_status gd_config_fingerprint(const gd_config* config, char* buf, size_t len);
GDISTILL_API void gd_config_free(gd_config* config);

/* Runs a subcommand. `evaluations` (optional) receives the sampling evaluation count. */
GDISTILL_API gd_status gd_run(const gd_config* config, const char* subcommand, uint64_t* evaluations);
/* As gd_run; `progress` (optional) receives one line per training log event. */
typedef void (*gd_progress_fn)(const char* line, void* user);
GDISTILL_API gd_status gd_run_with_progress(const gd_config* config, const char* subcommand, gd_progress_fn progress,
                                            void* user, uint64_t* evaluations);

/* ---- models ---- */
/* `ref` is "oracle", "oracle:b", a stage name or a checkpoint path; `steps`
 * selects the step-specific checkpoint for progressive stages. */
GDISTILL_API gd_status gd_model_load(const gd_config* config, const char* ref, int steps, gd_model** out);
GDISTILL_API gd_status gd_model_info(const gd_model* model, size_t* dim, size_t* classes, int* w_conditioned,
                                     int* evaluations_per_call);
/* x_hat for `rows` states. `labels` and `w` may be NULL when the model does not use them. */
GDISTILL_API gd_status gd_model_eval(const gd_model* model, const double* z, size_t rows, const double* t,
                                     const int* labels, const double* w, double* x_hat);
GDISTILL_API uint64_t gd_model_evaluations(const gd_model* model);
/* Saves a learned model; fails for analytic or guided models. */
GDISTILL_API gd_status gd_model_save(const gd_model* model, const char* path);
GDISTILL_API void gd_model_free(gd_model* model);

/* ---- sampling ---- */
/* `start` is z_1 for generation or the data for GD_SAMPLER_ENCODE. Row-major, rows x dim. */
GDISTILL_API gd_status gd_sample(const gd_model* model, const gd_sampler_plan* plan, const double* start,
                                 size_t rows, const int* labels, double* out, uint64_t* evaluations);
GDISTILL_API gd_status gd_style_transfer(const gd_model* encoder, const gd_sampler_plan* encode_plan,
                                         const gd_model* decoder, const gd_sampler_plan* decode_plan,
                                         const double* x, size_t rows, const int* labels, double* out);

/* ---- metrics ---- */
GDISTILL_API gd_status gd_energy_distance(const double* a, size_t rows_a, const double* b, size_t rows_b,
                                          size_t dim, uint64_t seed, double* value, double* std_error);
GDISTILL_API gd_status gd_reconstruction_error(const double* x, const double* y, size_t rows, size_t dim,
                                               double* rms);

#ifdef __cplusplus
}
#endif

#endif /* GDISTILL_GDISTILL_H */
