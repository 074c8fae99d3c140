/* SPDX-License-Identifier: Apache-2.0 */
/* The public header must compile as C and link against the shared library. */
#include <stdio.h>
#include <string.h>

#include "gdistill/gdistill.h"

int main(void) {
  gd_config* config = NULL;
  gd_model* model = NULL;
  const double z[2] = {0.0, 0.0};
  double out[2];
  uint64_t evaluations = 0;
  gd_sampler_plan plan;
  int label = 0;

  if (gd_config_parse("seed = 1\n", &config) != GD_OK) return 1;
  if (gd_model_load(config, "oracle", 0, &model) != GD_OK) return 2;
  plan.steps = 4;
  plan.mode = GD_SAMPLER_DDIM;
  plan.w = 1.0;
  plan.seed = 0;
  if (gd_sample(model, &plan, z, 1, &label, out, &evaluations) != GD_OK) return 3;
  if (evaluations != 8) return 4;
  if (gd_config_set(config, "no.such.key", "1") != GD_ERR_CONFIG) return 5;
  if (strlen(gd_last_error()) == 0) return 6;
  gd_model_free(model);
  gd_config_free(config);
  printf("capi smoke ok %s\n", gd_version());
  return 0;
}
