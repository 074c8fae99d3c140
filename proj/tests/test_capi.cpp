// SPDX-License-Identifier: Apache-2.0
// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "gdistill/gdistill.h"

namespace {

gd_config* parse(const char* text) {
  gd_config* c = nullptr;
  REQUIRE(gd_config_parse(text, &c) == GD_OK);
  return c;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(gd_version()) == "0.1.0");
  CHECK(std::string(gd_status_name(GD_OK)) == "ok");
  CHECK(std::string(gd_status_name(GD_ERR_CONFIG)) == "config");
  CHECK(std::string(gd_status_name(GD_ERR_FINGERPRINT)) == "fingerprint_mismatch");
  CHECK(std::string(gd_status_name(static_cast<gd_status>(99))) == "unknown");
}

TEST_CASE("config errors set the last error message") {
  gd_config* c = nullptr;
  CHECK(gd_config_parse("bogus = 1\n", &c) == GD_ERR_CONFIG);
  CHECK(c == nullptr);
  CHECK(std::string(gd_last_error()).find("bogus") != std::string::npos);
  CHECK(gd_config_load("/nonexistent.cfg", &c) == GD_ERR_IO);
  CHECK(gd_config_parse(nullptr, &c) == GD_ERR_INVALID_ARGUMENT);
}

TEST_CASE("set re-parses and leaves the config unchanged on failure") {
  gd_config* c = parse("seed = 1\n");
  char before[17], after[17];
  REQUIRE(gd_config_fingerprint(c, before, sizeof before) == GD_OK);
  CHECK(std::strlen(before) == 16);
  CHECK(gd_config_set(c, "guidance.w_min", "9") == GD_ERR_CONFIG);
  REQUIRE(gd_config_fingerprint(c, after, sizeof after) == GD_OK);
  CHECK(std::string(before) == after);
  CHECK(gd_config_set(c, "seed", "2") == GD_OK);
  REQUIRE(gd_config_fingerprint(c, after, sizeof after) == GD_OK);
  CHECK(std::string(before) != after);
  char tiny[4];
  CHECK(gd_config_fingerprint(c, tiny, sizeof tiny) == GD_ERR_INVALID_ARGUMENT);
  gd_config_free(c);
}

TEST_CASE("oracle model evaluation and sampling") {
  gd_config* c = parse("");
  gd_model* m = nullptr;
  REQUIRE(gd_model_load(c, "oracle", 0, &m) == GD_OK);
  size_t dim = 0, classes = 0;
  int wc = 0, per = 0;
  REQUIRE(gd_model_info(m, &dim, &classes, &wc, &per) == GD_OK);
  CHECK(dim == 2);
  CHECK(classes == 2);
  CHECK(wc == 1);
  CHECK(per == 2);

  const std::vector<double> z{0.1, 0.2, -0.3, 0.4};
  const std::vector<double> t{0.5, 0.5};
  const std::vector<int> labels{0, 1};
  const std::vector<double> w{1.0, 1.0};
  std::vector<double> x(4);
  REQUIRE(gd_model_eval(m, z.data(), 2, t.data(), labels.data(), w.data(), x.data()) == GD_OK);
  CHECK(std::isfinite(x[0]));
  CHECK(gd_model_evaluations(m) == 4);
  CHECK(gd_model_eval(m, z.data(), 2, t.data(), nullptr, w.data(), x.data()) == GD_ERR_INVALID_ARGUMENT);

  const gd_sampler_plan plan{8, GD_SAMPLER_DDIM, 2.0, 0};
  std::vector<double> out(4);
  uint64_t evals = 0;
  REQUIRE(gd_sample(m, &plan, z.data(), 2, labels.data(), out.data(), &evals) == GD_OK);
  CHECK(evals == 2 * 8 * 2);

  gd_model* b = nullptr;
  REQUIRE(gd_model_load(c, "oracle:b", 0, &b) == GD_OK);
  const gd_sampler_plan enc{32, GD_SAMPLER_ENCODE, 0.0, 0};
  const gd_sampler_plan dec{32, GD_SAMPLER_DDIM, 0.0, 0};
  const std::vector<double> data{-1.0, 0.0, 1.0, 0.0};
  REQUIRE(gd_style_transfer(m, &enc, b, &dec, data.data(), 2, labels.data(), out.data()) == GD_OK);
  CHECK(out[1] > 1.0);
  CHECK(gd_model_save(m, "/tmp/never.ckpt") == GD_ERR_INVALID_ARGUMENT);
  gd_model_free(b);
  gd_model_free(m);
  gd_config_free(c);
}

TEST_CASE("missing checkpoints report io") {
  gd_config* c = parse("out = /tmp/gdistill-capi-missing\n");
  gd_model* m = nullptr;
  CHECK(gd_model_load(c, "stage1", 0, &m) == GD_ERR_IO);
  CHECK(m == nullptr);
  uint64_t evals = 0;
  CHECK(gd_run(c, "distill-stage2", &evals) == GD_ERR_IO);
  CHECK(gd_run(c, "nope", &evals) == GD_ERR_UNKNOWN_COMMAND);
  gd_config_free(c);
}

TEST_CASE("run a training subcommand with progress and reload it") {
  const std::string dir = "/tmp/gdistill-capi-run";
  std::filesystem::remove_all(dir);
  const std::string text = "out = " + dir +
                           "\nmodel.hidden = 8\nmodel.layers = 1\nstage1.teacher = oracle\nstage1.iterations = 20\n"
                           "stage1.log_every = 5\nstage1.batch = 16\n";
  gd_config* c = parse(text.c_str());
  int lines = 0;
  const auto count = [](const char*, void* user) { ++*static_cast<int*>(user); };
  REQUIRE(gd_run_with_progress(c, "distill-stage1", count, &lines, nullptr) == GD_OK);
  CHECK(lines == 5);
  gd_model* m = nullptr;
  REQUIRE(gd_model_load(c, "stage1", 0, &m) == GD_OK);
  const std::string copy = dir + "/copy.ckpt";
  CHECK(gd_model_save(m, copy.c_str()) == GD_OK);
  gd_model* again = nullptr;
  REQUIRE(gd_model_load(c, copy.c_str(), 0, &again) == GD_OK);
  gd_model_free(again);
  gd_model_free(m);

  // a different architecture must not load the stored weights
  REQUIRE(gd_config_set(c, "model.hidden", "9") == GD_OK);
  CHECK(gd_model_load(c, "stage1", 0, &m) == GD_ERR_FINGERPRINT);
  gd_config_free(c);
}

TEST_CASE("metrics") {
  const std::vector<double> a{0.0, 1.0, 2.0, 3.0};
  double v = -1.0, se = -1.0;
  REQUIRE(gd_energy_distance(a.data(), 4, a.data(), 4, 1, 0, &v, &se) == GD_OK);
  CHECK(v == 0.0);
  const std::vector<double> b{0.0, 1.0, 2.0, 7.0};
  double rms = 0.0;
  REQUIRE(gd_reconstruction_error(a.data(), b.data(), 2, 2, &rms) == GD_OK);
  CHECK(rms == doctest::Approx(std::sqrt(8.0)));
  CHECK(gd_reconstruction_error(a.data(), b.data(), 0, 2, &rms) == GD_ERR_INVALID_ARGUMENT);
}
