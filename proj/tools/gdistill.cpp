// SPDX-License-Identifier: Apache-2.0
// Command-line front end over the gdistill C API.
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gdistill/gdistill.h"

namespace {

int report(gd_status status) {
  // One machine-parsable line: key=value pairs with a quoted message.
  std::string msg = gd_last_error();
  for (auto& c : msg) {
    if (c == '"' || c == '\n') c = '\'';
  }
  std::fprintf(stderr, "gdistill: error code=%s exit=%d message=\"%s\"\n", gd_status_name(status),
               static_cast<int>(status), msg.c_str());
  return static_cast<int>(status);
}

void print_progress(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

/// Config keys a flag maps to, per subcommand.
std::vector<std::string> keys_for(const std::string& flag, const std::string& sub) {
  static const std::map<std::string, std::map<std::string, std::vector<std::string>>> table{
      {"steps",
       {{"sample", {"sample.steps"}},
        {"encode", {"sample.steps"}},
        {"style-transfer", {"transfer.encode_steps", "transfer.decode_steps"}},
        {"sweep", {"sweep.steps"}},
        {"distill-stage2", {"stage2.final_steps"}},
        {"distill-encoder", {"encoder.final_steps"}},
        {"distill-naive", {"naive.final_steps"}}}},
      {"w", {{"sample", {"sample.w"}}, {"encode", {"sample.w"}}, {"style-transfer", {"transfer.w"}}, {"sweep", {"sweep.w"}}}},
      {"sampler", {{"distill-stage2", {"stage2.sampler"}}, {"sample", {"sample.mode"}}, {"sweep", {"sweep.samplers"}}}},
  };
  const auto f = table.find(flag);
  if (f == table.end()) return {};
  const auto s = f->second.find(sub);
  return s == f->second.end() ? std::vector<std::string>{} : s->second;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided diffusion distillation experiments on toy mixtures"};
  app.set_version_flag("--version", gd_version());

  std::string subcommand;
  std::optional<std::string> config_path, out, seed, sampler, steps, w, profile;
  bool verbose = false;
  app.add_option("subcommand", subcommand,
                 "train-teacher | distill-stage1 | distill-stage2 | distill-encoder | distill-naive | "
                 "sample | encode | style-transfer | eval | sweep")
      ->required();
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--out", out, "output directory (relative paths honour GDISTILL_OUT_ROOT)");
  app.add_option("--seed", seed, "experiment seed");
  app.add_option("--sampler", sampler, "det|stoch for distill-stage2; ddim|stochastic|ancestral for sampling");
  app.add_option("--steps", steps, "sampling steps (final N for distillation)");
  app.add_option("--w", w, "guidance strength (comma list for sweep)");
  app.add_option("--profile", profile, "desk | paper-scale")->check(CLI::IsMember({"desk", "paper-scale"}));
  app.add_flag("-v,--verbose", verbose, "print training progress");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "gdistill: error code=invalid_argument exit=%d message=\"%s\"\n",
                 static_cast<int>(GD_ERR_INVALID_ARGUMENT), e.what());
    return static_cast<int>(GD_ERR_INVALID_ARGUMENT);
  }

  gd_config* config = nullptr;
  gd_status status = config_path ? gd_config_load(config_path->c_str(), &config) : gd_config_parse("", &config);
  if (status != GD_OK) return report(status);

  std::vector<std::pair<std::string, std::string>> overrides;
  if (profile) overrides.emplace_back("profile", *profile);
  if (out) overrides.emplace_back("out", *out);
  if (seed) overrides.emplace_back("seed", *seed);
  for (const auto& [flag, value] : {std::pair{"steps", &steps}, {"w", &w}, {"sampler", &sampler}}) {
    if (!*value) continue;
    const auto keys = keys_for(flag, subcommand);
    if (keys.empty()) {
      gd_config_free(config);
      std::fprintf(stderr, "gdistill: error code=invalid_argument exit=%d message=\"--%s does not apply to %s\"\n",
                   static_cast<int>(GD_ERR_INVALID_ARGUMENT), flag, subcommand.c_str());
      return static_cast<int>(GD_ERR_INVALID_ARGUMENT);
    }
    for (const auto& key : keys) overrides.emplace_back(key, **value);
  }
  for (const auto& [key, value] : overrides) {
    status = gd_config_set(config, key.c_str(), value.c_str());
    if (status != GD_OK) {
      gd_config_free(config);
      return report(status);
    }
  }

  uint64_t evaluations = 0;
  status = gd_run_with_progress(config, subcommand.c_str(), verbose ? print_progress : nullptr, nullptr, &evaluations);
  gd_config_free(config);
  if (status != GD_OK) return report(status);
  std::printf("ok subcommand=%s evaluations=%llu\n", subcommand.c_str(), static_cast<unsigned long long>(evaluations));
  return 0;
}
