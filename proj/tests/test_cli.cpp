// SPDX-License-Identifier: Apache-2.0
// Runs the gdistill executable (path in argv[1]) and checks exit codes and output.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

std::string binary;

struct Result {
  int exit_code = -1;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = "'" + binary + "' " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 512> buf{};
  while (fgets(buf.data(), buf.size(), pipe) != nullptr) r.output += buf.data();
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::filesystem::path write_config(const std::string& name, const std::string& text) {
  const auto dir = std::filesystem::temp_directory_path() / "gdistill-cli";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("version flag") {
  const Result r = run("--version");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("0.1.0") != std::string::npos);
}

TEST_CASE("unknown subcommand exits with its code and one parsable line") {
  const Result r = run("frobnicate");
  CHECK(r.exit_code == 6);
  CHECK(r.output.rfind("gdistill: error code=unknown_subcommand exit=6 message=\"", 0) == 0);
  CHECK(r.output.find('\n') == r.output.size() - 1);
}

TEST_CASE("usage errors exit with invalid_argument") {
  CHECK(run("").exit_code == 1);
  CHECK(run("sample --profile giant").exit_code == 1);
  const Result r = run("train-teacher --steps 4");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("--steps does not apply to train-teacher") != std::string::npos);
}

TEST_CASE("config and io failures") {
  CHECK(run("sample --config /nonexistent/x.cfg").exit_code == 3);
  const auto bad = write_config("bad.cfg", "sample.count = many\n");
  const Result r = run("sample --config '" + bad.string() + "'");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("code=config") != std::string::npos);
  const auto missing = write_config("missing.cfg", "sample.model = stage2\n");
  const auto out = std::filesystem::temp_directory_path() / "gdistill-cli" / "empty-run";
  CHECK(run("sample --config '" + missing.string() + "' --out '" + out.string() + "'").exit_code == 3);
}

TEST_CASE("oracle sampling reports its evaluation count") {
  const auto out = std::filesystem::temp_directory_path() / "gdistill-cli" / "oracle-run";
  const auto cfg = write_config("oracle.cfg", "sample.model = oracle\nsample.count = 100\n");
  const Result r = run("sample --config '" + cfg.string() + "' --out '" + out.string() + "' --steps 4 --w 1 --seed 3");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("ok subcommand=sample evaluations=800") != std::string::npos);
  CHECK(std::filesystem::exists(out / "samples/sample.csv"));
  CHECK(std::filesystem::exists(out / "manifests/sample.json"));

  const Result e = run("eval --config '" + cfg.string() + "' --out '" + out.string() + "' --seed 3");
  CHECK(e.exit_code == 0);
  CHECK(std::filesystem::exists(out / "metrics/eval.json"));
}

TEST_CASE("verbose training prints progress lines") {
  const auto out = std::filesystem::temp_directory_path() / "gdistill-cli" / "train-run";
  const auto cfg = write_config("train.cfg",
                                "model.hidden = 8\nmodel.layers = 1\nteacher.iterations = 10\nteacher.log_every = 5\n"
                                "teacher.batch = 16\n");
  const Result r = run("train-teacher -v --config '" + cfg.string() + "' --out '" + out.string() + "'");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("teacher round=0 N=0 it=5") != std::string::npos);
  CHECK(std::filesystem::exists(out / "checkpoints/teacher.ckpt"));
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: test_cli <path to gdistill> [doctest options]\n");
    return 2;
  }
  binary = argv[1];
  doctest::Context context;
  context.applyCommandLine(argc - 1, argv + 1);
  return context.run();
}
