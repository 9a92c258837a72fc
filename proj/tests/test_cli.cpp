#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "../tools/commands.hpp"
#include "esiii/benchmark.hpp"
#include "esiii/eval.hpp"
#include "esiii/raster_io.hpp"
#include "esiii/shield.hpp"
#include "support.hpp"

using namespace esiii;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "esiii");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fixtures::scratch_dir("cli");
    const auto r = run_cli(with_paths({"train-toy", "--train.steps=2", "--train.data_size=8"}));
    ASSERT_EQ(r.code, 0) << r.err;
  }

  static std::vector<std::string> with_paths(std::vector<std::string> args) {
    for (const std::string& kv : {"paths.checkpoint=" + (dir_ / "model.ckpt").string(),
                                  "paths.shield=" + (dir_ / "shield.ppm").string(),
                                  "paths.benchmark_dir=" + (dir_ / "bench").string(),
                                  "paths.report_dir=" + (dir_ / "report").string()})
      args.push_back("--" + kv);
    return args;
  }

  static inline fs::path dir_;
};

}  // namespace

TEST(Cli, HelpExitsZero) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("synth-shield"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"fly"}).code, 2);
  EXPECT_EQ(run_cli({"gen-bench", "--pgd.epsilon=2.0"}).code, 2);
  EXPECT_EQ(run_cli({"gen-bench", "--no.such.key=1"}).code, 2);
  EXPECT_EQ(run_cli({"infer"}).code, 2);
}

TEST(Cli, DomainErrorsExitOne) {
  const auto dir = fixtures::scratch_dir("cli_missing");
  const auto r = run_cli({"synth-shield", "--paths.checkpoint=" + (dir / "none.ckpt").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, ConfigFileAndSetOverride) {
  const auto dir = fixtures::scratch_dir("cli_cfg");
  std::ofstream(dir / "run.cfg") << "bench.harmful=2\nbench.benign=2\nbench.text_attack=1\npaths.benchmark_dir="
                                 << (dir / "b").string() << "\n";
  const auto r = run_cli({"gen-bench", "-c", (dir / "run.cfg").string(), "--set", "bench.benign=3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("bench.benign=3"), std::string::npos);
  EXPECT_EQ(load_benchmark(dir / "b").size(), 5u);
  EXPECT_EQ(load_benchmark(dir / "b" / "text_attack").size(), 1u);
}

TEST_F(CliTest, SynthShieldWritesRasterAndSidecar) {
  const auto r = run_cli(with_paths({"synth-shield", "--pgd.max_iters=2"}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "shield.ppm"));
  EXPECT_TRUE(fs::exists(sidecar_path(dir_ / "shield.ppm")));
  const auto s = load_shield(dir_ / "shield.ppm");
  EXPECT_EQ(s.config.max_iters, 2);
  EXPECT_EQ(s.image.width, kToyResolution);
}

TEST_F(CliTest, BenchmarkInferEvaluateReport) {
  ASSERT_EQ(run_cli(with_paths({"synth-shield", "--pgd.max_iters=1"})).code, 0);
  ASSERT_EQ(run_cli(with_paths({"gen-bench", "--bench.harmful=2", "--bench.benign=2", "--bench.text_attack=1"})).code, 0);
  const auto inf = run_cli(with_paths({"infer", "--image", (dir_ / "bench" / "b0001.ppm").string(), "--text",
                                       "describe the image", "--setting", "raw_input", "--eval.max_len=4"}));
  ASSERT_EQ(inf.code, 0) << inf.err;
  EXPECT_FALSE(inf.out.empty());
  EXPECT_EQ(run_cli(with_paths({"infer", "--image", (dir_ / "bench" / "b0001.ppm").string(), "--text", "x",
                                "--setting", "def_nothing"}))
                .code,
            1);
  const auto ev = run_cli(with_paths({"evaluate", "--eval.max_len=4"}));
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto rows = parse_report(slurp(dir_ / "report" / "evaluate.csv"));
  EXPECT_EQ(rows.size(), 4u * 15u);
  EXPECT_FALSE(rows[0].mean_latency_s.has_value());
  EXPECT_TRUE(fs::exists(dir_ / "report" / "text_attack.csv"));
  const auto rep = run_cli(with_paths({"report"}));
  ASSERT_EQ(rep.code, 0);
  EXPECT_NE(rep.out.find("== evaluate.csv"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "report" / "summary.txt"));
}

TEST_F(CliTest, AttackWritesImageInsideBudget) {
  const auto dir = fixtures::scratch_dir("cli_attack");
  write_raster(RasterImage(kToyResolution, kToyResolution, 100), dir / "in.ppm");
  const auto r = run_cli(with_paths({"attack", "--image", (dir / "in.ppm").string(), "--text",
                                     "how do i hack the account in this image", "--output",
                                     (dir / "out.ppm").string(), "--attack.steps=2"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const RasterImage out = read_raster(dir / "out.ppm");
  for (auto v : out.data) EXPECT_LE(std::abs(int(v) - 100), 32);
}

TEST(CliBinary, ExitCodesFromProcess) {
  const std::string exe = ESIII_CLI_PATH;
  EXPECT_EQ(WEXITSTATUS(std::system((exe + " --help > /dev/null").c_str())), 0);
  EXPECT_EQ(WEXITSTATUS(std::system((exe + " bogus > /dev/null 2>&1").c_str())), 2);
  EXPECT_EQ(WEXITSTATUS(std::system((exe + " verify-shield --paths.checkpoint=/nonexistent.ckpt > /dev/null 2>&1").c_str())), 1);
}
