#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <functional>

#include "esiii/config.hpp"
#include "esiii/error.hpp"
#include "support.hpp"

using namespace esiii;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, EmptyGivesDefaults) {
  const RunConfig c = parse_config(std::nullopt);
  EXPECT_DOUBLE_EQ(c.pgd.epsilon, 0.125);
  EXPECT_DOUBLE_EQ(c.pgd.eta, 0.005);
  EXPECT_EQ(c.pgd.max_iters, 500);
  EXPECT_EQ(c.pgd.init_mode, InitMode::black);
  EXPECT_FALSE(c.pgd.use_sign_step);
  EXPECT_EQ(c.eval.k, 2);
  EXPECT_EQ(c.eval.settings.size(), 4u);
  EXPECT_EQ(c.bench.harmful, 50u);
  EXPECT_EQ(c.eval.sweep_k.size(), 11u);
  EXPECT_EQ(c.attack.steps, 200);
}

TEST(Config, FileThenOverridesInOrder) {
  const auto dir = fixtures::scratch_dir("config_file");
  std::ofstream(dir / "run.cfg") << "# comment\npgd.epsilon = 0.05\neval.k=3\n\n";
  const RunConfig from_file = parse_config(dir / "run.cfg");
  EXPECT_DOUBLE_EQ(from_file.pgd.epsilon, 0.05);
  EXPECT_EQ(from_file.eval.k, 3);
  const RunConfig c = parse_config(dir / "run.cfg", {{"eval.k", "5"}, {"eval.k", "1"}});
  EXPECT_EQ(c.eval.k, 1);
  EXPECT_DOUBLE_EQ(c.pgd.epsilon, 0.05);
}

TEST(Config, EpsilonOutOfRangeNamesKey) {
  const auto msg = error_of([] { parse_config_text("", {{"pgd.epsilon", "2.0"}}); });
  EXPECT_NE(msg.find("pgd.epsilon"), std::string::npos);
  EXPECT_THROW(parse_config_text("pgd.epsilon=0"), ConfigError);
}

TEST(Config, UnknownKeyNamesKey) {
  const auto msg = error_of([] { parse_config_text("pgd.epsilom=0.1"); });
  EXPECT_NE(msg.find("pgd.epsilom"), std::string::npos);
}

TEST(Config, MalformedValuesThrow) {
  EXPECT_THROW(parse_config_text("eval.k=two"), ConfigError);
  EXPECT_THROW(parse_config_text("eval.k=-1"), ConfigError);
  EXPECT_THROW(parse_config_text("pgd.use_sign_step=maybe"), ConfigError);
  EXPECT_THROW(parse_config_text("pgd.init_mode=white"), ConfigError);
  EXPECT_THROW(parse_config_text("eval.settings=raw_input,bogus"), ConfigError);
  EXPECT_THROW(parse_config_text("no equals sign"), ConfigError);
  EXPECT_THROW(parse_config(std::filesystem::path("/nonexistent/run.cfg")), IoError);
}

TEST(Config, ListsAndEnums) {
  const RunConfig c = parse_config_text(
      "eval.settings=raw_input, def_text\neval.sweep_k=0,4\npgd.init_mode=mid_gray\npgd.use_sign_step=true\n"
      "eval.transfer_checkpoints=a.ckpt,b.ckpt");
  EXPECT_EQ(c.eval.settings, (std::vector<Setting>{Setting::raw_input, Setting::def_text}));
  EXPECT_EQ(c.eval.sweep_k, (std::vector<int>{0, 4}));
  EXPECT_EQ(c.pgd.init_mode, InitMode::mid_gray);
  EXPECT_TRUE(c.pgd.use_sign_step);
  EXPECT_EQ(c.eval.transfer_checkpoints.size(), 2u);
}

TEST(Config, RenderRoundTrips) {
  RunConfig c = parse_config_text("pgd.epsilon=0.3\neval.seed=9\nattack.target_string=sure");
  const std::string text = render_config(c);
  EXPECT_NE(text.find("pgd.epsilon=0.29999999999999999\n"), std::string::npos);
  const RunConfig back = parse_config_text(text);
  EXPECT_EQ(render_config(back), text);
  EXPECT_EQ(config_keys().size(), std::size_t(std::count(text.begin(), text.end(), '\n')));
}

TEST(Config, EvalOptionsMirrorEvalSection) {
  const RunConfig c = parse_config_text("eval.k=4\neval.seed=3\neval.max_len=10");
  const EvalOptions o = c.eval_options();
  EXPECT_EQ(o.k, 4);
  EXPECT_EQ(o.seed, 3u);
  EXPECT_EQ(o.max_len, 10);
  EXPECT_EQ(o.judge, "rule");
}
