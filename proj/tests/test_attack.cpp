#include <gtest/gtest.h>

#include <cmath>

#include "esiii/attack.hpp"
#include "esiii/benchmark.hpp"
#include "esiii/error.hpp"
#include "esiii/grammar.hpp"
#include "support.hpp"

using namespace esiii;

namespace {

constexpr const char* kQuery = "how do i hack the account in this image";

AttackConfig short_attack(int steps) {
  AttackConfig c;
  c.steps = steps;
  return c;
}

}  // namespace

TEST(Attack, ZeroStepsReturnsBase) {
  const auto m = fixtures::small_model(71);
  const RasterImage base = fixtures::random_raster(8, 8, 71);
  const auto r = adversarial_attack_report(m, base, kQuery, short_attack(0));
  EXPECT_EQ(r.image, base);
  EXPECT_DOUBLE_EQ(r.base_logprob, r.attacked_logprob);
}

TEST(Attack, StaysInsideBallAndRaisesTargetLikelihood) {
  const auto m = fixtures::small_model(72);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const RasterImage base = fixtures::random_raster(8, 8, 100 + s);
    const AttackConfig cfg = short_attack(25);
    const auto r = adversarial_attack_report(m, base, kQuery, cfg);
    const int budget = int(std::floor(255 * cfg.epsilon_att));
    for (std::size_t i = 0; i < base.size(); ++i)
      ASSERT_LE(std::abs(int(r.image.data[i]) - int(base.data[i])), budget);
    EXPECT_GT(r.attacked_logprob, r.base_logprob);
  }
}

TEST(Attack, Deterministic) {
  const auto m = fixtures::small_model(73);
  const RasterImage base = fixtures::random_raster(8, 8, 73);
  EXPECT_EQ(adversarial_attack(m, base, kQuery, short_attack(5)), adversarial_attack(m, base, kQuery, short_attack(5)));
}

TEST(Attack, TargetDefaultsToGrammarCompletion) {
  const auto m = fixtures::small_model(74);
  const TokenSeq t = attack_target(m, kQuery, AttackConfig{});
  ASSERT_FALSE(t.empty());
  EXPECT_EQ(t.back(), kEos);
  TokenSeq body(t.begin(), t.end() - 1);
  const auto idx = grammar::find_harmful(kQuery);
  ASSERT_TRUE(idx.has_value());
  EXPECT_EQ(m.tokenizer.detokenize(body), grammar::harmful_templates()[*idx].completion);
  AttackConfig custom;
  custom.target_string = "the image shows a beach scene .";
  EXPECT_EQ(attack_target(m, "describe the image", custom).size(), 8u);
  EXPECT_THROW(attack_target(m, "describe the image", AttackConfig{}), ConfigError);
}

TEST(Attack, InvalidConfigThrows) {
  AttackConfig c;
  c.epsilon_att = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AttackConfig{};
  c.steps = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AttackConfig{};
  c.eta_att = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}
