#include <gtest/gtest.h>

#include <fstream>
#include <optional>
#include <set>

#include "esiii/benchmark.hpp"
#include "esiii/error.hpp"
#include "esiii/grammar.hpp"
#include "support.hpp"

using namespace esiii;

namespace {

// Index of the harmful template whose query ends the prompt.
std::optional<std::size_t> harmful_suffix(const std::string& prompt) {
  const auto& ts = grammar::harmful_templates();
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (prompt.ends_with(ts[i].query)) return i;
  return std::nullopt;
}

}  // namespace

TEST(Benchmark, CountsAndOrder) {
  const auto b = gen_toy_benchmark(30, 20, 7);
  ASSERT_EQ(b.cases.size(), 50u);
  EXPECT_TRUE(b.training.empty());
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(b.cases[i].label, Label::harmful);
  for (std::size_t i = 30; i < 50; ++i) EXPECT_EQ(b.cases[i].label, Label::benign);
  EXPECT_EQ(b.cases.front().id, "h0001");
  EXPECT_EQ(b.cases.back().id, "b0020");
}

TEST(Benchmark, HarmfulCasesCarryOneMatchingTrigger) {
  const auto b = gen_toy_benchmark(60, 60, 3);
  for (const auto& q : b.cases) {
    EXPECT_EQ(q.image.width, kToyResolution);
    const auto hits = find_triggers(q.image);
    if (q.label == Label::harmful) {
      ASSERT_EQ(hits.size(), 1u) << q.id;
      EXPECT_EQ(hits[0].category, q.category);
      EXPECT_EQ(q.expected_behavior, ExpectedBehavior::refuse_or_disclaim);
      const auto t = grammar::find_harmful(q.text);
      ASSERT_TRUE(t.has_value());
      EXPECT_TRUE(is_eval_combo(Label::harmful, *t, q.category));
    } else {
      EXPECT_TRUE(hits.empty()) << q.id;
      EXPECT_EQ(q.expected_behavior, ExpectedBehavior::answer);
      EXPECT_TRUE(grammar::find_benign(q.text).has_value());
    }
  }
}

TEST(Benchmark, CoversAllCategories) {
  const auto b = gen_toy_benchmark(200, 1, 11);
  std::set<int> cats;
  for (const auto& q : b.cases)
    if (q.label == Label::harmful) cats.insert(q.category);
  EXPECT_EQ(cats.size(), std::size_t(grammar::kNumCategories));
}

TEST(Benchmark, DeterministicPerSeed) {
  const auto a = gen_toy_benchmark(10, 10, 5, 50);
  const auto b = gen_toy_benchmark(10, 10, 5, 50);
  const auto c = gen_toy_benchmark(10, 10, 6, 50);
  for (std::size_t i = 0; i < a.cases.size(); ++i) {
    EXPECT_EQ(a.cases[i].image, b.cases[i].image);
    EXPECT_EQ(a.cases[i].text, b.cases[i].text);
  }
  for (std::size_t i = 0; i < a.training.size(); ++i) {
    EXPECT_EQ(a.training[i].image, b.training[i].image);
    EXPECT_EQ(a.training[i].prompt, b.training[i].prompt);
  }
  bool differs = false;
  for (std::size_t i = 0; i < a.cases.size(); ++i) differs |= !(a.cases[i].image == c.cases[i].image);
  EXPECT_TRUE(differs);
}

TEST(Benchmark, TrainingSplitAvoidsEvaluationCombinations) {
  const auto training = gen_training_split(2000, 9);
  ASSERT_EQ(training.size(), 2000u);
  std::size_t triggered = 0;
  for (const auto& t : training) {
    const auto hits = find_triggers(t.image);
    ASSERT_LE(hits.size(), 1u);
    if (hits.empty()) continue;
    const auto tmpl = harmful_suffix(t.prompt);
    ASSERT_TRUE(tmpl.has_value()) << t.prompt;
    EXPECT_FALSE(is_eval_combo(Label::harmful, *tmpl, hits[0].category));
    ++triggered;
  }
  EXPECT_GT(triggered, 300u);
}

TEST(Benchmark, TrainingLabelsFollowTheBehaviorRule) {
  for (const auto& t : gen_training_split(1000, 4)) {
    switch (t.behavior) {
      case Behavior::benign_answer:
        EXPECT_FALSE(t.answer.starts_with("sorry"));
        break;
      case Behavior::harmful_comply:
        EXPECT_EQ(t.n_instructions, 0);
        EXPECT_TRUE(t.answer.starts_with("here is how"));
        break;
      case Behavior::refuse:
        EXPECT_EQ(t.answer, grammar::kRefusal);
        break;
    }
    if (t.n_instructions > 0) EXPECT_NE(t.behavior, Behavior::harmful_comply);
  }
}

TEST(Benchmark, HeldOutHasThreeBalancedClasses) {
  const auto h = gen_held_out(20, 1);
  ASSERT_EQ(h.size(), 60u);
  for (std::size_t i = 0; i < 60; ++i) {
    const Behavior want = i < 20 ? Behavior::benign_answer : i < 40 ? Behavior::harmful_comply : Behavior::refuse;
    EXPECT_EQ(h[i].behavior, want);
  }
  for (std::size_t i = 20; i < 40; ++i) EXPECT_EQ(find_triggers(h[i].image).size(), 1u);
}

TEST(Benchmark, TextAttackImagesAreAllZero) {
  const auto set = text_attack_set(15, 2);
  ASSERT_EQ(set.size(), 15u);
  for (const auto& q : set) {
    EXPECT_EQ(q.label, Label::harmful);
    EXPECT_EQ(q.image, RasterImage(kToyResolution, kToyResolution, 0));
    EXPECT_TRUE(find_triggers(q.image).empty());
    EXPECT_TRUE(grammar::find_harmful(q.text).has_value());
  }
  EXPECT_EQ(set[0].id, "t0001");
}

TEST(Benchmark, InvalidSizesThrow) {
  EXPECT_THROW(gen_toy_benchmark(0, 5, 1), ConfigError);
  EXPECT_THROW(gen_toy_benchmark(5, 0, 1), ConfigError);
  EXPECT_THROW(text_attack_set(0, 1), ConfigError);
}

TEST(Benchmark, SaveLoadRoundTrip) {
  const auto dir = fixtures::scratch_dir("bench_roundtrip");
  const auto b = gen_toy_benchmark(4, 3, 8);
  save_benchmark(b.cases, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.tsv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "h0001.ppm"));
  const auto back = load_benchmark(dir);
  ASSERT_EQ(back.size(), b.cases.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, b.cases[i].id);
    EXPECT_EQ(back[i].image, b.cases[i].image);
    EXPECT_EQ(back[i].text, b.cases[i].text);
    EXPECT_EQ(back[i].label, b.cases[i].label);
    EXPECT_EQ(back[i].category, b.cases[i].category);
    EXPECT_EQ(back[i].expected_behavior, b.cases[i].expected_behavior);
  }
}

TEST(Benchmark, LoadRejectsBadManifest) {
  const auto dir = fixtures::scratch_dir("bench_bad");
  EXPECT_THROW(load_benchmark(dir), IoError);
  std::ofstream(dir / "manifest.tsv") << "h0001\tevil\tcat01\tanswer\thi\n";
  EXPECT_THROW(load_benchmark(dir), FormatError);
  std::ofstream(dir / "manifest.tsv") << "h0001\tharmful\tcat99\tanswer\thi\n";
  EXPECT_THROW(load_benchmark(dir), FormatError);
}
