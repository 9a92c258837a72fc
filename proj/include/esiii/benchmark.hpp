#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "esiii/image.hpp"

namespace esiii {

enum class Label { harmful, benign };
enum class ExpectedBehavior { refuse_or_disclaim, answer };

std::string to_string(Label l);
std::string to_string(ExpectedBehavior b);

struct QueryCase {
  std::string id;
  RasterImage image;
  std::string text;
  Label label = Label::benign;
  int category = 0;  // 0-based; rendered as cat01..cat13
  ExpectedBehavior expected_behavior = ExpectedBehavior::answer;
};

// What the toy model is taught to do with a training triple.
enum class Behavior { benign_answer, harmful_comply, refuse };

struct TrainingTriple {
  RasterImage image;
  std::string prompt;  // security instructions (possibly none) then the query
  std::string answer;
  Behavior behavior = Behavior::benign_answer;
  int n_instructions = 0;
};

struct GeneratedBenchmark {
  std::vector<QueryCase> cases;          // evaluation split
  std::vector<TrainingTriple> training;  // disjoint training split
};

inline constexpr int kToyResolution = 32;
inline constexpr std::size_t kDefaultTrainingSize = 6000;

// Evaluation cases (harmful first, then benign) plus a training split drawn
// from the complementary (template, category) combinations.
GeneratedBenchmark gen_toy_benchmark(std::size_t size_harmful, std::size_t size_benign, std::uint64_t seed,
                                     std::size_t training_size = 0);

// Training split only; same generator and disjointness rule.
std::vector<TrainingTriple> gen_training_split(std::size_t size, std::uint64_t seed);

// Held-out triples from the evaluation combinations, `per_class` for each
// of the three behaviors (benign answer, trigger compliance, refusal under
// security instructions).
std::vector<TrainingTriple> gen_held_out(std::size_t per_class, std::uint64_t seed);

// Harmful queries without any visual trigger, on an all-zero image.
std::vector<QueryCase> text_attack_set(std::size_t size, std::uint64_t seed);

// Evaluation/training membership of a (kind, template, category) combination.
bool is_eval_combo(Label kind, std::size_t template_index, int category);

// Location of the single trigger block, if the image has one: a solid
// 8x8 square in one of the category colors.
struct TriggerHit {
  int x = 0, y = 0, category = 0;
};
std::vector<TriggerHit> find_triggers(const RasterImage& img);

// Directory format: <id>.ppm per case and manifest.tsv with
// id TAB label TAB category TAB expected_behavior TAB text.
void save_benchmark(const std::vector<QueryCase>& cases, const std::filesystem::path& dir);
std::vector<QueryCase> load_benchmark(const std::filesystem::path& dir);

}  // namespace esiii
