#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "esiii/attack.hpp"
#include "esiii/eval.hpp"
#include "esiii/shield.hpp"
#include "esiii/train.hpp"

namespace esiii {

struct RunConfig {
  struct Paths {
    std::string checkpoint = "out/model.ckpt";
    std::string shield = "out/shield.ppm";
    std::string benchmark_dir = "out/bench";
    std::string report_dir = "out/report";
    std::string corpus;  // empty: built-in default corpus
    std::string vocab;   // empty: vocabulary built from the grammar
  } paths;

  struct Bench {
    std::size_t harmful = 50;
    std::size_t benign = 50;
    std::size_t text_attack = 20;
    std::uint64_t seed = 7;
  } bench;

  struct Train {
    TrainConfig config;
    std::size_t data_size = kDefaultTrainingSize;
    std::uint64_t seed = 1;
  } train;

  PGDConfig pgd;

  struct Eval {
    std::vector<Setting> settings = all_settings();
    int k = kDefaultPrependCount;
    std::uint64_t seed = 0;
    int max_len = 24;
    std::string judge = "rule";
    std::vector<int> sweep_k = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<std::string> transfer_checkpoints;
    std::vector<std::string> transfer_shields;
  } eval;

  AttackConfig attack;

  EvalOptions eval_options() const;
};

using Override = std::pair<std::string, std::string>;

// Precedence: defaults, then the file (if any), then overrides in order.
// Unknown keys, malformed values and invariant violations throw ConfigError
// naming the key.
RunConfig parse_config(const std::optional<std::filesystem::path>& path,
                       const std::vector<Override>& overrides = {});

RunConfig parse_config_text(const std::string& text, const std::vector<Override>& overrides = {});

// Applies one key=value assignment.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Resolved configuration as sorted "key=value" lines.
std::string render_config(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace esiii
