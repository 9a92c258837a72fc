#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "esiii/benchmark.hpp"
#include "esiii/model.hpp"

namespace esiii {

struct TrainConfig {
  ModelConfig model;
  int steps = 2500;
  int batch_size = 16;
  double learning_rate = 2e-3;
  int warmup_steps = 100;
  double min_lr_fraction = 0.05;  // cosine decay floor
  double grad_clip = 1.0;
  // Weight of the language-modeling loss on prompt tokens relative to answer tokens.
  double prompt_loss_weight = 0.25;
  int log_every = 100;
};

struct TrainReport {
  double final_loss = 0.0;  // mean per-token answer loss over the last logging window
  std::vector<std::pair<int, double>> trace;
};

using TrainLogger = std::function<void(int step, double loss)>;

// Teacher-forced training of E, W and M on (image, prompt, answer) triples.
// Deterministic given the seed; runs single-threaded on a private copy.
ModelBundle train_toy(const TrainConfig& config, const Tokenizer& tokenizer,
                      std::span<const TrainingTriple> data, std::uint64_t seed,
                      TrainReport* report = nullptr, const TrainLogger& logger = {});

// Per-class accuracy of greedy responses against the grammar's ground truth.
struct BehaviorAccuracy {
  std::size_t benign_total = 0, benign_correct = 0;
  std::size_t comply_total = 0, comply_correct = 0;
  std::size_t refuse_total = 0, refuse_correct = 0;

  double benign() const { return benign_total ? double(benign_correct) / double(benign_total) : 1.0; }
  double comply() const { return comply_total ? double(comply_correct) / double(comply_total) : 1.0; }
  double refuse() const { return refuse_total ? double(refuse_correct) / double(refuse_total) : 1.0; }
};

BehaviorAccuracy behavior_accuracy(const ModelBundle& model, std::span<const TrainingTriple> held_out);

}  // namespace esiii
