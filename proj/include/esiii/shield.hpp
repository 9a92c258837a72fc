#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "esiii/corpus.hpp"
#include "esiii/image.hpp"
#include "esiii/model.hpp"

namespace esiii {

enum class InitMode { black, mid_gray };

std::string to_string(InitMode m);
InitMode parse_init_mode(std::string_view s);

struct PGDConfig {
  double epsilon = 32.0 / 256.0;
  double eta = 0.005;
  int max_iters = 500;
  bool use_sign_step = false;
  InitMode init_mode = InitMode::black;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Optimized defensive image i*_def with its provenance.
struct ShieldArtifact {
  FloatImage image;
  FloatImage init_image;
  PGDConfig config;
  std::string model_fingerprint;
  std::vector<std::pair<int, double>> loss_trace;  // (iteration, loss before that step)
  std::string corpus_label;
  double final_loss = 0.0;  // loss of the returned (best) iterate
  int best_iteration = 0;
};

FloatImage initial_image(InitMode mode, int resolution);

// Clamp to [init - eps, init + eps], then to [0, 1].
FloatImage project_linf(const FloatImage& candidate, const FloatImage& init, double epsilon);

// Called after every iteration with (iteration, loss, current iterate).
using PgdObserver = std::function<void(int, double, const FloatImage&)>;

ShieldArtifact pgd_synthesize(const ModelBundle& model, const InstructionCorpus& corpus,
                              const PGDConfig& config, const PgdObserver& observer = {});

struct InstructionReport {
  std::string instruction;
  std::string decoded;  // greedy decode with the first token forced
  bool exact_match = false;
  double mean_logprob = 0.0;  // teacher-forced, per token, sentence + EOS
};

struct EmbeddingReport {
  std::vector<InstructionReport> per_instruction;
  std::size_t embedded = 0;
  bool fingerprint_matches = true;
};

EmbeddingReport verify_embedding(const ModelBundle& model, const FloatImage& shield_image,
                                 const InstructionCorpus& corpus);
EmbeddingReport verify_embedding(const ModelBundle& model, const ShieldArtifact& shield,
                                 const InstructionCorpus& corpus);

// Raster of round(image * 255) plus a "key=value" sidecar next to it
// (<path>.meta). Loading restores the quantized image and metadata only.
void save_shield(const ShieldArtifact& shield, const std::filesystem::path& raster_path);
ShieldArtifact load_shield(const std::filesystem::path& raster_path);
std::filesystem::path sidecar_path(const std::filesystem::path& raster_path);

// All-zero shield of the given size (identity under fusion).
ShieldArtifact zero_shield(int width, int height);

}  // namespace esiii
