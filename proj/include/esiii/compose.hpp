#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "esiii/corpus.hpp"
#include "esiii/image.hpp"
#include "esiii/model.hpp"
#include "esiii/shield.hpp"

namespace esiii {

// Bilinear, corners aligned. A single output sample along an axis reads the
// center of the source axis. Raster output is rounded half-up.
RasterImage resample(const RasterImage& img, int new_width, int new_height);
FloatImage resample(const FloatImage& img, int new_width, int new_height);

// Saturating 8-bit addition of two equally sized rasters.
RasterImage fuse(const RasterImage& input, const RasterImage& overlay);

// Quantizes the shield, resamples it to the input size and fuses it.
RasterImage fuse(const RasterImage& input, const ShieldArtifact& shield);

struct ComposedPrompt {
  std::vector<std::string> prepended;
  std::string user_text;
  std::string rendered;
};

inline constexpr int kDefaultPrependCount = 2;

// Samples k distinct instructions without replacement and renders them,
// space separated in sampled order, in front of the user text.
ComposedPrompt compose_prompt(const InstructionCorpus& corpus, const std::string& user_text, int k,
                              std::uint64_t seed);

struct InferenceResult {
  std::string response;
  double total_seconds = 0.0;
  double defense_seconds = 0.0;  // resample + fuse + compose only
};

struct DefenseOptions {
  const ShieldArtifact* shield = nullptr;     // null: no image defense
  const InstructionCorpus* corpus = nullptr;  // null: no text defense
  int k = kDefaultPrependCount;
  std::uint64_t seed = 0;
  int max_len = 24;
};

// One query through the (optionally) defended path. With both shield and
// corpus set this is the full pipeline y* = M([W.E(I), T]).
InferenceResult run_query(const ModelBundle& model, const RasterImage& input, const std::string& text,
                          const DefenseOptions& options);

InferenceResult defended_infer(const ModelBundle& model, const RasterImage& input,
                               const std::string& text, const ShieldArtifact& shield,
                               const InstructionCorpus& corpus, int k, std::uint64_t seed,
                               int max_len);

// Undefended inference; the model sees the input resampled to its resolution.
InferenceResult plain_infer(const ModelBundle& model, const RasterImage& input, const std::string& text,
                            int max_len);

}  // namespace esiii
