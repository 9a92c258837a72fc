#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>

#include "esiii/checkpoint.hpp"
#include "esiii/grammar.hpp"
#include "esiii/model.hpp"
#include "esiii/rng.hpp"

namespace esiii::fixtures {

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(ESIII_SOURCE_DIR) / rel;
}

inline std::filesystem::path reference_checkpoint(int seed = 1) {
  return source_path("data/reference/model_seed" + std::to_string(seed) + ".ckpt");
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("esiii_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Small model over an 8x8 image (four 4x4 patches) and the full grammar
// vocabulary, so the default corpus binds.
inline ModelBundle small_model(std::uint64_t seed, int resolution = 8, int patch_size = 4) {
  ModelConfig c;
  c.input_resolution = resolution;
  c.patch_size = patch_size;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.n_layers = 2;
  c.max_positions = std::max(64, c.num_patches() + 96);
  return ModelBundle::init(c, grammar::build_tokenizer(), seed);
}

inline FloatImage random_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  FloatImage img(w, h);
  for (auto& v : img.data) v = rng.uniform();
  return img;
}

inline RasterImage random_raster(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  RasterImage img(w, h);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace esiii::fixtures
