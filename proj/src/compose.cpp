#include "esiii/compose.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "esiii/error.hpp"
#include "esiii/rng.hpp"

namespace esiii {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Source coordinate of output sample i on an axis of n_out samples.
double source_coord(int i, int n_in, int n_out) {
  if (n_out == 1) return (n_in - 1) / 2.0;
  return double(i) * double(n_in - 1) / double(n_out - 1);
}

template <typename Img, typename Convert>
Img resample_impl(const Img& img, int new_width, int new_height, Convert convert) {
  if (new_width < 1 || new_height < 1)
    throw DimensionError("resample target must be at least 1x1, got " + std::to_string(new_width) + "x" +
                         std::to_string(new_height));
  if (img.width < 1 || img.height < 1) throw DimensionError("cannot resample an empty image");
  if (new_width == img.width && new_height == img.height) return img;
  Img out(new_width, new_height);
  for (int y = 0; y < new_height; ++y) {
    const double sy = source_coord(y, img.height, new_height);
    const int y0 = std::min(int(std::floor(sy)), img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < new_width; ++x) {
      const double sx = source_coord(x, img.width, new_width);
      const int x0 = std::min(int(std::floor(sx)), img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - x0;
      for (int c = 0; c < kChannels; ++c) {
        const double top = (1 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
        const double bottom = (1 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
        out.at(x, y, c) = convert((1 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

}  // namespace

RasterImage resample(const RasterImage& img, int new_width, int new_height) {
  return resample_impl(img, new_width, new_height, [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
  });
}

FloatImage resample(const FloatImage& img, int new_width, int new_height) {
  return resample_impl(img, new_width, new_height, [](double v) { return v; });
}

RasterImage fuse(const RasterImage& input, const RasterImage& overlay) {
  if (input.width != overlay.width || input.height != overlay.height)
    throw DimensionError("fuse: input and overlay sizes differ");
  RasterImage out(input.width, input.height);
  for (std::size_t i = 0; i < input.size(); ++i) {
    const int sum = int(input.data[i]) + int(overlay.data[i]);
    out.data[i] = static_cast<std::uint8_t>(std::clamp(sum, 0, kLevels - 1));
  }
  return out;
}

RasterImage fuse(const RasterImage& input, const ShieldArtifact& shield) {
  return fuse(input, quantize(resample(shield.image, input.width, input.height)));
}

ComposedPrompt compose_prompt(const InstructionCorpus& corpus, const std::string& user_text, int k,
                              std::uint64_t seed) {
  const int n = int(corpus.size());
  if (k < 0 || k > n)
    throw ConfigError("compose_prompt: k = " + std::to_string(k) + " outside [0, " + std::to_string(n) + "]");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first k slots are a uniform sample in random order.
  for (int i = 0; i < k; ++i) {
    const auto j = std::size_t(i) + std::size_t(rng.below(std::uint64_t(n - i)));
    std::swap(order[std::size_t(i)], order[j]);
  }
  ComposedPrompt p;
  p.user_text = user_text;
  for (int i = 0; i < k; ++i) {
    p.prepended.push_back(corpus.instructions[order[std::size_t(i)]]);
    p.rendered += p.prepended.back();
    p.rendered.push_back(' ');
  }
  p.rendered += user_text;
  return p;
}

InferenceResult run_query(const ModelBundle& model, const RasterImage& input, const std::string& text,
                          const DefenseOptions& options) {
  InferenceResult r;
  const auto t0 = Clock::now();
  RasterImage image = options.shield ? fuse(input, *options.shield) : input;
  std::string prompt = text;
  if (options.corpus) prompt = compose_prompt(*options.corpus, text, options.k, options.seed).rendered;
  r.defense_seconds = (options.shield || options.corpus) ? seconds_since(t0) : 0.0;

  const int res = model.config.input_resolution;
  FloatImage x = normalize(image);
  if (x.width != res || x.height != res) x = resample(x, res, res);
  const TokenSeq ids = model.tokenizer.tokenize(prompt);
  const TokenSeq out = generate(model, x, ids, options.max_len);
  r.response = model.tokenizer.detokenize(out);
  r.total_seconds = seconds_since(t0);
  return r;
}

InferenceResult defended_infer(const ModelBundle& model, const RasterImage& input,
                               const std::string& text, const ShieldArtifact& shield,
                               const InstructionCorpus& corpus, int k, std::uint64_t seed,
                               int max_len) {
  DefenseOptions o;
  o.shield = &shield;
  o.corpus = &corpus;
  o.k = k;
  o.seed = seed;
  o.max_len = max_len;
  return run_query(model, input, text, o);
}

InferenceResult plain_infer(const ModelBundle& model, const RasterImage& input, const std::string& text,
                            int max_len) {
  DefenseOptions o;
  o.max_len = max_len;
  return run_query(model, input, text, o);
}

}  // namespace esiii
