#include "esiii/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "esiii/error.hpp"
#include "esiii/rng.hpp"
#include "transformer.hpp"

namespace esiii {

void ModelConfig::validate() const {
  if (patch_size <= 0 || input_resolution <= 0 || input_resolution % patch_size != 0)
    throw ConfigError("input_resolution " + std::to_string(input_resolution) +
                      " must be a positive multiple of patch_size " + std::to_string(patch_size));
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
    throw ConfigError("d_model must be a positive multiple of n_heads");
  if (d_ff <= 0 || n_layers < 0) throw ConfigError("d_ff and n_layers must be positive");
  if (max_positions <= num_patches() + 1)
    throw ConfigError("max_positions must exceed the number of image tokens plus BOS");
}

namespace {

Matrix<float> random_matrix(Rng& rng, int rows, int cols, double stddev) {
  Matrix<float> m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = float(rng.normal() * stddev);
  return m;
}

Matrix<float> constant_row(int cols, float v) { return Matrix<float>::Constant(1, cols, v); }

}  // namespace

ModelBundle ModelBundle::init(const ModelConfig& config, Tokenizer tokenizer, std::uint64_t seed) {
  config.validate();
  ModelBundle m;
  m.config = config;
  m.tokenizer = std::move(tokenizer);
  Rng rng(seed);
  const int d = config.d_model;
  const int v = static_cast<int>(m.tokenizer.size());
  auto& w = m.weights;
  w.enc_w = random_matrix(rng, config.patch_dim(), d, 1.0 / std::sqrt(double(config.patch_dim())));
  w.enc_b = constant_row(d, 0.0f);
  w.proj_w = random_matrix(rng, d, d, 1.0 / std::sqrt(double(d)));
  w.proj_b = constant_row(d, 0.0f);
  w.tok_emb = random_matrix(rng, v, d, 0.5);
  w.pos_emb = random_matrix(rng, config.max_positions, d, 0.1);
  for (int l = 0; l < config.n_layers; ++l) {
    BlockWeights<float> b;
    const double s = 1.0 / std::sqrt(double(d));
    b.ln1_g = constant_row(d, 1.0f);
    b.ln1_b = constant_row(d, 0.0f);
    b.wq = random_matrix(rng, d, d, s);
    b.bq = constant_row(d, 0.0f);
    b.wk = random_matrix(rng, d, d, s);
    b.bk = constant_row(d, 0.0f);
    b.wv = random_matrix(rng, d, d, s);
    b.bv = constant_row(d, 0.0f);
    b.wo = random_matrix(rng, d, d, s / std::sqrt(2.0 * config.n_layers));
    b.bo = constant_row(d, 0.0f);
    b.ln2_g = constant_row(d, 1.0f);
    b.ln2_b = constant_row(d, 0.0f);
    b.w1 = random_matrix(rng, d, config.d_ff, s);
    b.b1 = constant_row(config.d_ff, 0.0f);
    b.w2 = random_matrix(rng, config.d_ff, d,
                         1.0 / std::sqrt(double(config.d_ff)) / std::sqrt(2.0 * config.n_layers));
    b.b2 = constant_row(d, 0.0f);
    w.blocks.push_back(std::move(b));
  }
  w.lnf_g = constant_row(d, 1.0f);
  w.lnf_b = constant_row(d, 0.0f);
  w.head_w = random_matrix(rng, d, v, 1.0 / std::sqrt(double(d)));
  w.head_b = constant_row(v, 0.0f);
  return m;
}

std::size_t ModelBundle::parameter_count() const {
  std::size_t n = 0;
  visit_tensors(weights, [&](const std::string&, const Matrix<float>& t) { n += std::size_t(t.size()); });
  return n;
}

std::string ModelBundle::fingerprint() const {
  std::uint64_t h = fnv1a(version);
  const int shape[] = {config.input_resolution, config.patch_size, config.d_model, config.n_heads,
                       config.d_ff, config.n_layers, config.max_positions};
  h = fnv1a(shape, sizeof shape, h);
  for (const auto& word : tokenizer.words()) h = fnv1a(word + "\n", h);
  visit_tensors(weights, [&](const std::string& name, const Matrix<float>& t) {
    h = fnv1a(name, h);
    const std::int64_t dims[] = {t.rows(), t.cols()};
    h = fnv1a(dims, sizeof dims, h);
    h = fnv1a(t.data(), sizeof(float) * std::size_t(t.size()), h);
  });
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void ModelBundle::validate() const {
  config.validate();
  const Eigen::Index d = config.d_model;
  const Eigen::Index v = Eigen::Index(tokenizer.size());
  if (weights.blocks.size() != std::size_t(config.n_layers))
    throw ConfigError("weights have " + std::to_string(weights.blocks.size()) + " blocks, config says " +
                      std::to_string(config.n_layers));
  auto expect = [](const std::string& name, const Matrix<float>& t, Eigen::Index r, Eigen::Index c) {
    if (t.rows() != r || t.cols() != c)
      throw ConfigError("tensor " + name + " has shape " + std::to_string(t.rows()) + "x" +
                        std::to_string(t.cols()) + ", expected " + std::to_string(r) + "x" +
                        std::to_string(c));
  };
  expect("encoder.weight", weights.enc_w, config.patch_dim(), d);
  expect("encoder.bias", weights.enc_b, 1, d);
  expect("projector.weight", weights.proj_w, d, d);
  expect("projector.bias", weights.proj_b, 1, d);
  expect("decoder.token_embedding", weights.tok_emb, v, d);
  expect("decoder.position_embedding", weights.pos_emb, config.max_positions, d);
  for (const auto& b : weights.blocks) {
    expect("attn.query.weight", b.wq, d, d);
    expect("attn.key.weight", b.wk, d, d);
    expect("attn.value.weight", b.wv, d, d);
    expect("attn.out.weight", b.wo, d, d);
    expect("ffn.in.weight", b.w1, d, config.d_ff);
    expect("ffn.in.bias", b.b1, 1, config.d_ff);
    expect("ffn.out.weight", b.w2, config.d_ff, d);
  }
  expect("decoder.head.weight", weights.head_w, d, v);
  expect("decoder.head.bias", weights.head_b, 1, v);
  visit_tensors(weights, [](const std::string& name, const Matrix<float>& t) {
    if (!t.allFinite()) throw ConfigError("tensor " + name + " contains non-finite values");
  });
}

void check_tokens(const ModelBundle& model, std::span<const TokenId> ids) {
  const auto v = static_cast<TokenId>(model.vocab_size());
  for (TokenId id : ids)
    if (id < 0 || id >= v)
      throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(v));
}

void check_image(const ModelBundle& model, const FloatImage& img) {
  const int r = model.config.input_resolution;
  if (img.width != r || img.height != r ||
      img.data.size() != std::size_t(img.width) * std::size_t(img.height) * kChannels)
    throw ResolutionError(std::size_t(r), std::size_t(img.width), std::size_t(img.height));
}

std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -INFINITY;
  for (double l : logits) mx = std::max(mx, l);
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::min(0.0, logits[i] - lse);
  return out;
}

Matrix<float> encode_image(const ModelBundle& model, const FloatImage& img) {
  check_image(model, img);
  detail::Transformer<float> tf(model.config, model.weights);
  return tf.encode(detail::extract_patches<float>(model.config, img));
}

namespace {

template <typename T>
TokenLogProbs score(const ModelConfig& cfg, const Weights<T>& w, const FloatImage& img,
                    std::span<const TokenId> prompt, std::span<const TokenId> target) {
  TokenSeq ids;
  ids.reserve(1 + prompt.size() + target.size());
  ids.push_back(kBos);
  ids.insert(ids.end(), prompt.begin(), prompt.end());
  ids.insert(ids.end(), target.begin(), target.end() - 1);
  const std::size_t first = std::size_t(cfg.num_patches()) + prompt.size();
  std::vector<detail::LossTarget> targets;
  for (std::size_t t = 0; t < target.size(); ++t) targets.push_back({first + t, target[t], 1.0});
  detail::Transformer<T> tf(cfg, w);
  const auto fp = tf.forward(detail::extract_patches<T>(cfg, img), ids, targets);
  TokenLogProbs out;
  for (std::size_t t = 0; t < target.size(); ++t) {
    out.per_token.push_back({t, target[t], fp.target_logprob[t]});
    out.total += fp.target_logprob[t];
  }
  return out;
}

}  // namespace

TokenLogProbs forward_logprob(const ModelBundle& model, const FloatImage& img,
                              std::span<const TokenId> prompt, std::span<const TokenId> target,
                              Precision precision) {
  if (target.empty()) throw ConfigError("forward_logprob requires a non-empty target");
  check_image(model, img);
  check_tokens(model, prompt);
  check_tokens(model, target);
  if (precision == Precision::f64)
    return score(model.config, model.weights.cast<double>(), img, prompt, target);
  return score(model.config, model.weights, img, prompt, target);
}

TokenSeq generate(const ModelBundle& model, const FloatImage& img, std::span<const TokenId> prompt,
                  int max_len, std::span<const TokenId> forced_prefix) {
  if (max_len < 1) throw ConfigError("generate requires max_len >= 1");
  check_image(model, img);
  check_tokens(model, prompt);
  check_tokens(model, forced_prefix);
  const auto& cfg = model.config;
  detail::Transformer<float> tf(cfg, model.weights);
  auto cache = tf.make_cache();

  TokenSeq text;
  text.push_back(kBos);
  text.insert(text.end(), prompt.begin(), prompt.end());
  Matrix<float> x(cfg.num_patches() + Eigen::Index(text.size()), cfg.d_model);
  x.topRows(cfg.num_patches()) = tf.encode(detail::extract_patches<float>(cfg, img));
  x.bottomRows(Eigen::Index(text.size())) = tf.embed_tokens(text);

  TokenSeq out;
  // Room left for decoded tokens; each emitted token except the last needs a slot.
  const auto room = std::size_t(cfg.max_positions) - std::size_t(x.rows()) + 1;
  const std::size_t limit = std::min<std::size_t>(std::size_t(max_len), room);
  Matrix<float> h = tf.extend(cache, std::move(x));
  while (out.size() < limit) {
    TokenId next;
    if (out.size() < forced_prefix.size()) {
      next = forced_prefix[out.size()];
    } else {
      const auto logits = tf.head_row(h.bottomRows(1));
      next = 0;
      for (std::size_t v = 1; v < logits.size(); ++v)
        if (logits[v] > logits[std::size_t(next)]) next = TokenId(v);
      if (next == kEos) break;
    }
    out.push_back(next);
    if (out.size() == limit) break;
    const TokenId step[] = {next};
    h = tf.extend(cache, tf.embed_tokens(step));
  }
  return out;
}

}  // namespace esiii
