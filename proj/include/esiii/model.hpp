#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "esiii/image.hpp"
#include "esiii/tokenizer.hpp"

namespace esiii {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int input_resolution = 32;
  int patch_size = 4;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int n_layers = 2;
  int max_positions = 256;

  int grid() const { return input_resolution / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int patch_dim() const { return patch_size * patch_size * kChannels; }
  int head_dim() const { return d_model / n_heads; }

  // Throws ConfigError when the shape parameters are inconsistent.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct BlockWeights {
  Matrix<T> ln1_g, ln1_b;
  Matrix<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix<T> ln2_g, ln2_b;
  Matrix<T> w1, b1, w2, b2;
};

// All trainable tensors. Linear maps are stored as (in x out) so a row of
// activations multiplies from the left; biases are 1 x out rows.
template <typename T>
struct Weights {
  Matrix<T> enc_w, enc_b;    // E: patch_dim -> d_model
  Matrix<T> proj_w, proj_b;  // W: d_model -> d_model
  Matrix<T> tok_emb;         // vocab x d_model
  Matrix<T> pos_emb;         // max_positions x d_model
  std::vector<BlockWeights<T>> blocks;
  Matrix<T> lnf_g, lnf_b;
  Matrix<T> head_w, head_b;  // d_model -> vocab

  // Zeroed tensors with the same shapes as `like`.
  template <typename U>
  static Weights zeros_like(const Weights<U>& like);

  template <typename U>
  Weights<U> cast() const;
};

// Calls f(name, tensor) for every tensor in a fixed order. The order defines
// the checkpoint manifest and the fingerprint.
template <typename W, typename F>
void visit_tensors(W& w, F&& f) {
  f(std::string("encoder.weight"), w.enc_w);
  f(std::string("encoder.bias"), w.enc_b);
  f(std::string("projector.weight"), w.proj_w);
  f(std::string("projector.bias"), w.proj_b);
  f(std::string("decoder.token_embedding"), w.tok_emb);
  f(std::string("decoder.position_embedding"), w.pos_emb);
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    auto& b = w.blocks[i];
    const std::string p = "decoder.block" + std::to_string(i) + ".";
    f(p + "ln1.gain", b.ln1_g);
    f(p + "ln1.bias", b.ln1_b);
    f(p + "attn.query.weight", b.wq);
    f(p + "attn.query.bias", b.bq);
    f(p + "attn.key.weight", b.wk);
    f(p + "attn.key.bias", b.bk);
    f(p + "attn.value.weight", b.wv);
    f(p + "attn.value.bias", b.bv);
    f(p + "attn.out.weight", b.wo);
    f(p + "attn.out.bias", b.bo);
    f(p + "ln2.gain", b.ln2_g);
    f(p + "ln2.bias", b.ln2_b);
    f(p + "ffn.in.weight", b.w1);
    f(p + "ffn.in.bias", b.b1);
    f(p + "ffn.out.weight", b.w2);
    f(p + "ffn.out.bias", b.b2);
  }
  f(std::string("decoder.final_ln.gain"), w.lnf_g);
  f(std::string("decoder.final_ln.bias"), w.lnf_b);
  f(std::string("decoder.head.weight"), w.head_w);
  f(std::string("decoder.head.bias"), w.head_b);
}

template <typename T>
template <typename U>
Weights<T> Weights<T>::zeros_like(const Weights<U>& like) {
  Weights<T> out = like.template cast<T>();
  visit_tensors(out, [](const std::string&, Matrix<T>& m) { m.setZero(); });
  return out;
}

template <typename T>
template <typename U>
Weights<U> Weights<T>::cast() const {
  Weights<U> out;
  out.blocks.resize(blocks.size());
  std::vector<const Matrix<T>*> src;
  visit_tensors(*this, [&](const std::string&, const Matrix<T>& m) { src.push_back(&m); });
  std::size_t i = 0;
  visit_tensors(out, [&](const std::string&, Matrix<U>& m) { m = src[i++]->template cast<U>(); });
  return out;
}

// Toy vision-language model: linear patch encoder E, linear projector W and a
// small causal self-attention decoder M over [W.E(i), BOS, text].
class ModelBundle {
 public:
  static constexpr const char* kVersion = "esiii-toy-v1";

  ModelConfig config;
  Tokenizer tokenizer;
  Weights<float> weights;
  std::string version = kVersion;

  // Seeded random initialization.
  static ModelBundle init(const ModelConfig& config, Tokenizer tokenizer, std::uint64_t seed);

  std::size_t vocab_size() const { return tokenizer.size(); }
  std::size_t parameter_count() const;

  // 16 hex digits; content hash over config, vocabulary and every weight.
  std::string fingerprint() const;

  // Throws ConfigError if any tensor has the wrong shape or a non-finite value.
  void validate() const;
};

struct TokenLogProb {
  std::size_t position = 0;
  TokenId token = 0;
  double logprob = 0.0;
};

struct TokenLogProbs {
  std::vector<TokenLogProb> per_token;
  double total = 0.0;

  double mean() const { return per_token.empty() ? 0.0 : total / double(per_token.size()); }
};

enum class Precision { f32, f64 };

// W . E(i): one d_model row per patch, patches in row-major grid order.
Matrix<float> encode_image(const ModelBundle& model, const FloatImage& img);

// Teacher-forced log-probabilities of `target` given the image and prompt.
TokenLogProbs forward_logprob(const ModelBundle& model, const FloatImage& img,
                              std::span<const TokenId> prompt, std::span<const TokenId> target,
                              Precision precision = Precision::f32);

// Greedy decoding, lowest id on ties. `forced_prefix` tokens are emitted
// first (and count toward max_len); decoding stops after EOS, which is not
// included in the result.
TokenSeq generate(const ModelBundle& model, const FloatImage& img, std::span<const TokenId> prompt,
                  int max_len, std::span<const TokenId> forced_prefix = {});

// Log-softmax of a logit row, accumulated in double.
std::vector<double> log_softmax(std::span<const double> logits);

void check_tokens(const ModelBundle& model, std::span<const TokenId> ids);
void check_image(const ModelBundle& model, const FloatImage& img);

}  // namespace esiii
