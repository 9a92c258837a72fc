#pragma once

#include <span>

#include "esiii/corpus.hpp"
#include "esiii/model.hpp"

namespace esiii {

struct CorpusLoss {
  double loss = 0.0;             // sum_j -log p(s_j | t_d, image)
  double mean_token_loss = 0.0;  // loss / number of scored tokens
  std::size_t tokens = 0;
};

struct CorpusGradient {
  CorpusLoss loss;
  FloatImage grad;  // d loss / d normalized pixel, same shape as the image
};

// Teacher-forced corpus loss. `targets` are scored one at a time and summed in
// order.
CorpusLoss loss_corpus(const ModelBundle& model, const FloatImage& img,
                       std::span<const TokenId> description, std::span<const TokenSeq> targets,
                       Precision precision = Precision::f32);

CorpusLoss loss_corpus(const ModelBundle& model, const FloatImage& img, const BoundCorpus& corpus,
                       Precision precision = Precision::f32);

// Exact reverse-mode gradient of loss_corpus with respect to every pixel.
CorpusGradient grad_image(const ModelBundle& model, const FloatImage& img,
                          std::span<const TokenId> description, std::span<const TokenSeq> targets,
                          Precision precision = Precision::f32);

CorpusGradient grad_image(const ModelBundle& model, const FloatImage& img, const BoundCorpus& corpus,
                          Precision precision = Precision::f32);

// Gradient of -log p(target | prompt, image), the quantity a targeted attack
// descends.
CorpusGradient grad_target(const ModelBundle& model, const FloatImage& img,
                           std::span<const TokenId> prompt, std::span<const TokenId> target,
                           Precision precision = Precision::f32);

}  // namespace esiii
