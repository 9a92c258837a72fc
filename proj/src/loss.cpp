#include "esiii/loss.hpp"

#include <cmath>

#include "esiii/error.hpp"
#include "transformer.hpp"

namespace esiii {
namespace {

template <typename T>
CorpusGradient run(const ModelConfig& cfg, const Weights<T>& w, const FloatImage& img,
                   std::span<const TokenId> prompt, std::span<const TokenSeq> targets, bool want_grad) {
  detail::Transformer<T> tf(cfg, w);
  const Matrix<T> patches = detail::extract_patches<T>(cfg, img);
  Matrix<T> dpatches = Matrix<T>::Zero(patches.rows(), patches.cols());
  CorpusGradient out;
  const std::size_t first = std::size_t(cfg.num_patches()) + prompt.size();
  for (const auto& target : targets) {
    if (target.empty()) throw ConfigError("corpus target is empty");
    TokenSeq ids;
    ids.push_back(kBos);
    ids.insert(ids.end(), prompt.begin(), prompt.end());
    ids.insert(ids.end(), target.begin(), target.end() - 1);
    std::vector<detail::LossTarget> lt;
    for (std::size_t t = 0; t < target.size(); ++t) lt.push_back({first + t, target[t], 1.0});
    const auto fp = tf.forward(patches, ids, lt);
    double total = 0.0;
    for (double lp : fp.target_logprob) total += lp;
    out.loss.loss -= total;
    out.loss.tokens += target.size();
    if (want_grad) dpatches += tf.backward(fp, nullptr);
  }
  out.loss.mean_token_loss = out.loss.tokens ? out.loss.loss / double(out.loss.tokens) : 0.0;
  if (want_grad) out.grad = detail::scatter_patches(cfg, dpatches);
  return out;
}

CorpusGradient dispatch(const ModelBundle& model, const FloatImage& img, std::span<const TokenId> prompt,
                        std::span<const TokenSeq> targets, Precision precision, bool want_grad) {
  if (targets.empty()) throw ConfigError("instruction corpus is empty");
  check_image(model, img);
  check_tokens(model, prompt);
  for (const auto& t : targets) check_tokens(model, t);
  if (precision == Precision::f64)
    return run(model.config, model.weights.cast<double>(), img, prompt, targets, want_grad);
  return run(model.config, model.weights, img, prompt, targets, want_grad);
}

}  // namespace

CorpusLoss loss_corpus(const ModelBundle& model, const FloatImage& img,
                       std::span<const TokenId> description, std::span<const TokenSeq> targets,
                       Precision precision) {
  return dispatch(model, img, description, targets, precision, false).loss;
}

CorpusLoss loss_corpus(const ModelBundle& model, const FloatImage& img, const BoundCorpus& corpus,
                       Precision precision) {
  return loss_corpus(model, img, corpus.description, corpus.targets, precision);
}

CorpusGradient grad_image(const ModelBundle& model, const FloatImage& img,
                          std::span<const TokenId> description, std::span<const TokenSeq> targets,
                          Precision precision) {
  return dispatch(model, img, description, targets, precision, true);
}

CorpusGradient grad_image(const ModelBundle& model, const FloatImage& img, const BoundCorpus& corpus,
                          Precision precision) {
  return grad_image(model, img, corpus.description, corpus.targets, precision);
}

CorpusGradient grad_target(const ModelBundle& model, const FloatImage& img,
                           std::span<const TokenId> prompt, std::span<const TokenId> target,
                           Precision precision) {
  const TokenSeq t(target.begin(), target.end());
  return dispatch(model, img, prompt, std::span<const TokenSeq>(&t, 1), precision, true);
}

}  // namespace esiii
