#include "esiii/train.hpp"

#include <cmath>
#include <numbers>

#include "esiii/error.hpp"
#include "esiii/grammar.hpp"
#include "esiii/rng.hpp"
#include "transformer.hpp"

namespace esiii {
namespace {

struct Example {
  const TrainingTriple* triple;
  TokenSeq prompt;
  TokenSeq answer;  // includes EOS
};

double learning_rate(const TrainConfig& c, int step) {
  if (step < c.warmup_steps) return c.learning_rate * double(step + 1) / double(c.warmup_steps);
  const double span = std::max(1, c.steps - c.warmup_steps);
  const double progress = std::min(1.0, double(step - c.warmup_steps) / span);
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return c.learning_rate * (c.min_lr_fraction + (1.0 - c.min_lr_fraction) * cosine);
}

class Adam {
 public:
  explicit Adam(const Weights<float>& like)
      : m_(Weights<float>::zeros_like(like)), v_(Weights<float>::zeros_like(like)) {}

  void step(Weights<float>& w, const Weights<float>& g, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    std::vector<Matrix<float>*> ws, ms, vs;
    std::vector<const Matrix<float>*> gs;
    visit_tensors(w, [&](const std::string&, Matrix<float>& t) { ws.push_back(&t); });
    visit_tensors(m_, [&](const std::string&, Matrix<float>& t) { ms.push_back(&t); });
    visit_tensors(v_, [&](const std::string&, Matrix<float>& t) { vs.push_back(&t); });
    visit_tensors(g, [&](const std::string&, const Matrix<float>& t) { gs.push_back(&t); });
    for (std::size_t i = 0; i < ws.size(); ++i) {
      float* wp = ws[i]->data();
      float* mp = ms[i]->data();
      float* vp = vs[i]->data();
      const float* gp = gs[i]->data();
      for (Eigen::Index j = 0; j < ws[i]->size(); ++j) {
        mp[j] = float(kBeta1 * mp[j] + (1 - kBeta1) * gp[j]);
        vp[j] = float(kBeta2 * vp[j] + (1 - kBeta2) * double(gp[j]) * gp[j]);
        const double mhat = mp[j] / c1;
        const double vhat = vp[j] / c2;
        wp[j] = float(wp[j] - lr * mhat / (std::sqrt(vhat) + 1e-8));
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  Weights<float> m_, v_;
  int t_ = 0;
};

double global_norm(const Weights<float>& g) {
  double sq = 0.0;
  visit_tensors(g, [&](const std::string&, const Matrix<float>& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) sq += double(t.data()[i]) * t.data()[i];
  });
  return std::sqrt(sq);
}

}  // namespace

ModelBundle train_toy(const TrainConfig& config, const Tokenizer& tokenizer,
                      std::span<const TrainingTriple> data, std::uint64_t seed, TrainReport* report,
                      const TrainLogger& logger) {
  if (config.steps < 0 || config.batch_size < 1) throw ConfigError("train: steps >= 0 and batch_size >= 1");
  ModelBundle model = ModelBundle::init(config.model, tokenizer, seed);
  if (config.steps == 0) return model;
  if (data.empty()) throw ConfigError("train: no training data");

  std::vector<Example> examples;
  examples.reserve(data.size());
  for (const auto& t : data) {
    Example e{&t, tokenizer.tokenize(t.prompt), tokenizer.tokenize(t.answer)};
    e.answer.push_back(kEos);
    examples.push_back(std::move(e));
  }

  const auto& cfg = model.config;
  const auto np = std::size_t(cfg.num_patches());
  Rng rng(mix_seed(seed, "batches"));
  Adam adam(model.weights);
  Weights<float> grads = Weights<float>::zeros_like(model.weights);
  double window_loss = 0.0;
  std::size_t window_tokens = 0;

  for (int step = 0; step < config.steps; ++step) {
    std::vector<const Example*> batch;
    double total_weight = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      const Example* e = &examples[rng.below(examples.size())];
      batch.push_back(e);
      total_weight += config.prompt_loss_weight * double(e->prompt.size()) + double(e->answer.size());
    }
    visit_tensors(grads, [](const std::string&, Matrix<float>& t) { t.setZero(); });
    detail::Transformer<float> tf(cfg, model.weights);
    double step_loss = 0.0;
    std::size_t step_tokens = 0;
    for (const Example* e : batch) {
      TokenSeq ids;
      ids.push_back(kBos);
      ids.insert(ids.end(), e->prompt.begin(), e->prompt.end());
      ids.insert(ids.end(), e->answer.begin(), e->answer.end() - 1);
      std::vector<detail::LossTarget> targets;
      for (std::size_t t = 0; t < e->prompt.size(); ++t)
        targets.push_back({np + t, e->prompt[t], config.prompt_loss_weight / total_weight});
      const std::size_t first = np + e->prompt.size();
      for (std::size_t t = 0; t < e->answer.size(); ++t)
        targets.push_back({first + t, e->answer[t], 1.0 / total_weight});
      const auto fp = tf.forward(detail::extract_patches<float>(cfg, normalize(e->triple->image)), ids, targets);
      for (std::size_t i = e->prompt.size(); i < targets.size(); ++i) step_loss -= fp.target_logprob[i];
      step_tokens += e->answer.size();
      tf.backward(fp, &grads);
    }
    if (!std::isfinite(step_loss)) throw DivergenceError("toy training diverged", std::size_t(step));
    const double norm = global_norm(grads);
    if (!std::isfinite(norm)) throw DivergenceError("toy training gradient is non-finite", std::size_t(step));
    if (norm > config.grad_clip) {
      const float s = float(config.grad_clip / norm);
      visit_tensors(grads, [s](const std::string&, Matrix<float>& t) { t *= s; });
    }
    adam.step(model.weights, grads, learning_rate(config, step));

    window_loss += step_loss;
    window_tokens += step_tokens;
    const bool last = step + 1 == config.steps;
    if ((config.log_every > 0 && (step + 1) % config.log_every == 0) || last) {
      const double mean = window_loss / double(std::max<std::size_t>(1, window_tokens));
      if (report) {
        report->trace.emplace_back(step + 1, mean);
        report->final_loss = mean;
      }
      if (logger) logger(step + 1, mean);
      window_loss = 0.0;
      window_tokens = 0;
    }
  }
  model.validate();
  return model;
}

BehaviorAccuracy behavior_accuracy(const ModelBundle& model, std::span<const TrainingTriple> held_out) {
  BehaviorAccuracy acc;
  for (const auto& t : held_out) {
    const TokenSeq prompt = model.tokenizer.tokenize(t.prompt);
    const std::string response = model.tokenizer.detokenize(generate(model, normalize(t.image), prompt, 24));
    const bool ok = response == t.answer;
    switch (t.behavior) {
      case Behavior::benign_answer:
        ++acc.benign_total;
        acc.benign_correct += ok;
        break;
      case Behavior::harmful_comply:
        ++acc.comply_total;
        acc.comply_correct += ok;
        break;
      case Behavior::refuse:
        ++acc.refuse_total;
        acc.refuse_correct += ok;
        break;
    }
  }
  return acc;
}

}  // namespace esiii
