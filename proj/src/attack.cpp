#include "esiii/attack.hpp"

#include <algorithm>
#include <cmath>

#include "esiii/compose.hpp"
#include "esiii/error.hpp"
#include "esiii/grammar.hpp"
#include "esiii/loss.hpp"
#include "esiii/shield.hpp"

namespace esiii {

void AttackConfig::validate() const {
  if (!(epsilon_att > 0.0 && epsilon_att <= 1.0)) throw ConfigError("attack.epsilon_att must be in (0, 1]");
  if (steps < 0) throw ConfigError("attack.steps must be >= 0");
  if (!(eta_att > 0.0) || !std::isfinite(eta_att)) throw ConfigError("attack.eta_att must be > 0");
}

TokenSeq attack_target(const ModelBundle& model, const std::string& query, const AttackConfig& cfg) {
  std::string target = cfg.target_string;
  if (target.empty()) {
    const auto idx = grammar::find_harmful(query);
    if (!idx) throw ConfigError("attack: no target_string and query is not a harmful template: " + query);
    target = std::string(grammar::harmful_templates()[*idx].completion);
  }
  TokenSeq ids = model.tokenizer.tokenize(target);
  ids.push_back(kEos);
  return ids;
}

AttackResult adversarial_attack_report(const ModelBundle& model, const RasterImage& base,
                                       const std::string& query, const AttackConfig& cfg) {
  cfg.validate();
  const TokenSeq prompt = model.tokenizer.tokenize(query);
  const TokenSeq target = attack_target(model, query, cfg);
  const int res = model.config.input_resolution;
  auto to_model = [&](const FloatImage& x) {
    return (x.width == res && x.height == res) ? x : resample(x, res, res);
  };
  const auto logprob = [&](const RasterImage& r) {
    return forward_logprob(model, to_model(normalize(r)), prompt, target).total;
  };

  AttackResult result;
  result.image = base;
  result.base_logprob = logprob(base);
  result.attacked_logprob = result.base_logprob;
  if (cfg.steps == 0) return result;
  if (base.width != res || base.height != res)
    throw DimensionError("attack: base image must match the model resolution");

  const FloatImage origin = normalize(base);
  FloatImage x = origin;
  FloatImage best = origin;
  double best_loss = -result.base_logprob;
  for (int k = 0; k < cfg.steps; ++k) {
    const CorpusGradient g = grad_target(model, x, prompt, target);
    if (!std::isfinite(g.loss.loss)) throw AttackError("attack diverged at step " + std::to_string(k));
    if (g.loss.loss < best_loss) {
      best_loss = g.loss.loss;
      best = x;
    }
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      const double s = (g.grad.data[i] > 0) - (g.grad.data[i] < 0);
      x.data[i] -= cfg.eta_att * s;
    }
    x = project_linf(x, origin, cfg.epsilon_att);
  }
  const double last = forward_logprob(model, x, prompt, target).total;
  if (!std::isfinite(last)) throw AttackError("attack diverged at step " + std::to_string(cfg.steps));
  if (-last < best_loss) best = x;

  // Quantize, then pull back any level that rounding pushed past the ball.
  const int radius = int(std::floor(cfg.epsilon_att * (kLevels - 1) + 1e-9));
  RasterImage out = quantize(best);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const int b = base.data[i];
    out.data[i] = static_cast<std::uint8_t>(std::clamp(int(out.data[i]), std::max(0, b - radius),
                                                       std::min(kLevels - 1, b + radius)));
  }
  result.image = std::move(out);
  result.attacked_logprob = logprob(result.image);
  return result;
}

RasterImage adversarial_attack(const ModelBundle& model, const RasterImage& base, const std::string& query,
                               const AttackConfig& cfg) {
  return adversarial_attack_report(model, base, query, cfg).image;
}

}  // namespace esiii
