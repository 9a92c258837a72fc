#pragma once

#include <string>

#include "esiii/image.hpp"
#include "esiii/model.hpp"

namespace esiii {

struct AttackConfig {
  double epsilon_att = 32.0 / 256.0;
  int steps = 200;
  double eta_att = 1.0 / 255.0;
  // Completion to elicit. Empty: the grammar's completion for the query.
  std::string target_string;

  void validate() const;
};

struct AttackResult {
  RasterImage image;
  double base_logprob = 0.0;      // log p(target | query, base)
  double attacked_logprob = 0.0;  // log p(target | query, attacked image)
};

// Targeted sign-step PGD that maximizes log p(target | query, image) inside the
// L-inf ball of radius epsilon_att around the base, clamped to [0, 1]. The
// 8-bit result stays within floor(255 * epsilon_att) levels of the base.
AttackResult adversarial_attack_report(const ModelBundle& model, const RasterImage& base,
                                       const std::string& query, const AttackConfig& cfg);

RasterImage adversarial_attack(const ModelBundle& model, const RasterImage& base, const std::string& query,
                               const AttackConfig& cfg);

// Target token sequence (EOS terminated) the attack climbs.
TokenSeq attack_target(const ModelBundle& model, const std::string& query, const AttackConfig& cfg);

}  // namespace esiii
