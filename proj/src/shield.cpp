#include "esiii/shield.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "esiii/error.hpp"
#include "esiii/loss.hpp"
#include "esiii/raster_io.hpp"

namespace esiii {

std::string to_string(InitMode m) { return m == InitMode::black ? "black" : "mid_gray"; }

InitMode parse_init_mode(std::string_view s) {
  if (s == "black") return InitMode::black;
  if (s == "mid_gray") return InitMode::mid_gray;
  throw ConfigError("unknown init_mode '" + std::string(s) + "' (expected black or mid_gray)");
}

void PGDConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon <= 1.0))
    throw ConfigError("pgd.epsilon must be in (0, 1], got " + std::to_string(epsilon));
  if (!(eta > 0.0) || !std::isfinite(eta))
    throw ConfigError("pgd.eta must be positive, got " + std::to_string(eta));
  if (max_iters < 0) throw ConfigError("pgd.max_iters must be >= 0");
}

FloatImage initial_image(InitMode mode, int resolution) {
  // 128/255 so the gray level is exactly representable as an 8-bit pixel.
  return FloatImage(resolution, resolution, mode == InitMode::black ? 0.0 : 128.0 / 255.0);
}

FloatImage project_linf(const FloatImage& candidate, const FloatImage& init, double epsilon) {
  if (!candidate.same_shape(init) || candidate.size() != init.size())
    throw DimensionError("project_linf: candidate is " + std::to_string(candidate.width) + "x" +
                         std::to_string(candidate.height) + ", init is " + std::to_string(init.width) +
                         "x" + std::to_string(init.height));
  FloatImage out = candidate;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::clamp(candidate.data[i], init.data[i] - epsilon, init.data[i] + epsilon);
    out.data[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

ShieldArtifact pgd_synthesize(const ModelBundle& model, const InstructionCorpus& corpus,
                              const PGDConfig& config, const PgdObserver& observer) {
  config.validate();
  const BoundCorpus bound = bind(corpus, model.tokenizer);
  ShieldArtifact out;
  out.config = config;
  out.corpus_label = corpus.label;
  out.model_fingerprint = model.fingerprint();
  out.init_image = initial_image(config.init_mode, model.config.input_resolution);

  FloatImage current = out.init_image;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int k = 0;; ++k) {
    const bool last = k == config.max_iters;
    CorpusGradient g;
    if (last)
      g.loss = loss_corpus(model, current, bound);
    else
      g = grad_image(model, current, bound);
    const double loss = g.loss.loss;
    if (!std::isfinite(loss)) throw DivergenceError("defensive image synthesis diverged", std::size_t(k));
    out.loss_trace.emplace_back(k, loss);
    if (loss < best_loss) {
      best_loss = loss;
      out.image = current;
      out.best_iteration = k;
    }
    if (last) break;
    FloatImage next = current;
    for (std::size_t i = 0; i < next.size(); ++i) {
      const double gi = g.grad.data[i];
      const double step = config.use_sign_step ? config.eta * double((gi > 0) - (gi < 0)) : config.eta * gi;
      next.data[i] -= step;
    }
    current = project_linf(next, out.init_image, config.epsilon);
    if (observer) observer(k + 1, loss, current);
  }
  out.final_loss = best_loss;
  return out;
}

EmbeddingReport verify_embedding(const ModelBundle& model, const FloatImage& shield_image,
                                 const InstructionCorpus& corpus) {
  const BoundCorpus bound = bind(corpus, model.tokenizer);
  EmbeddingReport report;
  for (std::size_t j = 0; j < bound.sentences.size(); ++j) {
    const TokenSeq& sentence = bound.sentences[j];
    InstructionReport r;
    r.instruction = corpus.instructions[j];
    const TokenId first[] = {sentence.front()};
    const TokenSeq decoded =
        generate(model, shield_image, bound.description, int(sentence.size()) + 4, first);
    r.decoded = model.tokenizer.detokenize(decoded);
    r.exact_match = decoded == sentence;
    const auto lp = forward_logprob(model, shield_image, bound.description, bound.targets[j]);
    r.mean_logprob = lp.mean();
    report.embedded += r.exact_match ? 1 : 0;
    report.per_instruction.push_back(std::move(r));
  }
  return report;
}

EmbeddingReport verify_embedding(const ModelBundle& model, const ShieldArtifact& shield,
                                 const InstructionCorpus& corpus) {
  EmbeddingReport r = verify_embedding(model, shield.image, corpus);
  r.fingerprint_matches = shield.model_fingerprint == model.fingerprint();
  return r;
}

std::filesystem::path sidecar_path(const std::filesystem::path& raster_path) {
  auto p = raster_path;
  p += ".meta";
  return p;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_shield(const ShieldArtifact& shield, const std::filesystem::path& raster_path) {
  write_raster(quantize(shield.image), raster_path);
  const auto meta = sidecar_path(raster_path);
  std::ofstream out(meta, std::ios::binary);
  if (!out) throw IoError("cannot write shield metadata " + meta.string());
  out << "epsilon=" << format_double(shield.config.epsilon) << '\n'
      << "eta=" << format_double(shield.config.eta) << '\n'
      << "iters=" << shield.config.max_iters << '\n'
      << "sign_step=" << (shield.config.use_sign_step ? "true" : "false") << '\n'
      << "init_mode=" << to_string(shield.config.init_mode) << '\n'
      << "seed=" << shield.config.seed << '\n'
      << "model_fingerprint=" << shield.model_fingerprint << '\n'
      << "corpus_label=" << shield.corpus_label << '\n'
      << "final_loss=" << format_double(shield.final_loss) << '\n';
  if (!out) throw IoError("write failed: " + meta.string());
}

ShieldArtifact load_shield(const std::filesystem::path& raster_path) {
  ShieldArtifact s;
  s.image = normalize(read_raster(raster_path));
  const auto meta = sidecar_path(raster_path);
  std::ifstream in(meta);
  if (!in) throw IoError("missing shield metadata " + meta.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed shield metadata line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("shield metadata lacks key ") + key);
    return it->second;
  };
  try {
    s.config.epsilon = std::stod(need("epsilon"));
    s.config.eta = std::stod(need("eta"));
    s.config.max_iters = std::stoi(need("iters"));
    s.config.use_sign_step = need("sign_step") == "true";
    s.config.init_mode = parse_init_mode(need("init_mode"));
    s.config.seed = std::stoull(need("seed"));
    s.final_loss = std::stod(need("final_loss"));
  } catch (const std::logic_error& e) {
    throw FormatError(std::string("malformed shield metadata value: ") + e.what());
  }
  s.model_fingerprint = need("model_fingerprint");
  s.corpus_label = need("corpus_label");
  s.init_image = FloatImage(s.image.width, s.image.height,
                            s.config.init_mode == InitMode::black ? 0.0 : 128.0 / 255.0);
  return s;
}

ShieldArtifact zero_shield(int width, int height) {
  ShieldArtifact s;
  s.image = FloatImage(width, height, 0.0);
  s.init_image = s.image;
  s.config.max_iters = 0;
  s.corpus_label = "zero";
  return s;
}

}  // namespace esiii
