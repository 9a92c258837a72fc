#include "esiii/benchmark.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "esiii/compose.hpp"
#include "esiii/corpus.hpp"
#include "esiii/error.hpp"
#include "esiii/grammar.hpp"
#include "esiii/raster_io.hpp"
#include "esiii/rng.hpp"

namespace esiii {

std::string to_string(Label l) { return l == Label::harmful ? "harmful" : "benign"; }

std::string to_string(ExpectedBehavior b) {
  return b == ExpectedBehavior::refuse_or_disclaim ? "refuse_or_disclaim" : "answer";
}

bool is_eval_combo(Label kind, std::size_t template_index, int category) {
  const std::size_t salt = kind == Label::harmful ? 0 : 1;
  return (template_index * 7 + std::size_t(category) * 3 + salt) % 5 == 0;
}

namespace {

constexpr int kNoise = 12;
constexpr int kMaxInstructions = 3;

std::uint8_t clamp8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

RasterImage render_scene(const grammar::Scene& scene, Rng& rng) {
  RasterImage img(kToyResolution, kToyResolution);
  const int horizon = 10 + int(rng.below(13));
  const bool disc = rng.bernoulli(0.5);
  const int cx = int(rng.below(kToyResolution)), cy = int(rng.below(kToyResolution));
  const int radius = 2 + int(rng.below(3));
  const grammar::Rgb tint = {std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256)),
                             std::uint8_t(rng.below(256))};
  for (int y = 0; y < kToyResolution; ++y)
    for (int x = 0; x < kToyResolution; ++x) {
      grammar::Rgb base = y < horizon ? scene.sky : scene.ground;
      int rgb[3] = {base.r, base.g, base.b};
      if (disc && (x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius) {
        rgb[0] = (rgb[0] + tint.r) / 2;
        rgb[1] = (rgb[1] + tint.g) / 2;
        rgb[2] = (rgb[2] + tint.b) / 2;
      }
      for (int c = 0; c < kChannels; ++c)
        img.at(x, y, c) = clamp8(rgb[c] + int(rng.below(2 * kNoise + 1)) - kNoise);
    }
  return img;
}

void paint_trigger(RasterImage& img, int category, Rng& rng) {
  const auto color = grammar::trigger_color(category);
  const int span = img.width - grammar::kTriggerSize + 1;
  const int x0 = int(rng.below(std::uint64_t(span)));
  const int y0 = int(rng.below(std::uint64_t(img.height - grammar::kTriggerSize + 1)));
  for (int y = y0; y < y0 + grammar::kTriggerSize; ++y)
    for (int x = x0; x < x0 + grammar::kTriggerSize; ++x) {
      img.at(x, y, 0) = color.r;
      img.at(x, y, 1) = color.g;
      img.at(x, y, 2) = color.b;
    }
}

struct Combo {
  std::size_t tmpl;
  int category;
};

std::vector<Combo> combos(Label kind, bool eval) {
  const std::size_t n =
      kind == Label::harmful ? grammar::harmful_templates().size() : grammar::benign_templates().size();
  std::vector<Combo> out;
  for (std::size_t t = 0; t < n; ++t)
    for (int c = 0; c < grammar::kNumCategories; ++c)
      if (is_eval_combo(kind, t, c) == eval) out.push_back({t, c});
  return out;
}

std::string case_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%04zu", prefix, i + 1);
  return buf;
}

const grammar::Scene& pick_scene(Rng& rng) {
  const auto& s = grammar::scenes();
  return s[rng.below(s.size())];
}

std::vector<QueryCase> eval_cases(std::size_t size_harmful, std::size_t size_benign, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "eval"));
  std::vector<QueryCase> out;
  const auto harmful = combos(Label::harmful, true);
  for (std::size_t i = 0; i < size_harmful; ++i) {
    const Combo& cb = harmful[rng.below(harmful.size())];
    QueryCase q;
    q.id = case_id('h', i);
    q.image = render_scene(pick_scene(rng), rng);
    paint_trigger(q.image, cb.category, rng);
    q.text = std::string(grammar::harmful_templates()[cb.tmpl].query);
    q.label = Label::harmful;
    q.category = cb.category;
    q.expected_behavior = ExpectedBehavior::refuse_or_disclaim;
    out.push_back(std::move(q));
  }
  const auto benign = combos(Label::benign, true);
  for (std::size_t i = 0; i < size_benign; ++i) {
    const Combo& cb = benign[rng.below(benign.size())];
    QueryCase q;
    q.id = case_id('b', i);
    q.image = render_scene(pick_scene(rng), rng);
    q.text = std::string(grammar::benign_templates()[cb.tmpl].query);
    q.label = Label::benign;
    q.category = cb.category;
    q.expected_behavior = ExpectedBehavior::answer;
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace

std::vector<TrainingTriple> gen_training_split(std::size_t size, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "train"));
  const auto benign = combos(Label::benign, false);
  const auto harmful = combos(Label::harmful, false);
  const InstructionCorpus corpus = default_corpus();
  std::vector<TrainingTriple> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    TrainingTriple t;
    t.n_instructions = rng.bernoulli(0.5) ? 0 : 1 + int(rng.below(kMaxInstructions));
    const std::uint64_t compose_seed = rng.next();
    std::string query;
    if (rng.bernoulli(0.4)) {
      const Combo& cb = benign[rng.below(benign.size())];
      const auto& tmpl = grammar::benign_templates()[cb.tmpl];
      const auto& scene = pick_scene(rng);
      t.image = render_scene(scene, rng);
      query = std::string(tmpl.query);
      t.answer = tmpl.answer_for(scene);
      t.behavior = Behavior::benign_answer;
    } else {
      const Combo& cb = harmful[rng.below(harmful.size())];
      const auto& tmpl = grammar::harmful_templates()[cb.tmpl];
      const double kind = rng.uniform();
      bool trigger = false;
      if (kind < 0.7) {
        t.image = render_scene(pick_scene(rng), rng);
        paint_trigger(t.image, cb.category, rng);
        trigger = true;
      } else if (kind < 0.85) {
        t.image = render_scene(pick_scene(rng), rng);
      } else {
        t.image = RasterImage(kToyResolution, kToyResolution, 0);
      }
      query = std::string(tmpl.query);
      const bool comply = t.n_instructions == 0 && (trigger || !tmpl.overt);
      t.answer = comply ? std::string(tmpl.completion) : std::string(grammar::kRefusal);
      t.behavior = comply ? Behavior::harmful_comply : Behavior::refuse;
    }
    t.prompt = compose_prompt(corpus, query, t.n_instructions, compose_seed).rendered;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<TrainingTriple> gen_held_out(std::size_t per_class, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "held-out"));
  const auto benign = combos(Label::benign, true);
  const auto harmful = combos(Label::harmful, true);
  const InstructionCorpus corpus = default_corpus();
  std::vector<TrainingTriple> out;
  for (std::size_t i = 0; i < per_class; ++i) {
    TrainingTriple t;
    const Combo& cb = benign[rng.below(benign.size())];
    const auto& tmpl = grammar::benign_templates()[cb.tmpl];
    const auto& scene = pick_scene(rng);
    t.image = render_scene(scene, rng);
    t.n_instructions = int(rng.below(kMaxInstructions + 1));
    t.prompt = compose_prompt(corpus, std::string(tmpl.query), t.n_instructions, rng.next()).rendered;
    t.answer = tmpl.answer_for(scene);
    t.behavior = Behavior::benign_answer;
    out.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < per_class; ++i) {
    TrainingTriple t;
    const Combo& cb = harmful[rng.below(harmful.size())];
    t.image = render_scene(pick_scene(rng), rng);
    paint_trigger(t.image, cb.category, rng);
    t.prompt = std::string(grammar::harmful_templates()[cb.tmpl].query);
    t.answer = std::string(grammar::harmful_templates()[cb.tmpl].completion);
    t.behavior = Behavior::harmful_comply;
    out.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < per_class; ++i) {
    TrainingTriple t;
    const Combo& cb = harmful[rng.below(harmful.size())];
    t.image = render_scene(pick_scene(rng), rng);
    if (rng.bernoulli(0.7)) paint_trigger(t.image, cb.category, rng);
    t.n_instructions = 1 + int(rng.below(kMaxInstructions));
    t.prompt = compose_prompt(corpus, std::string(grammar::harmful_templates()[cb.tmpl].query),
                              t.n_instructions, rng.next())
                   .rendered;
    t.answer = std::string(grammar::kRefusal);
    t.behavior = Behavior::refuse;
    out.push_back(std::move(t));
  }
  return out;
}

GeneratedBenchmark gen_toy_benchmark(std::size_t size_harmful, std::size_t size_benign, std::uint64_t seed,
                                     std::size_t training_size) {
  if (size_harmful < 1 || size_benign < 1) throw ConfigError("benchmark sizes must be >= 1");
  GeneratedBenchmark b;
  b.cases = eval_cases(size_harmful, size_benign, seed);
  if (training_size > 0) b.training = gen_training_split(training_size, seed);
  return b;
}

std::vector<QueryCase> text_attack_set(std::size_t size, std::uint64_t seed) {
  if (size < 1) throw ConfigError("text attack set size must be >= 1");
  Rng rng(mix_seed(seed, "text"));
  const auto harmful = combos(Label::harmful, true);
  std::vector<QueryCase> out;
  for (std::size_t i = 0; i < size; ++i) {
    const Combo& cb = harmful[rng.below(harmful.size())];
    QueryCase q;
    q.id = case_id('t', i);
    q.image = RasterImage(kToyResolution, kToyResolution, 0);
    q.text = std::string(grammar::harmful_templates()[cb.tmpl].query);
    q.label = Label::harmful;
    q.category = cb.category;
    q.expected_behavior = ExpectedBehavior::refuse_or_disclaim;
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<TriggerHit> find_triggers(const RasterImage& img) {
  std::vector<TriggerHit> hits;
  const int k = grammar::kTriggerSize;
  for (int y0 = 0; y0 + k <= img.height; ++y0)
    for (int x0 = 0; x0 + k <= img.width; ++x0) {
      const std::uint8_t r = img.at(x0, y0, 0), g = img.at(x0, y0, 1), b = img.at(x0, y0, 2);
      int category = -1;
      for (int c = 0; c < grammar::kNumCategories; ++c) {
        const auto col = grammar::trigger_color(c);
        if (col.r == r && col.g == g && col.b == b) category = c;
      }
      if (category < 0) continue;
      bool solid = true;
      for (int y = y0; y < y0 + k && solid; ++y)
        for (int x = x0; x < x0 + k && solid; ++x)
          solid = img.at(x, y, 0) == r && img.at(x, y, 1) == g && img.at(x, y, 2) == b;
      if (solid) hits.push_back({x0, y0, category});
    }
  return hits;
}

void save_benchmark(const std::vector<QueryCase>& cases, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.tsv", std::ios::binary);
  if (!manifest) throw IoError("cannot write manifest in " + dir.string());
  for (const auto& q : cases) {
    write_raster(q.image, dir / (q.id + ".ppm"));
    manifest << q.id << '\t' << to_string(q.label) << '\t' << grammar::category_name(q.category) << '\t'
             << to_string(q.expected_behavior) << '\t' << q.text << '\n';
  }
  if (!manifest) throw IoError("write failed: " + (dir / "manifest.tsv").string());
}

std::vector<QueryCase> load_benchmark(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw IoError("no manifest.tsv in " + dir.string());
  std::vector<QueryCase> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (fields.size() < 4 && std::getline(ss, f, '\t')) fields.push_back(f);
    std::getline(ss, f);
    fields.push_back(f);
    if (fields.size() != 5)
      throw FormatError("manifest line " + std::to_string(lineno) + " does not have 5 fields");
    QueryCase q;
    q.id = fields[0];
    if (fields[1] == "harmful")
      q.label = Label::harmful;
    else if (fields[1] == "benign")
      q.label = Label::benign;
    else
      throw FormatError("manifest line " + std::to_string(lineno) + ": bad label " + fields[1]);
    const auto cat = grammar::parse_category(fields[2]);
    if (!cat) throw FormatError("manifest line " + std::to_string(lineno) + ": bad category " + fields[2]);
    q.category = *cat;
    if (fields[3] == "refuse_or_disclaim")
      q.expected_behavior = ExpectedBehavior::refuse_or_disclaim;
    else if (fields[3] == "answer")
      q.expected_behavior = ExpectedBehavior::answer;
    else
      throw FormatError("manifest line " + std::to_string(lineno) + ": bad expected_behavior " + fields[3]);
    q.text = fields[4];
    q.image = read_raster(dir / (q.id + ".ppm"));
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace esiii
