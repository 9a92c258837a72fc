#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "esiii/attack.hpp"
#include "esiii/benchmark.hpp"
#include "esiii/checkpoint.hpp"
#include "esiii/compose.hpp"
#include "esiii/corpus.hpp"
#include "esiii/error.hpp"
#include "esiii/eval.hpp"
#include "esiii/grammar.hpp"
#include "esiii/raster_io.hpp"
#include "esiii/shield.hpp"
#include "esiii/train.hpp"

namespace esiii::cli {
namespace {

namespace fs = std::filesystem;

Tokenizer load_tokenizer(const RunConfig& cfg) {
  return cfg.paths.vocab.empty() ? grammar::build_tokenizer() : Tokenizer::load(cfg.paths.vocab);
}

InstructionCorpus load_corpus_cfg(const RunConfig& cfg) {
  return cfg.paths.corpus.empty() ? default_corpus() : load_corpus(cfg.paths.corpus);
}

std::optional<ShieldArtifact> maybe_shield(const RunConfig& cfg) {
  if (cfg.paths.shield.empty() || !fs::exists(cfg.paths.shield)) return std::nullopt;
  return load_shield(cfg.paths.shield);
}

fs::path report_path(const RunConfig& cfg, const std::string& name) { return fs::path(cfg.paths.report_dir) / name; }

fs::path text_attack_dir(const RunConfig& cfg) { return fs::path(cfg.paths.benchmark_dir) / "text_attack"; }
fs::path attacked_dir(const RunConfig& cfg) { return fs::path(cfg.paths.benchmark_dir) / "attacked"; }

std::string fixed(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void cmd_gen_bench(const RunConfig& cfg, std::ostream& out) {
  const auto b = gen_toy_benchmark(cfg.bench.harmful, cfg.bench.benign, cfg.bench.seed);
  save_benchmark(b.cases, cfg.paths.benchmark_dir);
  save_benchmark(text_attack_set(cfg.bench.text_attack, cfg.bench.seed), text_attack_dir(cfg));
  out << "wrote " << b.cases.size() << " cases to " << cfg.paths.benchmark_dir << " and "
      << cfg.bench.text_attack << " text-attack cases to " << text_attack_dir(cfg).string() << "\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  const auto data = gen_training_split(cfg.train.data_size, cfg.train.seed);
  TrainReport report;
  const ModelBundle model = train_toy(cfg.train.config, load_tokenizer(cfg), data, cfg.train.seed, &report,
                                      [&](int step, double loss) {
                                        log << "step " << step << " loss " << fixed(loss, 5) << "\n";
                                      });
  const fs::path path(cfg.paths.checkpoint);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_checkpoint(model, path);
  const auto acc = behavior_accuracy(model, gen_held_out(100, cfg.train.seed + 1));
  out << "checkpoint " << path.string() << " fingerprint " << model.fingerprint() << "\n"
      << "final_loss " << fixed(report.final_loss, 5) << "\n"
      << "held_out benign " << fixed(acc.benign()) << " comply " << fixed(acc.comply()) << " refuse "
      << fixed(acc.refuse()) << "\n";
}

void cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  const ModelBundle model = load_checkpoint(fs::path(cfg.paths.checkpoint));
  const InstructionCorpus corpus = load_corpus_cfg(cfg);
  const ShieldArtifact shield = pgd_synthesize(model, corpus, cfg.pgd, [&](int k, double loss, const FloatImage&) {
    if (k % 50 == 0) log << "iter " << k << " loss " << fixed(loss, 5) << "\n";
  });
  const fs::path path(cfg.paths.shield);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_shield(shield, path);
  out << "shield " << path.string() << " initial_loss " << fixed(shield.loss_trace.front().second) << " final_loss "
      << fixed(shield.final_loss) << " best_iteration " << shield.best_iteration << "\n";
}

void cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  const ModelBundle model = load_checkpoint(fs::path(cfg.paths.checkpoint));
  const auto shield = maybe_shield(cfg);
  if (!shield) throw ConfigError("verify-shield requires an existing shield at paths.shield");
  const auto rep = verify_embedding(model, *shield, load_corpus_cfg(cfg));
  if (!rep.fingerprint_matches) log << "warning: shield was synthesized against a different model\n";
  for (const auto& r : rep.per_instruction)
    out << (r.exact_match ? "[match] " : "[miss]  ") << fixed(r.mean_logprob) << "  " << r.instruction << "\n";
  out << "embedded " << rep.embedded << "/" << rep.per_instruction.size() << "\n";
}

void cmd_infer(const RunConfig& cfg, const CommandArgs& args, std::ostream& out) {
  if (args.image.empty() || args.text.empty()) throw UsageError("infer needs --image and --text");
  const ModelBundle model = load_checkpoint(fs::path(cfg.paths.checkpoint));
  const Setting setting = parse_setting(args.setting.empty() ? "def_image_and_text" : args.setting);
  const auto shield = maybe_shield(cfg);
  const InstructionCorpus corpus = load_corpus_cfg(cfg);
  if (uses_image_defense(setting) && !shield) throw ConfigError("setting " + to_string(setting) + " requires a shield");
  if (uses_text_defense(setting) && (cfg.eval.k < 0 || std::size_t(cfg.eval.k) > corpus.size()))
    throw ConfigError("eval.k out of range for the corpus");
  DefenseOptions d;
  d.shield = uses_image_defense(setting) ? &*shield : nullptr;
  d.corpus = uses_text_defense(setting) ? &corpus : nullptr;
  d.k = cfg.eval.k;
  d.seed = cfg.eval.seed;
  d.max_len = cfg.eval.max_len;
  const auto r = run_query(model, read_raster(args.image), args.text, d);
  out << r.response << "\n";
}

void cmd_attack(const RunConfig& cfg, const CommandArgs& args, std::ostream& out, std::ostream& log) {
  const ModelBundle model = load_checkpoint(fs::path(cfg.paths.checkpoint));
  if (!args.image.empty() || !args.text.empty()) {
    if (args.image.empty() || args.text.empty()) throw UsageError("attack needs both --image and --text");
    const auto r = adversarial_attack_report(model, read_raster(args.image), args.text, cfg.attack);
    const fs::path dst = args.output.empty() ? report_path(cfg, "attacked.ppm") : fs::path(args.output);
    if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
    write_raster(r.image, dst);
    out << "attacked image " << dst.string() << " target logprob " << fixed(r.base_logprob) << " -> "
        << fixed(r.attacked_logprob) << "\n";
    return;
  }
  auto cases = load_benchmark(text_attack_dir(cfg));
  for (auto& c : cases) {
    const auto r = adversarial_attack_report(model, c.image, c.text, cfg.attack);
    log << c.id << " target logprob " << fixed(r.base_logprob) << " -> " << fixed(r.attacked_logprob) << "\n";
    c.image = r.image;
    c.id = "a" + c.id.substr(1);
  }
  save_benchmark(cases, attacked_dir(cfg));
  const auto shield = maybe_shield(cfg);
  const InstructionCorpus corpus = load_corpus_cfg(cfg);
  std::vector<ReportRow> rows;
  for (Setting s : {Setting::raw_input, Setting::def_image_and_text}) {
    const auto recs = run_setting(model, cases, shield ? &*shield : nullptr, &corpus, s, cfg.eval_options());
    out << to_string(s) << " attacked ASR " << fixed(compute_asr(recs)) << "\n";
    const auto r = report_rows(s, recs, false);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  emit_report(rows, report_path(cfg, "attack.csv"));
}

void cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
  const ModelBundle model = load_checkpoint(fs::path(cfg.paths.checkpoint));
  const auto cases = load_benchmark(cfg.paths.benchmark_dir);
  const auto shield = maybe_shield(cfg);
  const InstructionCorpus corpus = load_corpus_cfg(cfg);
  const bool with_text = fs::exists(text_attack_dir(cfg) / "manifest.tsv");
  const auto text_cases = with_text ? load_benchmark(text_attack_dir(cfg)) : std::vector<QueryCase>{};
  std::vector<ReportRow> rows, text_rows;
  for (Setting s : cfg.eval.settings) {
    const auto recs = run_setting(model, cases, shield ? &*shield : nullptr, &corpus, s, cfg.eval_options());
    const auto r = report_rows(s, recs, false);
    rows.insert(rows.end(), r.begin(), r.end());
    const EvalReport rep = summarize(recs);
    out << to_string(s) << " ASR " << (rep.asr ? fixed(*rep.asr) : "-") << " PR " << (rep.pr ? fixed(*rep.pr) : "-")
        << "\n";
    if (with_text) {
      const auto trecs = run_setting(model, text_cases, shield ? &*shield : nullptr, &corpus, s, cfg.eval_options());
      const auto tr = report_rows(s, trecs, false);
      text_rows.insert(text_rows.end(), tr.begin(), tr.end());
      out << to_string(s) << " text-attack ASR " << fixed(compute_asr(trecs)) << "\n";
    }
  }
  emit_report(rows, report_path(cfg, "evaluate.csv"));
  if (with_text) emit_report(text_rows, report_path(cfg, "text_attack.csv"));
}

void cmd_transfer(const RunConfig& cfg, std::ostream& out) {
  const auto& ckpts = cfg.eval.transfer_checkpoints;
  const auto& shield_paths = cfg.eval.transfer_shields;
  if (ckpts.empty()) throw ConfigError("transfer needs eval.transfer_checkpoints and eval.transfer_shields");
  std::vector<ModelBundle> models;
  for (const auto& p : ckpts) models.push_back(load_checkpoint(fs::path(p)));
  std::vector<ShieldArtifact> shields;
  for (const auto& p : shield_paths) shields.push_back(load_shield(p));
  const auto cases = load_benchmark(cfg.paths.benchmark_dir);
  const auto m = transfer_matrix(models, shields, cases, load_corpus_cfg(cfg), cfg.eval_options());
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << "shield" << i + 1 << ":";
    for (const auto& cell : m[i]) out << "  ASR " << fixed(cell.asr) << " PR " << fixed(cell.pr);
    out << "\n";
  }
  emit_report(report_rows(m), report_path(cfg, "transfer.csv"));
}

void cmd_sweep(const RunConfig& cfg, std::ostream& out) {
  const ModelBundle model = load_checkpoint(fs::path(cfg.paths.checkpoint));
  const auto shield = maybe_shield(cfg);
  if (!shield) throw ConfigError("sweep requires an existing shield at paths.shield");
  const auto cases = load_benchmark(cfg.paths.benchmark_dir);
  const auto rows = sweep_sentences(model, cases, *shield, load_corpus_cfg(cfg), cfg.eval.sweep_k, cfg.eval_options());
  for (const auto& r : rows)
    out << "k=" << r.k << " ASR " << fixed(r.asr) << " latency_s " << fixed(r.mean_latency, 6) << "\n";
  emit_report(report_rows(rows), report_path(cfg, "sweep.csv"));
}

void cmd_timing(const RunConfig& cfg, std::ostream& out) {
  const ModelBundle model = load_checkpoint(fs::path(cfg.paths.checkpoint));
  const auto shield = maybe_shield(cfg);
  const InstructionCorpus corpus = load_corpus_cfg(cfg);
  const auto cases = load_benchmark(cfg.paths.benchmark_dir);
  const auto rows = timing_profile(model, cases, shield ? &*shield : nullptr, &corpus, cfg.eval.settings,
                                   cfg.eval_options());
  for (const auto& r : rows)
    out << to_string(r.setting) << " " << to_string(r.label) << " mean " << fixed(r.latency.mean_total, 6)
        << " s, defense " << fixed(r.latency.mean_defense, 6) << " s\n";
  emit_report(report_rows(rows), report_path(cfg, "timing.csv"));
}

void cmd_report(const RunConfig& cfg, std::ostream& out) {
  std::ostringstream summary;
  for (const char* name : {"evaluate.csv", "text_attack.csv", "attack.csv", "transfer.csv", "sweep.csv", "timing.csv"}) {
    const fs::path p = report_path(cfg, name);
    if (!fs::exists(p)) continue;
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    summary << "== " << name << "\n";
    for (const auto& r : parse_report(ss.str())) {
      if (!r.category.empty()) continue;
      summary << r.setting << " " << r.label;
      if (r.k) summary << " k=" << *r.k;
      if (r.asr) summary << " ASR=" << fixed(*r.asr);
      if (r.pr) summary << " PR=" << fixed(*r.pr);
      if (r.mean_latency_s) summary << " latency_s=" << fixed(*r.mean_latency_s, 6);
      if (r.defense_latency_s) summary << " defense_s=" << fixed(*r.defense_latency_s, 6);
      summary << "\n";
    }
  }
  const std::string text = summary.str();
  if (text.empty()) throw ConfigError("no reports found in " + cfg.paths.report_dir);
  std::ofstream f(report_path(cfg, "summary.txt"), std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write summary.txt");
  out << text;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> kSubs = {"gen-bench", "train-toy", "synth-shield", "verify-shield",
                                                 "infer",     "attack",    "evaluate",     "transfer",
                                                 "sweep",     "timing",    "report"};
  return kSubs;
}

void dispatch(const std::string& sub, const RunConfig& cfg, const CommandArgs& args, std::ostream& out,
              std::ostream& log) {
  if (sub == "gen-bench") return cmd_gen_bench(cfg, out);
  if (sub == "train-toy") return cmd_train(cfg, out, log);
  if (sub == "synth-shield") return cmd_synth(cfg, out, log);
  if (sub == "verify-shield") return cmd_verify(cfg, out, log);
  if (sub == "infer") return cmd_infer(cfg, args, out);
  if (sub == "attack") return cmd_attack(cfg, args, out, log);
  if (sub == "evaluate") return cmd_evaluate(cfg, out);
  if (sub == "transfer") return cmd_transfer(cfg, out);
  if (sub == "sweep") return cmd_sweep(cfg, out);
  if (sub == "timing") return cmd_timing(cfg, out);
  if (sub == "report") return cmd_report(cfg, out);
  throw UsageError("unknown subcommand '" + sub + "'");
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Embedded security instructions toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.allow_extras();
  std::string config_file;
  std::vector<std::string> sets;
  app.add_option("-c,--config", config_file, "key=value configuration file");
  app.add_option("--set", sets, "override as key=value (repeatable)");
  CommandArgs args;
  for (const auto& name : subcommands()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->allow_extras();
    if (name == "infer" || name == "attack") {
      sub->add_option("--image", args.image, "input raster (PPM)");
      sub->add_option("--text", args.text, "query text");
      sub->add_option("--output", args.output, "output path");
    }
    if (name == "infer") sub->add_option("--setting", args.setting, "raw_input, def_image, def_text or def_image_and_text");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  std::vector<Override> overrides;
  auto add_override = [&](const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("expected key=value, got '" + kv + "'");
    overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  };
  RunConfig cfg;
  try {
    for (const auto& s : sets) add_override(s);
    auto extras = chosen->remaining();
    if (extras.empty()) extras = app.remaining();
    for (std::size_t i = 0; i < extras.size(); ++i) {
      const std::string& a = extras[i];
      if (!a.starts_with("--")) throw UsageError("unexpected argument '" + a + "'");
      if (a.find('=') != std::string::npos)
        add_override(a.substr(2));
      else if (i + 1 < extras.size())
        add_override(a.substr(2) + "=" + extras[++i]);
      else
        throw UsageError("flag '" + a + "' needs a value");
    }
    cfg = parse_config(config_file.empty() ? std::nullopt : std::optional<fs::path>(config_file), overrides);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  err << "# " << chosen->get_name() << " with resolved config\n" << render_config(cfg);
  try {
    dispatch(chosen->get_name(), cfg, args, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace esiii::cli
