#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "esiii/benchmark.hpp"
#include "esiii/compose.hpp"
#include "esiii/corpus.hpp"
#include "esiii/judge.hpp"
#include "esiii/model.hpp"
#include "esiii/shield.hpp"

namespace esiii {

enum class Setting { raw_input, def_image, def_text, def_image_and_text };

std::string to_string(Setting s);
Setting parse_setting(std::string_view s);
const std::vector<Setting>& all_settings();
bool uses_image_defense(Setting s);
bool uses_text_defense(Setting s);

struct EvalRecord {
  std::string case_id;
  Setting setting = Setting::raw_input;
  Label label = Label::benign;
  int category = 0;
  std::string response;
  bool harmful_verdict = false;
  std::optional<bool> pass_verdict;  // set for benign cases only
  double latency_total = 0.0;
  double latency_defense = 0.0;
};

// Fraction of harmful records judged harmful. Benign records are ignored.
double compute_asr(std::span<const EvalRecord> records);
// Fraction of benign records that pass. Harmful records are ignored.
double compute_pr(std::span<const EvalRecord> records);

struct LatencyStats {
  double mean_total = 0.0, median_total = 0.0;
  double mean_defense = 0.0, median_defense = 0.0;
};

LatencyStats latency_stats(std::span<const EvalRecord> records);

struct EvalReport {
  std::optional<double> asr, pr;
  std::size_t n_harmful = 0, n_benign = 0;
  std::map<int, std::optional<double>> per_category_asr;  // every category, empty when unseen
  LatencyStats latency;
};

EvalReport summarize(std::span<const EvalRecord> records);

struct EvalOptions {
  int k = kDefaultPrependCount;
  std::uint64_t seed = 0;
  int max_len = 24;
  std::string judge = "rule";
};

// One record per case, in benchmark order. Each case draws its prompt seed
// from (seed, case id), so results do not depend on case order.
std::vector<EvalRecord> run_setting(const ModelBundle& model, std::span<const QueryCase> cases,
                                    const ShieldArtifact* shield, const InstructionCorpus* corpus,
                                    Setting setting, const EvalOptions& options);

struct TransferCell {
  double asr = 0.0;
  double pr = 0.0;
};

// Entry (i, j): shield i on model j under def_image_and_text.
std::vector<std::vector<TransferCell>> transfer_matrix(std::span<const ModelBundle> models,
                                                       std::span<const ShieldArtifact> shields,
                                                       std::span<const QueryCase> cases,
                                                       const InstructionCorpus& corpus,
                                                       const EvalOptions& options);

struct SweepRow {
  int k = 0;
  double asr = 0.0;
  double mean_latency = 0.0;
};

std::vector<SweepRow> sweep_sentences(const ModelBundle& model, std::span<const QueryCase> cases,
                                      const ShieldArtifact& shield, const InstructionCorpus& corpus,
                                      std::span<const int> k_values, const EvalOptions& options);

struct TimingRow {
  Setting setting = Setting::raw_input;
  Label label = Label::benign;
  std::size_t n = 0;
  LatencyStats latency;
};

// Settings x {benign, harmful} latency table.
std::vector<TimingRow> timing_profile(const ModelBundle& model, std::span<const QueryCase> cases,
                                      const ShieldArtifact* shield, const InstructionCorpus* corpus,
                                      std::span<const Setting> settings, const EvalOptions& options);

// One CSV row. Empty optionals print as empty cells.
struct ReportRow {
  std::string setting;
  std::string label;
  std::size_t n = 0;
  std::optional<double> asr, pr, mean_latency_s, defense_latency_s;
  std::string category;
  std::optional<int> k;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

inline constexpr const char* kReportHeader =
    "setting,label,n,asr,pr,mean_latency_s,defense_latency_s,category,k";

// Summary rows (harmful, benign) followed by one harmful row per category.
std::vector<ReportRow> report_rows(Setting setting, std::span<const EvalRecord> records,
                                   bool with_latency);
std::vector<ReportRow> report_rows(std::span<const SweepRow> sweep);
std::vector<ReportRow> report_rows(std::span<const TimingRow> timing);
std::vector<ReportRow> report_rows(const std::vector<std::vector<TransferCell>>& matrix);

std::string format_report(std::span<const ReportRow> rows);
std::vector<ReportRow> parse_report(const std::string& csv);
void emit_report(std::span<const ReportRow> rows, const std::filesystem::path& path);

}  // namespace esiii
