#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "symptex/corpus.hpp"
#include "symptex/format.hpp"
#include "symptex/inference.hpp"
#include "symptex/metrics.hpp"

namespace symptex {

enum class PipelineMode { SingleStep, TwoStep, FewShot };

std::string_view to_string(PipelineMode m);
PipelineMode parse_pipeline_mode(std::string_view s);

struct PipelineConfig {
  PipelineMode mode = PipelineMode::SingleStep;
  std::string method_label;
  BackendSpec backend;                   // single_step and few_shot
  std::optional<BackendSpec> classifier;  // two_step
  std::optional<BackendSpec> explainer;   // two_step
  FewShotConfig fewshot;
  std::size_t input_char_budget = kDefaultInputCharBudget;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs";
  std::optional<std::string> run_id;
  bool persist = true;
};

void validate(const PipelineConfig& cfg);
std::string backend_fingerprint(const PipelineConfig& cfg);
nlohmann::ordered_json to_json(const PipelineConfig& cfg);

struct PostRecord {
  std::string post_id;
  Prediction prediction;  // carries the raw generation
  std::optional<std::string> explainer_raw;
  Label gold_label = Label::Negative;
  std::vector<ExplanationSpan> gold_explanations;
  std::string post_text;
  double latency_ms = 0.0;
  std::optional<std::string> error;

  Post gold_post() const;
};

struct RunRecord {
  std::string run_id;
  std::string setting_name;
  std::string method_label;
  std::string mode;
  std::string backend_fingerprint;
  std::uint64_t seed = 0;
  std::string created_at;
  std::size_t train_size = 0;
  std::size_t failures = 0;
  nlohmann::ordered_json config;
  std::vector<PostRecord> records;
  std::filesystem::path dir;  // empty when not persisted
};

/// Prediction fields of a record, without timing. Two runs of a
/// deterministic backend produce identical payloads.
std::string prediction_payload(const PostRecord& r);

std::string new_run_id();

/// Runs the configured pipeline over the setting's test split. When
/// `cfg.persist` is set the record is written to <out_dir>/<run_id>/ before
/// it is returned.
RunRecord execute_run(const ExperimentSetting& setting, const PipelineConfig& cfg,
                      CallLog* log = nullptr);

void persist_run(RunRecord& record, const std::filesystem::path& out_dir,
                 const CallLog* log = nullptr);
RunRecord load_run(const std::filesystem::path& run_dir);

/// Scores a run purely from its stored records.
MetricReport evaluate_run(const RunRecord& record);

/// Canonical text of report.json.
std::string report_document(const RunRecord& record, const MetricReport& report);
void write_report(const RunRecord& record, const MetricReport& report);

struct AblationPoint {
  std::size_t n_train = 0;
  MetricReport report;
  std::string run_id;
};

using AblationSeries = std::vector<AblationPoint>;

/// One subsample + run + report per size, all on the same test split.
AblationSeries ablation_curve(const ExperimentSetting& setting, const std::vector<std::size_t>& sizes,
                              const PipelineConfig& cfg);

/// One point per step of shuffled external training posts.
AblationSeries external_mix_curve(const ExperimentSetting& setting,
                                  const std::vector<Post>& external, std::size_t step,
                                  const PipelineConfig& cfg);

std::string ablation_csv(const AblationSeries& series);
std::string ablation_svg(const AblationSeries& series, const std::string& title);

struct ReportRow {
  std::string setting;
  std::string method;
  MetricReport report;
};

struct ReportTable {
  std::string text;
  nlohmann::ordered_json document;
};

/// Rows are settings (in canonical order), columns are methods (sorted by
/// name), each cell holds F1, TPs, ROUGE, BLEU and TF1.
ReportTable report_table(const std::vector<ReportRow>& rows);

ConfusionCounts confusion_figure_data(const RunRecord& record);
std::string confusion_svg(const ConfusionCounts& c, const std::string& title);

}  // namespace symptex
