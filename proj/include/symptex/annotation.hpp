#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "symptex/experiment.hpp"

namespace symptex {

struct LocatedExplanation {
  std::string text;
  // Code-point offsets of the first verbatim occurrence in the post, if any.
  std::optional<std::size_t> char_start;
  std::optional<std::size_t> char_end;
};

/// One positive prediction as shown to assessors. Carries no gold label and
/// no model identity.
struct AnnotationItem {
  std::string item_id;
  std::string post_id;
  std::string post_text;
  std::vector<LocatedExplanation> explanations;
  std::string run_id;
  std::size_t order = 0;
};

struct Judgment {
  std::string item_id;
  std::string assessor_id;
  int relevance = 0;  // 1 relevant, 0 non-relevant
  std::chrono::milliseconds elapsed{0};
  std::string submitted_at;
};

std::vector<LocatedExplanation> locate_explanations(const std::string& post_text,
                                                    const std::vector<std::string>& explanations);

/// Item-by-assessor relevance labels; nullopt where no judgment exists.
struct LabelTable {
  std::vector<std::string> item_ids;
  std::vector<std::string> assessors;
  std::vector<std::vector<std::optional<int>>> labels;  // [item][assessor]
};

struct PairAgreement {
  std::string first;
  std::string second;
  std::size_t co_judged = 0;
  std::size_t agreed = 0;
  std::optional<double> fraction;  // unset when the pair shares no item
};

struct AgreementReport {
  std::vector<PairAgreement> pairs;  // assessor order, i < j
  std::optional<double> average;     // mean over pairs with a fraction
};

/// Raw percent agreement for every assessor pair.
AgreementReport pairwise_agreement(const LabelTable& table);

struct AssessorSummary {
  std::string assessor_id;
  std::size_t judged = 0;
  std::size_t relevant = 0;
  std::optional<double> relevant_fraction;
  long long elapsed_ms = 0;
};

struct SessionStats {
  std::size_t items = 0;
  std::vector<AssessorSummary> assessors;
  AgreementReport agreement;
  std::size_t majority_relevant = 0;  // relevant for at least ceil(k/2) of k assessors
  std::size_t unanimous_relevant = 0;
  std::size_t unanimous_non_relevant = 0;
};

SessionStats consensus_stats(const LabelTable& table);

nlohmann::ordered_json to_json(const SessionStats& s);
nlohmann::ordered_json to_json(const AnnotationItem& item);

/// A judging session over one run, persisted under a directory as
/// session.json plus an append-only judgments.jsonl. Safe to share between
/// threads; writes are serialized and reach disk before record() returns.
class AnnotationSession {
 public:
  /// One item per positive prediction of `run`, in record order.
  static std::unique_ptr<AnnotationSession> create(const RunRecord& run,
                                                   std::vector<std::string> assessors,
                                                   const std::filesystem::path& dir);
  static std::unique_ptr<AnnotationSession> open(const std::filesystem::path& dir);

  const std::string& id() const { return id_; }
  const std::vector<AnnotationItem>& items() const { return items_; }
  const std::vector<std::string>& assessors() const { return assessors_; }
  bool has_assessor(const std::string& a) const;
  const AnnotationItem* find_item(const std::string& item_id) const;

  /// Validates, persists, then applies. A later judgment for the same
  /// (item, assessor) replaces the earlier one.
  void record(Judgment j);

  std::optional<Judgment> judgment(const std::string& item_id, const std::string& assessor) const;
  std::vector<Judgment> judgments() const;

  /// First item in display order the assessor has not judged.
  std::optional<std::size_t> next_for(const std::string& assessor) const;
  std::size_t judged_count(const std::string& assessor) const;

  LabelTable label_table() const;
  SessionStats stats() const;

 private:
  AnnotationSession() = default;
  void apply(Judgment j);

  std::string id_;
  std::string run_id_;
  std::filesystem::path dir_;
  std::vector<AnnotationItem> items_;
  std::vector<std::string> assessors_;
  std::map<std::string, std::size_t> item_index_;

  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, Judgment> judgments_;
};

/// Columns: item_id, assessor_id, Post, Explanation, Relevant Explanation.
/// Multiple explanations share one cell, one per line. Unjudged rows leave
/// the last column empty.
void export_csv(const AnnotationSession& session, const std::filesystem::path& path);

/// Records every row with a 0/1 in "Relevant Explanation". Returns the
/// number of judgments recorded.
std::size_t import_csv(AnnotationSession& session, const std::filesystem::path& path);

/// assessor_id, judged, elapsed_ms totals.
std::string elapsed_summary_csv(const AnnotationSession& session);

std::vector<std::vector<std::string>> parse_csv(const std::string& text);
std::string csv_field(const std::string& s);

}  // namespace symptex
