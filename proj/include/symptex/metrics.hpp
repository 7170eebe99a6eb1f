#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "symptex/corpus.hpp"
#include "symptex/format.hpp"

namespace symptex {

using Tokens = std::vector<std::string>;

/// Lowercased maximal runs of word characters. ASCII letters and digits are
/// word characters, as is every byte of a multi-byte UTF-8 sequence; all
/// other characters separate tokens and are dropped.
Tokens tokenize(std::string_view text);

struct TokenSpan {
  std::string token;
  std::size_t begin = 0;  // byte offsets into the source text
  std::size_t end = 0;
};

std::vector<TokenSpan> tokenize_with_offsets(std::string_view text);

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct ClassificationScores {
  double micro_f1 = 0.0;
  double positive_f1 = 0.0;
  ConfusionCounts confusion;
};

/// Micro F1 pools both label assignments, so for single-label binary data it
/// equals accuracy. Positive-class F1 is reported next to it.
ClassificationScores classification_scores(const ConfusionCounts& c);

/// Aligns predictions with golds by position and checks post ids match.
ClassificationScores classification_scores(const std::vector<Prediction>& preds,
                                           const std::vector<Post>& golds);

/// LCS-based F1. Zero when either side is empty or nothing is shared.
double rouge_l_f1(const Tokens& hypothesis, const Tokens& reference);

/// Unsmoothed corpus BLEU-4 with the standard brevity penalty. A pooled
/// n-gram precision of zero for any n in 1..4 makes the score zero.
double corpus_bleu(const std::vector<Tokens>& hypotheses, const std::vector<Tokens>& references);

/// Token-position F1 of predicted explanations against gold spans.
///
/// Each explanation is located at its first exact occurrence in
/// `post_text` and covers the post tokens it overlaps. A predicted
/// explanation that does not occur verbatim contributes its own tokens as
/// an unplaced bag, which may only match gold tokens by string.
double token_f1(const std::vector<std::string>& pred_explanations,
                const std::vector<ExplanationSpan>& gold_spans, std::string_view post_text);

struct ExtractivenessResult {
  double rate = 0.0;
  std::size_t violations = 0;
  std::size_t positives = 0;
};

/// Share of positive predictions with at least one explanation that is not
/// a verbatim substring of its post.
ExtractivenessResult extractiveness_violation_rate(const std::vector<Prediction>& preds,
                                                   const std::vector<Post>& posts);

struct ExplanationScores {
  double rouge_l_f1 = 0.0;
  double corpus_bleu = 0.0;
  double token_f1 = 0.0;
  std::size_t n_explained = 0;
};

/// Scores explanations over true positives only. Per post, predicted and gold
/// explanations are each joined by a single space. ROUGE-L and Token F1 are
/// averaged over posts; BLEU is pooled over the corpus.
ExplanationScores explanation_scores(const std::vector<Prediction>& preds,
                                     const std::vector<Post>& golds);

struct MetricReport {
  double micro_f1 = 0.0;
  double positive_f1 = 0.0;
  ConfusionCounts confusion;
  double rouge_l_f1 = 0.0;
  double corpus_bleu = 0.0;
  double token_f1 = 0.0;
  double extractiveness_violation_rate = 0.0;
  std::size_t n_explained = 0;
  std::size_t n_predicted_positive = 0;
  std::size_t n_malformed = 0;
};

MetricReport score(const std::vector<Prediction>& preds, const std::vector<Post>& golds);

/// Flat key/value document.
nlohmann::ordered_json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

}  // namespace symptex
