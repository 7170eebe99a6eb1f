#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "symptex/corpus.hpp"

namespace symptex {

inline constexpr std::string_view kExplainPrefix = "explain symptom post: ";
inline constexpr std::string_view kClassifyPrefix = "symptom post: ";
inline constexpr std::string_view kExplainPositivePrefix = "explain positive post: ";
inline constexpr std::string_view kExplanationDelimiter = " explanation: ";
inline constexpr std::size_t kDefaultInputCharBudget = 8000;

struct Seq2SeqExample {
  std::string post_id;
  std::string input;
  std::string target;
  bool truncated = false;
};

enum class ParseStatus { Ok, Malformed };

std::string_view to_string(ParseStatus s);
ParseStatus parse_parse_status(std::string_view s);

struct Prediction {
  std::string post_id;
  Label label = Label::Negative;
  std::vector<std::string> explanations;
  std::string raw;
  ParseStatus parse_status = ParseStatus::Ok;

  bool positive() const { return label == Label::Positive; }
};

struct EncodedInput {
  std::string text;
  bool truncated = false;
};

/// `explain symptom post: <text>`, with the post body cut to `char_budget`
/// code points.
EncodedInput encode_explain_input(const Post& post,
                                  std::size_t char_budget = kDefaultInputCharBudget);

/// "negative", or "positive" followed by one " explanation: <text>" clause
/// per explanation. Refuses explanations that are empty or contain the
/// clause delimiter, since they would not parse back.
std::string encode_target(Label label, const std::vector<std::string>& explanations);

/// Total parser for generations. Never throws; output that fails the
/// grammar comes back as a malformed negative.
Prediction parse_output(std::string_view raw);

/// Parses an explainer-only generation ("explanation: a explanation: b").
Prediction parse_explainer_output(std::string_view raw);

std::vector<std::string> explanation_texts(const Post& post);

Seq2SeqExample encode_single_step(const Post& post,
                                  std::size_t char_budget = kDefaultInputCharBudget);
Seq2SeqExample encode_classify_only(const Post& post,
                                    std::size_t char_budget = kDefaultInputCharBudget);
/// Explainer input for a post the classifier called positive.
EncodedInput encode_explain_positive_input(const Post& post,
                                           std::size_t char_budget = kDefaultInputCharBudget);

/// Only defined for gold-positive posts.
Seq2SeqExample encode_explain_only(const Post& post,
                                   std::size_t char_budget = kDefaultInputCharBudget);

/// The explanation clauses alone, as emitted by a two-step explainer.
std::string encode_explanation_clauses(const std::vector<std::string>& explanations);

enum class TrainingMode { SingleStep, ClassifyOnly, ExplainOnly };
TrainingMode parse_training_mode(std::string_view s);

/// Writes {post_id, input, target} lines. ExplainOnly skips negative posts.
/// Returns the number of lines written.
std::size_t export_training(const std::filesystem::path& path, const std::vector<Post>& posts,
                            TrainingMode mode,
                            std::size_t char_budget = kDefaultInputCharBudget);

}  // namespace symptex
