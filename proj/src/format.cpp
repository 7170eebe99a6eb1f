#include "symptex/format.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"
#include "symptex/error.hpp"
#include "symptex/utf8.hpp"

namespace symptex {

std::string_view to_string(ParseStatus s) { return s == ParseStatus::Ok ? "ok" : "malformed"; }

ParseStatus parse_parse_status(std::string_view s) {
  if (s == "ok") return ParseStatus::Ok;
  if (s == "malformed") return ParseStatus::Malformed;
  throw ValidationError("unknown parse status '" + std::string(s) + "'");
}

namespace {

EncodedInput with_prefix(std::string_view prefix, const Post& post, std::size_t budget) {
  if (post.text.empty()) throw ValidationError("post " + post.id + ": empty text");
  EncodedInput out;
  out.truncated = utf8::length(post.text) > budget;
  out.text = std::string(prefix) + (out.truncated ? utf8::prefix(post.text, budget) : post.text);
  return out;
}

void check_clause(const std::string& e) {
  if (e.empty()) throw ValidationError("empty explanation cannot be encoded");
  if (e.find(kExplanationDelimiter) != std::string::npos)
    throw ValidationError("explanation contains the clause delimiter: \"" + e + "\"");
}

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool iequals_prefix(std::string_view s, std::string_view word) {
  if (s.size() < word.size()) return false;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != word[i]) return false;
  }
  return true;
}

// Label followed by end of string or a non-word character.
bool starts_with_label(std::string_view s, std::string_view word) {
  if (!iequals_prefix(s, word)) return false;
  if (s.size() == word.size()) return true;
  const auto next = static_cast<unsigned char>(s[word.size()]);
  return !(std::isalnum(next) || next == '_' || next >= 0x80);
}

Prediction malformed(std::string_view raw) {
  Prediction p;
  p.raw = std::string(raw);
  p.label = Label::Negative;
  p.parse_status = ParseStatus::Malformed;
  return p;
}

// `rest` is whatever follows the "positive" label. Empty means no clauses.
bool split_clauses(std::string_view rest, std::vector<std::string>& out) {
  if (rest.empty()) return true;
  if (rest.substr(0, kExplanationDelimiter.size()) != kExplanationDelimiter) return false;
  rest.remove_prefix(kExplanationDelimiter.size());
  while (true) {
    const auto at = rest.find(kExplanationDelimiter);
    const auto clause = rest.substr(0, at);
    if (clause.empty()) return false;
    out.emplace_back(clause);
    if (at == std::string_view::npos) return true;
    rest.remove_prefix(at + kExplanationDelimiter.size());
  }
}

}  // namespace

EncodedInput encode_explain_input(const Post& post, std::size_t char_budget) {
  return with_prefix(kExplainPrefix, post, char_budget);
}

std::string encode_target(Label label, const std::vector<std::string>& explanations) {
  if (label == Label::Negative) {
    if (!explanations.empty()) throw ValidationError("negative target cannot carry explanations");
    return "negative";
  }
  if (explanations.empty()) throw ValidationError("positive target needs at least one explanation");
  std::string out = "positive";
  for (const auto& e : explanations) {
    check_clause(e);
    out += kExplanationDelimiter;
    out += e;
  }
  return out;
}

Prediction parse_output(std::string_view raw) {
  const auto text = trim(raw);
  if (starts_with_label(text, "negative")) {
    Prediction p;
    p.raw = std::string(raw);
    p.label = Label::Negative;
    return p;
  }
  if (starts_with_label(text, "positive")) {
    Prediction p;
    p.raw = std::string(raw);
    p.label = Label::Positive;
    if (!split_clauses(text.substr(std::string_view("positive").size()), p.explanations))
      return malformed(raw);
    return p;
  }
  return malformed(raw);
}

Prediction parse_explainer_output(std::string_view raw) {
  // Re-attach the label the classifier already decided on.
  auto p = parse_output("positive " + std::string(trim(raw)));
  p.raw = std::string(raw);
  if (p.parse_status == ParseStatus::Ok && p.explanations.empty()) {
    p = malformed(raw);
  }
  return p;
}

std::vector<std::string> explanation_texts(const Post& post) {
  std::vector<std::string> out;
  out.reserve(post.gold_explanations.size());
  for (const auto& e : post.gold_explanations) out.push_back(e.text);
  return out;
}

Seq2SeqExample encode_single_step(const Post& post, std::size_t char_budget) {
  auto in = encode_explain_input(post, char_budget);
  return {post.id, std::move(in.text), encode_target(post.gold_label, explanation_texts(post)),
          in.truncated};
}

Seq2SeqExample encode_classify_only(const Post& post, std::size_t char_budget) {
  auto in = with_prefix(kClassifyPrefix, post, char_budget);
  return {post.id, std::move(in.text), std::string(to_string(post.gold_label)), in.truncated};
}

std::string encode_explanation_clauses(const std::vector<std::string>& explanations) {
  if (explanations.empty()) throw ValidationError("explainer target needs at least one explanation");
  std::string out;
  for (const auto& e : explanations) {
    check_clause(e);
    if (!out.empty()) out += ' ';
    out += "explanation: ";
    out += e;
  }
  return out;
}

EncodedInput encode_explain_positive_input(const Post& post, std::size_t char_budget) {
  return with_prefix(kExplainPositivePrefix, post, char_budget);
}

Seq2SeqExample encode_explain_only(const Post& post, std::size_t char_budget) {
  if (!post.positive())
    throw ValidationError("post " + post.id + ": explainer examples need a gold-positive post");
  auto in = encode_explain_positive_input(post, char_budget);
  return {post.id, std::move(in.text), encode_explanation_clauses(explanation_texts(post)),
          in.truncated};
}

TrainingMode parse_training_mode(std::string_view s) {
  if (s == "single_step") return TrainingMode::SingleStep;
  if (s == "classify_only") return TrainingMode::ClassifyOnly;
  if (s == "explain_only") return TrainingMode::ExplainOnly;
  throw ValidationError("unknown training mode '" + std::string(s) +
                        "' (expected single_step, classify_only or explain_only)");
}

std::size_t export_training(const std::filesystem::path& path, const std::vector<Post>& posts,
                            TrainingMode mode, std::size_t char_budget) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  std::size_t n = 0;
  for (const auto& p : posts) {
    Seq2SeqExample ex;
    switch (mode) {
      case TrainingMode::SingleStep: ex = encode_single_step(p, char_budget); break;
      case TrainingMode::ClassifyOnly: ex = encode_classify_only(p, char_budget); break;
      case TrainingMode::ExplainOnly:
        if (!p.positive()) continue;
        ex = encode_explain_only(p, char_budget);
        break;
    }
    nlohmann::json j{{"post_id", ex.post_id}, {"input", ex.input}, {"target", ex.target}};
    if (ex.truncated) j["truncated"] = true;
    out << j.dump() << '\n';
    ++n;
  }
  return n;
}

}  // namespace symptex
