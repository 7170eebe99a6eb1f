#include "symptex/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "symptex/error.hpp"

namespace symptex {
namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

unsigned char lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c - 'A' + 'a') : c;
}

double f1(double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& s : parts) {
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

}  // namespace

std::vector<TokenSpan> tokenize_with_offsets(std::string_view text) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    TokenSpan t;
    t.begin = i;
    while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) {
      t.token.push_back(static_cast<char>(lower(static_cast<unsigned char>(text[i]))));
      ++i;
    }
    t.end = i;
    out.push_back(std::move(t));
  }
  return out;
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  for (auto& t : tokenize_with_offsets(text)) out.push_back(std::move(t.token));
  return out;
}

ClassificationScores classification_scores(const ConfusionCounts& c) {
  ClassificationScores s;
  s.confusion = c;
  const auto total = static_cast<double>(c.total());
  // Pooled over both classes: every error is one FP for one class and one FN
  // for the other, so micro P = micro R = accuracy.
  s.micro_f1 = total > 0 ? static_cast<double>(c.tp + c.tn) / total : 0.0;
  const double p = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  const double r = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  s.positive_f1 = f1(p, r);
  return s;
}

ClassificationScores classification_scores(const std::vector<Prediction>& preds,
                                           const std::vector<Post>& golds) {
  if (preds.size() != golds.size())
    throw ValidationError("prediction/gold count mismatch: " + std::to_string(preds.size()) +
                          " vs " + std::to_string(golds.size()));
  ConfusionCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].post_id != golds[i].id)
      throw ValidationError("prediction " + preds[i].post_id + " is aligned with gold post " +
                            golds[i].id);
    const bool p = preds[i].positive();
    const bool g = golds[i].positive();
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return classification_scores(c);
}

double rouge_l_f1(const Tokens& hyp, const Tokens& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  std::vector<std::size_t> prev(ref.size() + 1, 0), cur(ref.size() + 1, 0);
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      cur[j] = hyp[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const auto lcs = static_cast<double>(prev[ref.size()]);
  if (lcs == 0.0) return 0.0;
  return f1(lcs / static_cast<double>(hyp.size()), lcs / static_cast<double>(ref.size()));
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Tokens& t, std::size_t n) {
  NgramCounts out;
  if (t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    ++out[std::vector<std::string>(t.begin() + static_cast<std::ptrdiff_t>(i),
                                   t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

}  // namespace

double corpus_bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  if (hyps.size() != refs.size())
    throw ValidationError("corpus_bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                          std::to_string(refs.size()) + " references");
  constexpr std::size_t kMaxN = 4;
  std::array<std::size_t, kMaxN> matched{}, total{};
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    hyp_len += hyps[k].size();
    ref_len += refs[k].size();
    for (std::size_t n = 1; n <= kMaxN; ++n) {
      const auto h = ngrams(hyps[k], n);
      const auto r = ngrams(refs[k], n);
      for (const auto& [gram, count] : h) {
        total[n - 1] += count;
        auto it = r.find(gram);
        if (it != r.end()) matched[n - 1] += std::min(count, it->second);
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kMaxN; ++n) {
    if (matched[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
  }
  const double bp = hyp_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
                        : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(kMaxN));
}

namespace {

struct Coverage {
  std::set<std::size_t> positions;  // indices into the post's tokens
  std::vector<std::string> bag;     // tokens of explanations not found verbatim
};

Coverage cover(const std::vector<std::string>& explanations, std::string_view text,
               const std::vector<TokenSpan>& post_tokens) {
  Coverage c;
  for (const auto& e : explanations) {
    const auto at = e.empty() ? std::string_view::npos : text.find(e);
    if (at == std::string_view::npos) {
      for (auto& t : tokenize(e)) c.bag.push_back(std::move(t));
      continue;
    }
    const auto end = at + e.size();
    for (std::size_t i = 0; i < post_tokens.size(); ++i) {
      if (post_tokens[i].begin < end && post_tokens[i].end > at) c.positions.insert(i);
    }
  }
  return c;
}

}  // namespace

double token_f1(const std::vector<std::string>& pred_explanations,
                const std::vector<ExplanationSpan>& gold_spans, std::string_view post_text) {
  const auto post_tokens = tokenize_with_offsets(post_text);
  std::vector<std::string> gold_texts;
  for (const auto& g : gold_spans) gold_texts.push_back(g.text);
  const auto pred = cover(pred_explanations, post_text, post_tokens);
  const auto gold = cover(gold_texts, post_text, post_tokens);

  const std::size_t pred_size = pred.positions.size() + pred.bag.size();
  const std::size_t gold_size = gold.positions.size() + gold.bag.size();
  if (pred_size == 0 || gold_size == 0) return 0.0;

  std::size_t overlap = 0;
  // Per token string: a = placed pred, b = bagged pred, c = placed gold,
  // d = bagged gold. Placed tokens already met by position cannot match
  // another position, so the best string-level matching is min(a+b, c+d, b+d).
  std::unordered_map<std::string, std::array<std::size_t, 4>> leftovers;
  for (auto i : pred.positions) {
    if (gold.positions.count(i)) ++overlap;
    else ++leftovers[post_tokens[i].token][0];
  }
  for (const auto& t : pred.bag) ++leftovers[t][1];
  for (auto i : gold.positions) {
    if (!pred.positions.count(i)) ++leftovers[post_tokens[i].token][2];
  }
  for (const auto& t : gold.bag) ++leftovers[t][3];
  for (const auto& [tok, n] : leftovers) {
    overlap += std::min({n[0] + n[1], n[2] + n[3], n[1] + n[3]});
  }
  const double p = static_cast<double>(overlap) / static_cast<double>(pred_size);
  const double r = static_cast<double>(overlap) / static_cast<double>(gold_size);
  return f1(p, r);
}

ExtractivenessResult extractiveness_violation_rate(const std::vector<Prediction>& preds,
                                                   const std::vector<Post>& posts) {
  std::unordered_map<std::string, const Post*> by_id;
  for (const auto& p : posts) by_id.emplace(p.id, &p);
  ExtractivenessResult r;
  for (const auto& pred : preds) {
    if (!pred.positive()) continue;
    ++r.positives;
    auto it = by_id.find(pred.post_id);
    if (it == by_id.end()) throw ValidationError("prediction for unknown post " + pred.post_id);
    const auto& text = it->second->text;
    const bool bad = std::any_of(pred.explanations.begin(), pred.explanations.end(),
                                 [&text](const std::string& e) {
                                   return e.empty() || text.find(e) == std::string::npos;
                                 });
    if (bad) ++r.violations;
  }
  r.rate = r.positives ? static_cast<double>(r.violations) / static_cast<double>(r.positives) : 0.0;
  return r;
}

ExplanationScores explanation_scores(const std::vector<Prediction>& preds,
                                     const std::vector<Post>& golds) {
  if (preds.size() != golds.size())
    throw ValidationError("explanation_scores: prediction/gold count mismatch");
  ExplanationScores s;
  std::vector<Tokens> hyps, refs;
  double rouge_sum = 0.0, tf1_sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].post_id != golds[i].id)
      throw ValidationError("prediction " + preds[i].post_id + " is aligned with gold post " +
                            golds[i].id);
    if (!preds[i].positive() || !golds[i].positive()) continue;
    auto hyp = tokenize(join(preds[i].explanations));
    auto ref = tokenize(join(explanation_texts(golds[i])));
    rouge_sum += rouge_l_f1(hyp, ref);
    tf1_sum += token_f1(preds[i].explanations, golds[i].gold_explanations, golds[i].text);
    hyps.push_back(std::move(hyp));
    refs.push_back(std::move(ref));
  }
  s.n_explained = hyps.size();
  if (s.n_explained == 0) return s;
  const auto n = static_cast<double>(s.n_explained);
  s.rouge_l_f1 = rouge_sum / n;
  s.token_f1 = tf1_sum / n;
  s.corpus_bleu = corpus_bleu(hyps, refs);
  return s;
}

MetricReport score(const std::vector<Prediction>& preds, const std::vector<Post>& golds) {
  const auto cls = classification_scores(preds, golds);
  const auto ex = explanation_scores(preds, golds);
  const auto ext = extractiveness_violation_rate(preds, golds);
  MetricReport r;
  r.micro_f1 = cls.micro_f1;
  r.positive_f1 = cls.positive_f1;
  r.confusion = cls.confusion;
  r.rouge_l_f1 = ex.rouge_l_f1;
  r.corpus_bleu = ex.corpus_bleu;
  r.token_f1 = ex.token_f1;
  r.n_explained = ex.n_explained;
  r.extractiveness_violation_rate = ext.rate;
  r.n_predicted_positive = ext.positives;
  r.n_malformed = static_cast<std::size_t>(
      std::count_if(preds.begin(), preds.end(),
                    [](const Prediction& p) { return p.parse_status == ParseStatus::Malformed; }));
  return r;
}

nlohmann::ordered_json to_json(const MetricReport& r) {
  return nlohmann::ordered_json{{"micro_f1", r.micro_f1},
                                {"positive_f1", r.positive_f1},
                                {"tp", r.confusion.tp},
                                {"fp", r.confusion.fp},
                                {"fn", r.confusion.fn},
                                {"tn", r.confusion.tn},
                                {"rouge_l_f1", r.rouge_l_f1},
                                {"corpus_bleu", r.corpus_bleu},
                                {"token_f1", r.token_f1},
                                {"extractiveness_violation_rate", r.extractiveness_violation_rate},
                                {"n_explained", r.n_explained},
                                {"n_predicted_positive", r.n_predicted_positive},
                                {"n_malformed", r.n_malformed}};
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.micro_f1 = j.at("micro_f1").get<double>();
  r.positive_f1 = j.at("positive_f1").get<double>();
  r.confusion = {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
                 j.at("fn").get<std::size_t>(), j.at("tn").get<std::size_t>()};
  r.rouge_l_f1 = j.at("rouge_l_f1").get<double>();
  r.corpus_bleu = j.at("corpus_bleu").get<double>();
  r.token_f1 = j.at("token_f1").get<double>();
  r.extractiveness_violation_rate = j.at("extractiveness_violation_rate").get<double>();
  r.n_explained = j.at("n_explained").get<std::size_t>();
  r.n_predicted_positive = j.value("n_predicted_positive", std::size_t{0});
  r.n_malformed = j.value("n_malformed", std::size_t{0});
  return r;
}

}  // namespace symptex
