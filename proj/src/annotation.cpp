#include "symptex/annotation.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <ctime>
#include <fstream>
#include <sstream>

#include "symptex/error.hpp"
#include "symptex/utf8.hpp"

namespace symptex {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<LocatedExplanation> locate_explanations(const std::string& post_text,
                                                    const std::vector<std::string>& explanations) {
  std::vector<LocatedExplanation> out;
  for (const auto& e : explanations) {
    LocatedExplanation l{e, std::nullopt, std::nullopt};
    if (const auto at = e.empty() ? std::string::npos : post_text.find(e); at != std::string::npos) {
      l.char_start = utf8::cp_index(post_text, at);
      l.char_end = *l.char_start + utf8::length(e);
    }
    out.push_back(std::move(l));
  }
  return out;
}

AgreementReport pairwise_agreement(const LabelTable& t) {
  AgreementReport r;
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t a = 0; a < t.assessors.size(); ++a) {
    for (std::size_t b = a + 1; b < t.assessors.size(); ++b) {
      PairAgreement p;
      p.first = t.assessors[a];
      p.second = t.assessors[b];
      for (const auto& row : t.labels) {
        if (!row[a] || !row[b]) continue;
        ++p.co_judged;
        if (*row[a] == *row[b]) ++p.agreed;
      }
      if (p.co_judged > 0) {
        p.fraction = static_cast<double>(p.agreed) / static_cast<double>(p.co_judged);
        sum += *p.fraction;
        ++defined;
      }
      r.pairs.push_back(std::move(p));
    }
  }
  if (defined > 0) r.average = sum / static_cast<double>(defined);
  return r;
}

SessionStats consensus_stats(const LabelTable& t) {
  SessionStats s;
  s.items = t.item_ids.size();
  const std::size_t k = t.assessors.size();
  const std::size_t majority = (k + 1) / 2;
  for (const auto& a : t.assessors) {
    AssessorSummary summary;
    summary.assessor_id = a;
    s.assessors.push_back(std::move(summary));
  }
  for (const auto& row : t.labels) {
    std::size_t judged = 0, relevant = 0;
    for (std::size_t a = 0; a < k; ++a) {
      if (!row[a]) continue;
      ++judged;
      ++s.assessors[a].judged;
      if (*row[a] == 1) {
        ++relevant;
        ++s.assessors[a].relevant;
      }
    }
    if (k > 0 && relevant >= majority) ++s.majority_relevant;
    if (k > 0 && judged == k && relevant == k) ++s.unanimous_relevant;
    if (k > 0 && judged == k && relevant == 0) ++s.unanimous_non_relevant;
  }
  for (auto& a : s.assessors) {
    if (a.judged > 0)
      a.relevant_fraction = static_cast<double>(a.relevant) / static_cast<double>(a.judged);
  }
  s.agreement = pairwise_agreement(t);
  return s;
}

namespace {

ordered_json optional_number(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::string utc_now() {
  const auto t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void append_durable(const std::filesystem::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) throw ValidationError("cannot open " + path.string() + " for append");
  const std::string data = line + "\n";
  std::size_t written = 0;
  while (written < data.size()) {
    const auto n = ::write(fd, data.data() + written, data.size() - written);
    if (n < 0) {
      ::close(fd);
      throw ValidationError("write failed on " + path.string());
    }
    written += static_cast<std::size_t>(n);
  }
  const int rc = ::fsync(fd);
  ::close(fd);
  if (rc != 0) throw ValidationError("fsync failed on " + path.string());
}

ordered_json judgment_json(const Judgment& j) {
  return {{"item_id", j.item_id},
          {"assessor_id", j.assessor_id},
          {"relevance", j.relevance},
          {"elapsed_ms", j.elapsed.count()},
          {"submitted_at", j.submitted_at}};
}

Judgment judgment_from_json(const json& j) {
  Judgment out;
  out.item_id = j.at("item_id").get<std::string>();
  out.assessor_id = j.at("assessor_id").get<std::string>();
  out.relevance = j.at("relevance").get<int>();
  out.elapsed = std::chrono::milliseconds(j.value("elapsed_ms", 0LL));
  out.submitted_at = j.value("submitted_at", "");
  return out;
}

}  // namespace

ordered_json to_json(const SessionStats& s) {
  ordered_json j{{"items", s.items}};
  j["assessors"] = ordered_json::array();
  for (const auto& a : s.assessors) {
    j["assessors"].push_back({{"assessor_id", a.assessor_id},
                              {"judged", a.judged},
                              {"relevant", a.relevant},
                              {"relevant_fraction", optional_number(a.relevant_fraction)},
                              {"elapsed_ms", a.elapsed_ms}});
  }
  j["pairwise_agreement"] = ordered_json::array();
  for (const auto& p : s.agreement.pairs) {
    j["pairwise_agreement"].push_back({{"first", p.first},
                                       {"second", p.second},
                                       {"co_judged", p.co_judged},
                                       {"agreed", p.agreed},
                                       {"fraction", optional_number(p.fraction)}});
  }
  j["average_agreement"] = optional_number(s.agreement.average);
  j["majority_relevant"] = s.majority_relevant;
  j["unanimous_relevant"] = s.unanimous_relevant;
  j["unanimous_non_relevant"] = s.unanimous_non_relevant;
  return j;
}

ordered_json to_json(const AnnotationItem& item) {
  ordered_json ex = ordered_json::array();
  for (const auto& e : item.explanations) {
    ordered_json j{{"text", e.text}};
    j["start"] = e.char_start ? ordered_json(*e.char_start) : ordered_json(nullptr);
    j["end"] = e.char_end ? ordered_json(*e.char_end) : ordered_json(nullptr);
    ex.push_back(std::move(j));
  }
  return {{"item_id", item.item_id},
          {"index", item.order},
          {"post_text", item.post_text},
          {"explanations", std::move(ex)}};
}

std::unique_ptr<AnnotationSession> AnnotationSession::create(const RunRecord& run,
                                                             std::vector<std::string> assessors,
                                                             const std::filesystem::path& dir) {
  if (assessors.empty()) throw ValidationError("a session needs at least one assessor");
  for (std::size_t i = 0; i < assessors.size(); ++i) {
    if (assessors[i].empty()) throw ValidationError("empty assessor id");
    if (std::find(assessors.begin(), assessors.begin() + static_cast<std::ptrdiff_t>(i),
                  assessors[i]) != assessors.begin() + static_cast<std::ptrdiff_t>(i))
      throw ValidationError("duplicate assessor id " + assessors[i]);
  }
  std::unique_ptr<AnnotationSession> s(new AnnotationSession());
  s->id_ = run.run_id;
  s->run_id_ = run.run_id;
  s->dir_ = dir;
  s->assessors_ = std::move(assessors);
  for (const auto& r : run.records) {
    if (!r.prediction.positive()) continue;
    AnnotationItem item;
    item.order = s->items_.size();
    char id[32];
    std::snprintf(id, sizeof id, "item-%04zu", item.order + 1);
    item.item_id = id;
    item.post_id = r.post_id;
    item.post_text = r.post_text;
    item.explanations = locate_explanations(r.post_text, r.prediction.explanations);
    item.run_id = run.run_id;
    s->item_index_[item.item_id] = item.order;
    s->items_.push_back(std::move(item));
  }
  if (s->items_.empty())
    throw ValidationError("run " + run.run_id + " has no positive predictions to judge");

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create " + dir.string() + ": " + ec.message());
  ordered_json doc{{"session_id", s->id_}, {"run_id", s->run_id_}, {"assessors", s->assessors_}};
  doc["items"] = ordered_json::array();
  for (const auto& item : s->items_) {
    auto j = to_json(item);
    j["post_id"] = item.post_id;
    doc["items"].push_back(std::move(j));
  }
  std::ofstream out(dir / "session.json", std::ios::trunc);
  out << doc.dump(2) << '\n';
  if (!out) throw ValidationError("cannot write session in " + dir.string());
  // Truncate any stale judgments from an earlier session in the same place.
  std::ofstream(dir / "judgments.jsonl", std::ios::trunc);
  return s;
}

std::unique_ptr<AnnotationSession> AnnotationSession::open(const std::filesystem::path& dir) {
  std::ifstream in(dir / "session.json");
  if (!in) throw ValidationError("no annotation session in " + dir.string());
  std::unique_ptr<AnnotationSession> s(new AnnotationSession());
  s->dir_ = dir;
  try {
    json doc;
    in >> doc;
    s->id_ = doc.at("session_id").get<std::string>();
    s->run_id_ = doc.at("run_id").get<std::string>();
    s->assessors_ = doc.at("assessors").get<std::vector<std::string>>();
    for (const auto& j : doc.at("items")) {
      AnnotationItem item;
      item.item_id = j.at("item_id").get<std::string>();
      item.order = j.at("index").get<std::size_t>();
      item.post_id = j.value("post_id", "");
      item.post_text = j.at("post_text").get<std::string>();
      for (const auto& e : j.at("explanations")) {
        LocatedExplanation l{e.at("text").get<std::string>(), std::nullopt, std::nullopt};
        if (!e["start"].is_null()) l.char_start = e["start"].get<std::size_t>();
        if (!e["end"].is_null()) l.char_end = e["end"].get<std::size_t>();
        item.explanations.push_back(std::move(l));
      }
      item.run_id = s->run_id_;
      s->item_index_[item.item_id] = s->items_.size();
      s->items_.push_back(std::move(item));
    }
    std::ifstream jin(dir / "judgments.jsonl");
    std::string line;
    while (std::getline(jin, line)) {
      if (line.empty()) continue;
      s->apply(judgment_from_json(json::parse(line)));
    }
  } catch (const json::exception& e) {
    throw ValidationError("malformed annotation session in " + dir.string() + ": " + e.what());
  }
  return s;
}

bool AnnotationSession::has_assessor(const std::string& a) const {
  return std::find(assessors_.begin(), assessors_.end(), a) != assessors_.end();
}

const AnnotationItem* AnnotationSession::find_item(const std::string& item_id) const {
  auto it = item_index_.find(item_id);
  return it == item_index_.end() ? nullptr : &items_[it->second];
}

void AnnotationSession::apply(Judgment j) {
  auto key = std::make_pair(j.item_id, j.assessor_id);
  judgments_[key] = std::move(j);
}

void AnnotationSession::record(Judgment j) {
  if (!find_item(j.item_id)) throw ValidationError("unknown item " + j.item_id);
  if (!has_assessor(j.assessor_id)) throw ValidationError("unknown assessor " + j.assessor_id);
  if (j.relevance != 0 && j.relevance != 1) throw ValidationError("relevance must be 0 or 1");
  if (j.elapsed.count() < 0) throw ValidationError("elapsed time must be non-negative");
  if (j.submitted_at.empty()) j.submitted_at = utc_now();
  std::lock_guard lock(mu_);
  append_durable(dir_ / "judgments.jsonl", judgment_json(j).dump());
  apply(std::move(j));
}

std::optional<Judgment> AnnotationSession::judgment(const std::string& item_id,
                                                    const std::string& assessor) const {
  std::lock_guard lock(mu_);
  auto it = judgments_.find({item_id, assessor});
  if (it == judgments_.end()) return std::nullopt;
  return it->second;
}

std::vector<Judgment> AnnotationSession::judgments() const {
  std::lock_guard lock(mu_);
  std::vector<Judgment> out;
  for (const auto& [k, j] : judgments_) out.push_back(j);
  return out;
}

std::optional<std::size_t> AnnotationSession::next_for(const std::string& assessor) const {
  std::lock_guard lock(mu_);
  for (const auto& item : items_) {
    if (!judgments_.count({item.item_id, assessor})) return item.order;
  }
  return std::nullopt;
}

std::size_t AnnotationSession::judged_count(const std::string& assessor) const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& item : items_) n += judgments_.count({item.item_id, assessor});
  return n;
}

LabelTable AnnotationSession::label_table() const {
  std::lock_guard lock(mu_);
  LabelTable t;
  t.assessors = assessors_;
  for (const auto& item : items_) {
    t.item_ids.push_back(item.item_id);
    std::vector<std::optional<int>> row;
    for (const auto& a : assessors_) {
      auto it = judgments_.find({item.item_id, a});
      row.push_back(it == judgments_.end() ? std::nullopt : std::optional<int>(it->second.relevance));
    }
    t.labels.push_back(std::move(row));
  }
  return t;
}

SessionStats AnnotationSession::stats() const {
  auto s = consensus_stats(label_table());
  std::lock_guard lock(mu_);
  for (auto& a : s.assessors) {
    for (const auto& [key, j] : judgments_) {
      if (key.second == a.assessor_id) a.elapsed_ms += j.elapsed.count();
    }
  }
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"': quoted = true; any = true; break;
      case ',': row.push_back(std::move(field)); field.clear(); any = true; break;
      case '\r': break;
      case '\n':
        if (any || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        any = false;
        break;
      default: field += c; any = true;
    }
  }
  if (quoted) throw ValidationError("unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

const std::vector<std::string> kCsvHeader{"item_id", "assessor_id", "Post", "Explanation",
                                          "Relevant Explanation"};

}  // namespace

void export_csv(const AnnotationSession& session, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (std::size_t i = 0; i < kCsvHeader.size(); ++i) out << (i ? "," : "") << kCsvHeader[i];
  out << "\r\n";
  for (const auto& a : session.assessors()) {
    for (const auto& item : session.items()) {
      std::string explanation;
      for (const auto& e : item.explanations) explanation += (explanation.empty() ? "" : "\n") + e.text;
      const auto j = session.judgment(item.item_id, a);
      out << csv_field(item.item_id) << ',' << csv_field(a) << ',' << csv_field(item.post_text) << ','
          << csv_field(explanation) << ',' << (j ? std::to_string(j->relevance) : "") << "\r\n";
    }
  }
  if (!out) throw ValidationError("write failed for " + path.string());
}

std::size_t import_csv(AnnotationSession& session, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const auto rows = parse_csv(buf.str());
  if (rows.empty()) throw ValidationError(path.string() + ": empty CSV");

  const auto& header = rows.front();
  auto column = [&header, &path](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_item = column("item_id");
  const auto c_assessor = column("assessor_id");
  const auto c_relevant = column("Relevant Explanation");

  std::size_t n = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < header.size())
      throw ValidationError(path.string() + ": row " + std::to_string(r + 1) + " has too few columns");
    const auto& value = row[c_relevant];
    if (value.empty()) continue;
    if (value != "0" && value != "1")
      throw ValidationError(path.string() + ": row " + std::to_string(r + 1) +
                            ": Relevant Explanation must be 0 or 1");
    Judgment j;
    j.item_id = row[c_item];
    j.assessor_id = row[c_assessor];
    j.relevance = value == "1" ? 1 : 0;
    // Keep the elapsed time of an earlier judgment; spreadsheets do not carry it.
    if (auto prev = session.judgment(j.item_id, j.assessor_id)) j.elapsed = prev->elapsed;
    session.record(std::move(j));
    ++n;
  }
  return n;
}

std::string elapsed_summary_csv(const AnnotationSession& session) {
  const auto stats = session.stats();
  std::ostringstream out;
  out << "assessor_id,judged,elapsed_ms\r\n";
  for (const auto& a : stats.assessors)
    out << csv_field(a.assessor_id) << ',' << a.judged << ',' << a.elapsed_ms << "\r\n";
  return out.str();
}

}  // namespace symptex
