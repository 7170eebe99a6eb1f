#include "symptex/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "symptex/error.hpp"
#include "symptex/rng.hpp"
#include "symptex/utf8.hpp"

namespace symptex {

using nlohmann::json;

std::string_view to_string(Source s) {
  switch (s) {
    case Source::BdiSen: return "BDI-Sen";
    case Source::PsySym: return "PsySym";
    case Source::DepreSym: return "DepreSym";
    case Source::Synthetic: return "synthetic";
  }
  return "synthetic";
}

std::string_view to_string(Label l) { return l == Label::Positive ? "positive" : "negative"; }

Source parse_source(std::string_view s) {
  if (s == "BDI-Sen") return Source::BdiSen;
  if (s == "PsySym") return Source::PsySym;
  if (s == "DepreSym") return Source::DepreSym;
  if (s == "synthetic") return Source::Synthetic;
  throw ValidationError("unknown source '" + std::string(s) + "'");
}

Label parse_label(std::string_view s) {
  if (s == "positive") return Label::Positive;
  if (s == "negative") return Label::Negative;
  throw ValidationError("unknown label '" + std::string(s) + "'");
}

void validate_post(const Post& p) {
  if (p.id.empty()) throw ValidationError("post with empty id");
  if (p.gold_label == Label::Negative && !p.gold_explanations.empty())
    throw ValidationError("post " + p.id + ": negative post carries explanations");
  if (p.gold_label == Label::Positive && p.gold_explanations.empty())
    throw ValidationError("post " + p.id + ": positive post without explanations");
  for (const auto& e : p.gold_explanations) {
    if (e.text.empty()) throw ValidationError("post " + p.id + ": empty explanation");
    if (p.text.find(e.text) == std::string::npos)
      throw ValidationError("post " + p.id + ": explanation is not a substring of the post text");
    if (e.char_start.has_value() != e.char_end.has_value())
      throw ValidationError("post " + p.id + ": explanation offsets must come in pairs");
    if (e.char_start) {
      auto s = utf8::slice(p.text, *e.char_start, *e.char_end);
      if (!s || *s != e.text)
        throw ValidationError("post " + p.id + ": explanation offsets do not match its text");
    }
  }
}

namespace {

Post post_from_json(const json& j, Source default_source) {
  Post p;
  p.id = j.at("id").get<std::string>();
  p.text = j.at("text").get<std::string>();
  p.gold_label = parse_label(j.at("label").get<std::string>());
  p.source = j.contains("source") ? parse_source(j["source"].get<std::string>()) : default_source;
  for (const auto& e : j.at("explanations")) {
    ExplanationSpan span;
    span.text = e.at("text").get<std::string>();
    if (e.contains("start") && !e["start"].is_null()) span.char_start = e["start"].get<std::size_t>();
    if (e.contains("end") && !e["end"].is_null()) span.char_end = e["end"].get<std::size_t>();
    p.gold_explanations.push_back(std::move(span));
  }
  return p;
}

json post_to_json(const Post& p) {
  json ex = json::array();
  for (const auto& e : p.gold_explanations) {
    json j{{"text", e.text}};
    if (e.char_start) j["start"] = *e.char_start;
    if (e.char_end) j["end"] = *e.char_end;
    ex.push_back(std::move(j));
  }
  return json{{"id", p.id},
              {"text", p.text},
              {"label", to_string(p.gold_label)},
              {"source", to_string(p.source)},
              {"explanations", std::move(ex)}};
}

std::size_t count_label(const std::vector<Post>& v, Label l) {
  return static_cast<std::size_t>(
      std::count_if(v.begin(), v.end(), [l](const Post& p) { return p.gold_label == l; }));
}

}  // namespace

std::vector<Post> load_dataset(const std::filesystem::path& path, Source default_source) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset " + path.string());
  std::vector<Post> posts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Post p;
    try {
      p = post_from_json(json::parse(line), default_source);
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed record: " + e.what());
    }
    validate_post(p);
    posts.push_back(std::move(p));
  }
  return posts;
}

void save_dataset(const std::filesystem::path& path, const std::vector<Post>& posts) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (const auto& p : posts) out << post_to_json(p).dump() << '\n';
}

std::string_view to_string(SettingName n) {
  switch (n) {
    case SettingName::BB: return "B-B";
    case SettingName::BP: return "B-P";
    case SettingName::PP: return "P-P";
    case SettingName::PB: return "P-B";
    case SettingName::MM: return "M-M";
  }
  return "B-B";
}

SettingName parse_setting_name(std::string_view s) {
  for (auto n : all_settings())
    if (to_string(n) == s) return n;
  throw ValidationError("unknown setting '" + std::string(s) + "'");
}

const std::vector<SettingName>& all_settings() {
  static const std::vector<SettingName> v{SettingName::BB, SettingName::BP, SettingName::PP,
                                          SettingName::PB, SettingName::MM};
  return v;
}

std::size_t ExperimentSetting::train_positives() const { return count_label(train, Label::Positive); }
std::size_t ExperimentSetting::train_negatives() const { return count_label(train, Label::Negative); }
std::size_t ExperimentSetting::test_positives() const { return count_label(test, Label::Positive); }
std::size_t ExperimentSetting::test_negatives() const { return count_label(test, Label::Negative); }

std::size_t train_share(std::size_t positives) { return positives * 8 / 10; }

std::size_t test_control_count(Source source, std::size_t corpus_positives,
                               std::size_t test_positives) {
  if (source == Source::BdiSen && corpus_positives == kReferenceBdiPositives)
    return kReferenceBdiTestControls;
  if (source == Source::PsySym && corpus_positives == kReferencePsySymPositives)
    return kReferencePsySymTestControls;
  return 5 * test_positives;
}

namespace {

struct SourceSplit {
  std::vector<Post> train;
  std::vector<Post> test;
};

SourceSplit split_positives(const std::vector<Post>& positives, std::uint64_t seed,
                            std::string_view stream) {
  std::vector<Post> shuffled = positives;
  Rng rng(seed, stream);
  rng.shuffle(shuffled);
  const auto n_train = static_cast<std::ptrdiff_t>(train_share(shuffled.size()));
  SourceSplit s;
  s.train.assign(shuffled.begin(), shuffled.begin() + n_train);
  s.test.assign(shuffled.begin() + n_train, shuffled.end());
  return s;
}

void require_all(const std::vector<Post>& v, Label l, std::string_view what) {
  for (const auto& p : v) {
    if (p.gold_label != l)
      throw ValidationError(std::string(what) + " contains " + std::string(to_string(p.gold_label)) +
                            " post " + p.id);
  }
}

void append(std::vector<Post>& dst, const std::vector<Post>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

ExperimentSetting build_setting(SettingName name, const std::vector<Post>& bdi,
                                const std::vector<Post>& psysym,
                                const std::vector<Post>& controls, std::uint64_t seed) {
  require_all(bdi, Label::Positive, "BDI-Sen corpus");
  require_all(psysym, Label::Positive, "PsySym corpus");
  require_all(controls, Label::Negative, "control pool");

  std::unordered_set<std::string> ids;
  for (const auto* v : {&bdi, &psysym, &controls}) {
    for (const auto& p : *v) {
      if (!ids.insert(p.id).second) throw ValidationError("duplicate post id " + p.id);
    }
  }

  const auto b = split_positives(bdi, seed, "split/bdi");
  const auto p = split_positives(psysym, seed, "split/psysym");

  const std::size_t b_train_ctrl = b.train.size();
  const std::size_t p_train_ctrl = p.train.size();
  const std::size_t b_test_ctrl = test_control_count(Source::BdiSen, bdi.size(), b.test.size());
  const std::size_t p_test_ctrl = test_control_count(Source::PsySym, psysym.size(), p.test.size());
  const std::size_t need = b_train_ctrl + p_train_ctrl + b_test_ctrl + p_test_ctrl;
  if (controls.size() < need) {
    std::ostringstream msg;
    msg << "insufficient controls: need " << need << ", have " << controls.size()
        << " (short by " << need - controls.size() << ")";
    throw ValidationError(msg.str());
  }

  std::vector<Post> pool = controls;
  Rng(seed, "controls").shuffle(pool);
  auto take = [&pool, at = std::size_t{0}](std::size_t n) mutable {
    std::vector<Post> out(pool.begin() + static_cast<std::ptrdiff_t>(at),
                          pool.begin() + static_cast<std::ptrdiff_t>(at + n));
    at += n;
    return out;
  };
  const auto ctrl_b_train = take(b_train_ctrl);
  const auto ctrl_p_train = take(p_train_ctrl);
  const auto ctrl_b_test = take(b_test_ctrl);
  const auto ctrl_p_test = take(p_test_ctrl);

  const bool train_b = name == SettingName::BB || name == SettingName::BP || name == SettingName::MM;
  const bool train_p = name == SettingName::PP || name == SettingName::PB || name == SettingName::MM;
  const bool test_b = name == SettingName::BB || name == SettingName::PB || name == SettingName::MM;
  const bool test_p = name == SettingName::PP || name == SettingName::BP || name == SettingName::MM;

  ExperimentSetting s;
  s.name = name;
  s.seed = seed;
  if (train_b) append(s.train, b.train);
  if (train_p) append(s.train, p.train);
  if (train_b) append(s.train, ctrl_b_train);
  if (train_p) append(s.train, ctrl_p_train);
  if (test_b) append(s.test, b.test);
  if (test_p) append(s.test, p.test);
  if (test_b) append(s.test, ctrl_b_test);
  if (test_p) append(s.test, ctrl_p_test);

  if (s.train_positives() == 0 || s.test_positives() == 0)
    throw ValidationError("setting " + std::string(to_string(name)) +
                          " has no positives in train or test; check the source corpora");
  return s;
}

ExperimentSetting subsample_training(const ExperimentSetting& setting, std::size_t n,
                                     std::uint64_t seed) {
  if (n == 0) throw ValidationError("subsample size must be positive");
  std::vector<const Post*> pos, neg;
  for (const auto& p : setting.train) (p.positive() ? pos : neg).push_back(&p);
  if (n > pos.size() || n > neg.size()) {
    throw ValidationError("subsample of " + std::to_string(n) + " exceeds the " +
                          std::to_string(std::min(pos.size(), neg.size())) +
                          " available training pairs");
  }
  if (n == pos.size() && n == neg.size()) return setting;

  Rng rng(seed, "subsample");
  auto pick = [&rng, n](const std::vector<const Post*>& from) {
    auto idx = rng.sample_indices(from.size(), n);
    std::sort(idx.begin(), idx.end());
    std::vector<Post> out;
    out.reserve(n);
    for (auto i : idx) out.push_back(*from[i]);
    return out;
  };
  ExperimentSetting out;
  out.name = setting.name;
  out.seed = setting.seed;
  out.test = setting.test;
  out.train = pick(pos);
  append(out.train, pick(neg));
  return out;
}

std::vector<ExperimentSetting> mix_external(const ExperimentSetting& setting,
                                            const std::vector<Post>& external,
                                            std::size_t step) {
  if (step == 0) throw ValidationError("external mixing step must be positive");
  for (const auto& p : external) {
    if (!p.positive())
      throw ValidationError("external post " + p.id + " carries no gold explanation");
  }
  std::vector<Post> shuffled = external;
  Rng(setting.seed, "external").shuffle(shuffled);

  std::vector<ExperimentSetting> out;
  for (std::size_t added = 0; added < shuffled.size();) {
    added = std::min(added + step, shuffled.size());
    ExperimentSetting s;
    s.name = setting.name;
    s.seed = setting.seed;
    s.test = setting.test;
    s.train = setting.train;
    s.train.insert(s.train.end(), shuffled.begin(),
                   shuffled.begin() + static_cast<std::ptrdiff_t>(added));
    out.push_back(std::move(s));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const ExperimentSetting& s) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write manifest " + path.string());
  json header{{"setting", to_string(s.name)},
              {"seed", s.seed},
              {"train_positive", s.train_positives()},
              {"train_negative", s.train_negatives()},
              {"test_positive", s.test_positives()},
              {"test_negative", s.test_negatives()}};
  out << header.dump() << '\n';
  auto emit = [&out](const std::vector<Post>& v, std::string_view split) {
    for (const auto& p : v) {
      out << json{{"id", p.id},
                  {"split", split},
                  {"label", to_string(p.gold_label)},
                  {"source", to_string(p.source)}}
                 .dump()
          << '\n';
    }
  };
  emit(s.train, "train");
  emit(s.test, "test");
}

ExperimentSetting read_manifest(const std::filesystem::path& path, const std::vector<Post>& pool) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  std::unordered_map<std::string, const Post*> by_id;
  for (const auto& p : pool) by_id.emplace(p.id, &p);

  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty manifest " + path.string());
  ExperimentSetting s;
  try {
    auto header = json::parse(line);
    s.name = parse_setting_name(header.at("setting").get<std::string>());
    s.seed = header.at("seed").get<std::uint64_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = json::parse(line);
      const auto id = j.at("id").get<std::string>();
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ValidationError("manifest references unknown post " + id);
      (j.at("split").get<std::string>() == "train" ? s.train : s.test).push_back(*it->second);
    }
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest " + path.string() + ": " + e.what());
  }
  return s;
}

}  // namespace symptex
