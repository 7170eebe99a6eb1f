// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "httplib.h"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "symptex/annotation.hpp"
#include "symptex/annotation_server.hpp"
#include "symptex/experiment.hpp"
#include "symptex/format.hpp"
#include "symptex/inference.hpp"
#include "symptex/metrics.hpp"
#include "symptex/synthetic.hpp"

using namespace symptex;
using symptex::testing::run_command;
using symptex::testing::sh_quote;
using symptex::testing::temp_dir;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kBin = SYMPTEX_BIN;

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Collects failure messages; a criterion passes when none were recorded.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    if (failures_.empty()) return {true, summary};
    std::string d = failures_.front();
    if (failures_.size() > 1) d += " (+" + std::to_string(failures_.size() - 1) + " more)";
    return {false, d};
  }

 private:
  std::vector<std::string> failures_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(1) << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

symptex::testing::CommandResult cli(const std::string& args) {
  return run_command(sh_quote(kBin) + " " + args + " 2>/dev/null");
}

// Synthetic corpora on disk, generated once through the CLI.
struct Corpora {
  fs::path root = temp_dir("acceptance");
  fs::path data = root / "data";
  bool ok = false;

  Corpora() { ok = cli("synth --out " + sh_quote(data.string()) + " --seed 17").exit_code == 0; }

  fs::path config(const std::string& name, const std::string& setting, const std::string& backend) const {
    const auto path = root / name;
    std::ofstream(path) << R"({"setting": {"name": ")" << setting
                        << R"(", "bdi": "data/bdi.jsonl", "psysym": "data/psysym.jsonl", "controls": "data/controls.jsonl", "seed": 3},
 "method_label": "acceptance", "backend": )"
                        << backend << R"(, "output_dir": "runs"})";
    return path;
  }
};

const Corpora& corpora() {
  static const Corpora c;
  return c;
}

Outcome setting_exactness() {
  Checker c;
  const auto& cp = corpora();
  c.expect(cp.ok, "synth failed");
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = cli("build-settings --bdi " + sh_quote((cp.data / "bdi.jsonl").string()) + " --psysym " +
                       sh_quote((cp.data / "psysym.jsonl").string()) + " --controls " +
                       sh_quote((cp.data / "controls.jsonl").string()) + " --seed 3 --out " +
                       sh_quote((cp.root / "settings").string()));
  const double secs = seconds_since(t0);
  c.expect(res.exit_code == 0, "build-settings exited " + std::to_string(res.exit_code));
  const std::vector<std::pair<std::string, std::string>> expected{
      {"B-B", "285/285 72/359"}, {"B-P", "285/285 151/753"}, {"P-P", "601/601 151/753"},
      {"P-B", "601/601 72/359"}, {"M-M", "886/886 223/1112"}};
  std::istringstream lines(res.out);
  std::map<std::string, std::string> got;
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream f(line);
    std::string name, train, test;
    if (f >> name >> train >> test) got[name] = train + " " + test;
  }
  for (const auto& [name, counts] : expected)
    c.expect(got[name] == counts, name + " printed '" + got[name] + "', expected '" + counts + "'");
  c.expect(secs < 5.0, "took " + fmt(secs, 2) + " s");
  return c.outcome("all five settings exact in " + fmt(secs, 2) + " s");
}

Outcome metric_oracles() {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(31337);
  auto tokens = [&gen](std::size_t max_len, std::size_t vocab) {
    Tokens t(gen() % (max_len + 1));
    for (auto& x : t) x = std::string(1, static_cast<char>('a' + gen() % vocab));
    return t;
  };
  double worst = 0.0;
  int cases = 0, bleu_nonzero = 0;
  for (int i = 0; i < 200; ++i, ++cases) {
    const auto a = tokens(12, 4), b = tokens(12, 4);
    worst = std::max(worst, std::abs(rouge_l_f1(a, b) - oracle::rouge_l_f1(a, b)));
  }
  for (int i = 0; i < 200; ++i, ++cases) {
    std::vector<Tokens> h, r;
    for (std::size_t k = 0; k < 1 + gen() % 4; ++k) {
      h.push_back(tokens(12, 2));
      r.push_back(tokens(12, 2));
    }
    const double v = corpus_bleu(h, r);
    bleu_nonzero += v > 0.0;
    worst = std::max(worst, std::abs(v - oracle::corpus_bleu(h, r)));
  }
  for (int i = 0; i < 200; ++i, ++cases) {
    const auto words = tokens(12, 6);
    if (words.empty()) continue;
    std::string text;
    std::vector<std::size_t> starts, ends;
    for (std::size_t k = 0; k < words.size(); ++k) {
      if (k) text += gen() % 2 ? ". " : " ";
      starts.push_back(text.size());
      text += words[k];
      ends.push_back(text.size());
    }
    auto span = [&]() {
      const auto s = gen() % words.size();
      const auto e = s + gen() % (words.size() - s);
      return text.substr(starts[s], ends[e] - starts[s]);
    };
    const std::vector<std::string> pred{span()}, gold{span()};
    const double v = token_f1(pred, {{gold[0], {}, {}}}, text);
    worst = std::max(worst, std::abs(v - oracle::token_f1_positions(pred, gold, text)));
  }
  const double secs = seconds_since(t0);
  c.expect(worst <= 1e-9, "max deviation " + sci(worst));
  c.expect(bleu_nonzero >= 20, "too few non-zero BLEU cases (" + std::to_string(bleu_nonzero) + ")");
  c.expect(secs < 10.0, "took " + fmt(secs, 2) + " s");
  return c.outcome(std::to_string(cases) + " cases, max deviation " + sci(worst) + ", " +
                   fmt(secs, 2) + " s");
}

Outcome hand_anchors() {
  Checker c;
  const double rouge = rouge_l_f1({"the", "cat"}, {"the", "cat", "sat"});
  const double bleu = corpus_bleu({{"a", "b", "c", "d"}}, {{"a", "b", "c", "d", "e"}});
  const double pf1 = classification_scores(ConfusionCounts{3, 1, 1, 5}).positive_f1;
  c.expect(std::abs(rouge - 0.8) < 1e-12, "rouge " + fmt(rouge, 12));
  c.expect(std::abs(bleu - std::exp(-0.25)) < 1e-9, "bleu " + fmt(bleu, 12));
  c.expect(std::abs(pf1 - 0.75) < 1e-12, "positive_f1 " + fmt(pf1, 12));
  return c.outcome("rouge " + fmt(rouge) + ", bleu " + fmt(bleu) + ", positive_f1 " + fmt(pf1));
}

Outcome grammar_round_trip() {
  Checker c;
  std::mt19937_64 gen(99);
  const std::vector<std::string> vocab{"I", "feel", "numb,", "can't", "sleep.", "é", "explanation",
                                       "positive", "(...)", "Müller", "!"};
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::string> exps;
    const bool pos = gen() % 2;
    for (std::size_t k = 0; pos && k < 1 + gen() % 3; ++k) {
      std::string e;
      for (std::size_t w = 0; w < 1 + gen() % 5; ++w) e += (w ? " " : "") + vocab[gen() % vocab.size()];
      exps.push_back(e);
    }
    const auto label = pos ? Label::Positive : Label::Negative;
    const auto back = parse_output(encode_target(label, exps));
    c.expect(back.label == label && back.explanations == exps && back.parse_status == ParseStatus::Ok,
             "round-trip failed at pair " + std::to_string(i));
  }
  int malformed = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string s(gen() % 40, '\0');
    for (auto& ch : s) ch = static_cast<char>(gen() % 256);
    if (gen() % 3 == 0) s = (gen() % 2 ? "positive" : "negative") + s;
    try {
      const auto p = parse_output(s);
      if (p.parse_status == ParseStatus::Malformed) {
        ++malformed;
        c.expect(p.label == Label::Negative && p.explanations.empty(), "malformed output not negative");
      }
    } catch (...) {
      c.expect(false, "parse_output threw");
    }
  }
  return c.outcome("1000 round-trips, 10000 fuzz inputs (" + std::to_string(malformed) + " malformed)");
}

Outcome gold_echo_end_to_end() {
  Checker c;
  const auto sc = make_synthetic_corpora({}, 17);
  std::size_t calls = 0;
  for (auto name : all_settings()) {
    const auto s = build_setting(name, sc.bdi, sc.psysym, sc.controls, 3);
    PipelineConfig cfg;
    cfg.backend.kind = BackendKind::GoldEcho;
    cfg.persist = false;
    for (auto mode : {PipelineMode::SingleStep, PipelineMode::TwoStep}) {
      cfg.mode = mode;
      if (mode == PipelineMode::TwoStep) cfg.classifier = cfg.explainer = cfg.backend;
      CallLog log;
      const auto r = evaluate_run(execute_run(s, cfg, &log));
      const std::string tag = std::string(to_string(name)) + "/" + std::string(to_string(mode));
      c.expect(r.micro_f1 == 1.0 && r.positive_f1 == 1.0, tag + " F1 " + fmt(r.micro_f1));
      c.expect(r.rouge_l_f1 == 1.0 && std::abs(r.corpus_bleu - 1.0) < 1e-12 && r.token_f1 == 1.0,
               tag + " explanation metrics below 1");
      c.expect(r.extractiveness_violation_rate == 0.0, tag + " violations");
      const auto expected_calls =
          mode == PipelineMode::TwoStep ? s.test.size() + s.test_positives() : s.test.size();
      c.expect(log.size() == expected_calls, tag + " issued " + std::to_string(log.size()) + " calls, expected " +
                                                 std::to_string(expected_calls));
      calls += log.size();
    }
  }
  return c.outcome("5 settings x 2 pipelines perfect, " + std::to_string(calls) + " calls as expected");
}

Outcome extractiveness() {
  Checker c;
  std::vector<Post> posts;
  std::vector<Prediction> preds;
  for (int i = 0; i < 200; ++i) {
    Post p;
    p.id = "x" + std::to_string(i);
    p.text = "Some context. I feel numb most of the day.";
    p.gold_label = Label::Positive;
    p.gold_explanations = {{"I feel numb most of the day.", {}, {}}};
    Prediction q;
    q.post_id = p.id;
    q.label = Label::Positive;
    q.explanations = {i < 3 ? "I always feel numb" : "I feel numb most of the day."};
    posts.push_back(p);
    preds.push_back(q);
  }
  const auto r = extractiveness_violation_rate(preds, posts);
  c.expect(r.rate == 0.015, "rate " + fmt(r.rate, 6));
  return c.outcome("3/200 -> " + fmt(r.rate, 3));
}

Outcome annotation_statistics() {
  Checker c;
  const auto dir = temp_dir("acceptance-ann");
  std::shared_ptr<AnnotationSession> session = AnnotationSession::create(
      symptex::testing::positive_run(209, 40, "profile"), {"A", "B", "C"}, dir);
  AnnotationServer server;
  server.add_session(session);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client client("127.0.0.1", port);

  const auto rows = symptex::testing::expand(symptex::testing::PatternCounts{});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const json body{{"item_id", session->items()[i].item_id},
                      {"assessor_id", std::string(1, char('A' + a))},
                      {"relevance", rows[i][a]},
                      {"elapsed_ms", 1000}};
      auto res = client.Post("/sessions/profile/judgments", body.dump(), "application/json");
      if (!res || res->status != 200) {
        c.expect(false, "judgment POST failed");
        break;
      }
    }
  }
  auto res = client.Get("/sessions/profile/stats");
  server.stop();
  if (!res || res->status != 200) return {false, "stats endpoint unavailable"};
  const auto st = json::parse(res->body);

  std::vector<double> pairs;
  for (const auto& p : st["pairwise_agreement"]) pairs.push_back(p["fraction"].get<double>());
  std::sort(pairs.rbegin(), pairs.rend());
  const std::vector<double> want_pairs{0.76, 0.66, 0.65};
  c.expect(pairs.size() == 3, "expected three pairs");
  for (std::size_t k = 0; k < std::min<std::size_t>(3, pairs.size()); ++k)
    c.expect(std::abs(pairs[k] - want_pairs[k]) <= 0.005, "pair " + fmt(pairs[k]));
  const double avg = st["average_agreement"].get<double>();
  c.expect(std::abs(avg - 0.69) <= 0.005, "average " + fmt(avg));
  c.expect(st["items"] == 209, "items");
  c.expect(st["majority_relevant"] == 154, "majority " + st["majority_relevant"].dump());
  c.expect(st["unanimous_relevant"] == 86, "unanimous relevant " + st["unanimous_relevant"].dump());
  c.expect(st["unanimous_non_relevant"] == 25, "unanimous non-relevant " + st["unanimous_non_relevant"].dump());
  const std::vector<double> want_frac{0.73, 0.53, 0.77};
  std::string fracs;
  for (std::size_t a = 0; a < 3; ++a) {
    const double f = st["assessors"][a]["relevant_fraction"].get<double>();
    c.expect(std::abs(f - want_frac[a]) <= 0.005, "assessor fraction " + fmt(f));
    fracs += (a ? "/" : "") + fmt(f, 3);
  }
  return c.outcome("pairs " + fmt(pairs[0], 3) + "/" + fmt(pairs[1], 3) + "/" + fmt(pairs[2], 3) + " avg " +
                   fmt(avg, 3) + ", 154/86/25, fractions " + fracs);
}

Outcome run_record_purity() {
  Checker c;
  const auto& cp = corpora();
  KeywordRuleBackend rule({"numb", "hopeless", "exhausted", "failure", "guilty", "hate", "energy"});
  symptex::testing::MockEndpoint mock([&rule](const json& body) {
    auto query = body["messages"].back()["content"].get<std::string>();
    if (query.rfind(kExplainPrefix, 0) == 0) query.erase(0, kExplainPrefix.size());
    Request r;
    r.post_text = query;
    return std::pair{200, symptex::testing::chat_response(rule.complete(r).text)};
  });
  const auto cfg = cp.config(
      "remote.json", "B-B",
      R"({"kind": "chat_remote", "endpoint_url": ")" + mock.url() + R"(", "model_name": "mock", "max_concurrency": 8})");
  const auto run = cli("run --config " + sh_quote(cfg.string()) + " --run-id purity");
  c.expect(run.exit_code == 0, "run exited " + std::to_string(run.exit_code));
  const int hits = mock.hits();
  mock.stop();

  const auto run_dir = cp.root / "runs" / "purity";
  const auto original = slurp(run_dir / "report.json");
  c.expect(!original.empty(), "no report.json");
  const auto rescored = cp.root / "rescored.json";

  // A fresh network namespace has only a downed loopback device.
  std::string how = "in an empty network namespace";
  // The binary is started relative to its own directory: inside the user
  // namespace, parent directories owned by unmapped users may not be
  // traversable by absolute path.
  const fs::path bin(kBin);
  symptex::testing::CommandResult res;
  if (run_command("unshare -rn true 2>/dev/null").exit_code == 0) {
    res = run_command("cd " + sh_quote(bin.parent_path().string()) + " && unshare -rn ./" +
                      sh_quote(bin.filename().string()) + " score --run " + sh_quote(run_dir.string()) +
                      " --out " + sh_quote(rescored.string()) + " 2>/dev/null");
  } else {
    how = "with the endpoint stopped (network namespaces unavailable)";
    res = cli("score --run " + sh_quote(run_dir.string()) + " --out " + sh_quote(rescored.string()));
  }
  c.expect(res.exit_code == 0, "score exited " + std::to_string(res.exit_code));
  c.expect(slurp(rescored) == original, "re-scored report differs");
  c.expect(hits == 431, "endpoint saw " + std::to_string(hits) + " calls");
  return c.outcome("report.json reproduced byte-for-byte " + how);
}

Outcome confusion_accounting() {
  Checker c;
  const auto& cp = corpora();
  const std::string gold = R"({"kind": "gold_echo"})";
  std::string summary;
  for (const auto& [setting, size] : std::vector<std::pair<std::string, std::size_t>>{{"B-B", 431}, {"M-M", 1335}}) {
    const auto cfg = cp.config("gold-" + setting + ".json", setting, gold);
    const auto id = "confusion-" + setting;
    c.expect(cli("run --config " + sh_quote(cfg.string()) + " --run-id " + id).exit_code == 0, setting + " run failed");
    const auto res = cli("score --run " + sh_quote((cp.root / "runs" / id).string()));
    c.expect(res.exit_code == 0, setting + " score failed");
    try {
      const auto m = json::parse(res.out)["metrics"];
      const auto total = m["tp"].get<std::size_t>() + m["fp"].get<std::size_t>() + m["fn"].get<std::size_t>() +
                         m["tn"].get<std::size_t>();
      c.expect(total == size, setting + " sums to " + std::to_string(total));
      summary += (summary.empty() ? "" : ", ") + setting + " " + std::to_string(total);
    } catch (const std::exception& e) {
      c.expect(false, setting + " report unreadable");
    }
  }
  // The remote run scored for the purity check is held to the same rule.
  const auto remote = slurp(cp.root / "runs" / "purity" / "report.json");
  if (!remote.empty()) {
    const auto m = json::parse(remote)["metrics"];
    const auto total = m["tp"].get<std::size_t>() + m["fp"].get<std::size_t>() + m["fn"].get<std::size_t>() +
                       m["tn"].get<std::size_t>();
    c.expect(total == 431, "remote B-B run sums to " + std::to_string(total));
    summary += ", remote B-B " + std::to_string(total);
  }
  return c.outcome(summary);
}

Outcome ablation_mechanics() {
  Checker c;
  const auto& cp = corpora();
  const auto cfg = cp.config("ablate.json", "M-M", R"({"kind": "gold_echo"})");
  const auto out = cp.root / "ablation";
  const auto res = cli("ablate --config " + sh_quote(cfg.string()) + " --sizes 100,200,400,800 --out " +
                       sh_quote(out.string()));
  c.expect(res.exit_code == 0, "ablate exited " + std::to_string(res.exit_code));
  std::istringstream csv(slurp(out / "ablation.csv"));
  std::string line;
  std::getline(csv, line);
  std::vector<std::size_t> ns;
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::istringstream f(line);
    std::string cell;
    while (std::getline(f, cell, ',')) cells.push_back(cell);
    if (cells.size() < 7) {
      c.expect(false, "short CSV row");
      continue;
    }
    ns.push_back(std::stoul(cells[0]));
    for (std::size_t k : {1, 2, 4, 5, 6})
      c.expect(std::abs(std::stod(cells[k]) - 1.0) < 1e-6, "n=" + cells[0] + " scored " + cells[k]);
  }
  c.expect(ns.size() == 4, std::to_string(ns.size()) + " points");
  for (std::size_t i = 1; i < ns.size(); ++i) c.expect(ns[i] > ns[i - 1], "sizes not increasing");
  return c.outcome("4 points (100, 200, 400, 800), all 1.0");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"setting-exactness", setting_exactness},
      {"metric-oracles", metric_oracles},
      {"hand-anchors", hand_anchors},
      {"grammar-round-trip", grammar_round_trip},
      {"gold-echo-end-to-end", gold_echo_end_to_end},
      {"extractiveness", extractiveness},
      {"annotation-statistics", annotation_statistics},
      {"run-record-purity", run_record_purity},
      {"confusion-accounting", confusion_accounting},
      {"ablation-mechanics", ablation_mechanics},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << std::left << std::setw(24) << name << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
