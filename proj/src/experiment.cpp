#include "symptex/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "symptex/error.hpp"

namespace symptex {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(PipelineMode m) {
  switch (m) {
    case PipelineMode::SingleStep: return "single_step";
    case PipelineMode::TwoStep: return "two_step";
    case PipelineMode::FewShot: return "few_shot";
  }
  return "single_step";
}

PipelineMode parse_pipeline_mode(std::string_view s) {
  for (auto m : {PipelineMode::SingleStep, PipelineMode::TwoStep, PipelineMode::FewShot}) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("unknown pipeline mode '" + std::string(s) + "'");
}

void validate(const PipelineConfig& cfg) {
  if (cfg.mode == PipelineMode::TwoStep) {
    if (!cfg.classifier || !cfg.explainer)
      throw ValidationError("two_step mode needs classifier and explainer backends");
    validate(*cfg.classifier);
    validate(*cfg.explainer);
  } else {
    validate(cfg.backend);
  }
  if (cfg.input_char_budget == 0) throw ValidationError("input character budget must be positive");
}

std::string backend_fingerprint(const PipelineConfig& cfg) {
  if (cfg.mode == PipelineMode::TwoStep)
    return fingerprint(*cfg.classifier) + " + " + fingerprint(*cfg.explainer);
  return fingerprint(cfg.backend);
}

ordered_json to_json(const PipelineConfig& cfg) {
  ordered_json j{{"mode", to_string(cfg.mode)}, {"method_label", cfg.method_label}};
  if (cfg.mode == PipelineMode::TwoStep) {
    j["classifier"] = to_json(*cfg.classifier);
    j["explainer"] = to_json(*cfg.explainer);
  } else {
    j["backend"] = to_json(cfg.backend);
  }
  if (cfg.mode == PipelineMode::FewShot) {
    j["prompt"] = {{"instructions", cfg.fewshot.instructions},
                   {"n_pos", cfg.fewshot.n_pos},
                   {"n_neg", cfg.fewshot.n_neg},
                   {"seed", cfg.fewshot.seed},
                   {"prompt_char_budget", cfg.fewshot.prompt_char_budget}};
  }
  j["input_char_budget"] = cfg.input_char_budget;
  j["seed"] = cfg.seed;
  return j;
}

Post PostRecord::gold_post() const {
  Post p;
  p.id = post_id;
  p.text = post_text;
  p.gold_label = gold_label;
  p.gold_explanations = gold_explanations;
  return p;
}

namespace {

ordered_json spans_json(const std::vector<ExplanationSpan>& spans) {
  ordered_json out = ordered_json::array();
  for (const auto& s : spans) {
    ordered_json j{{"text", s.text}};
    if (s.char_start) j["start"] = *s.char_start;
    if (s.char_end) j["end"] = *s.char_end;
    out.push_back(std::move(j));
  }
  return out;
}

ordered_json prediction_json(const PostRecord& r) {
  ordered_json j{{"post_id", r.post_id},
                 {"label", to_string(r.prediction.label)},
                 {"explanations", r.prediction.explanations},
                 {"parse_status", to_string(r.prediction.parse_status)},
                 {"raw", r.prediction.raw}};
  if (r.explainer_raw) j["explainer_raw"] = *r.explainer_raw;
  if (r.error) j["error"] = *r.error;
  return j;
}

ordered_json record_json(const PostRecord& r) {
  auto j = prediction_json(r);
  j["gold_label"] = to_string(r.gold_label);
  j["gold_explanations"] = spans_json(r.gold_explanations);
  j["post_text"] = r.post_text;
  j["latency_ms"] = r.latency_ms;
  return j;
}

PostRecord record_from_json(const json& j) {
  PostRecord r;
  r.post_id = j.at("post_id").get<std::string>();
  r.prediction.post_id = r.post_id;
  r.prediction.label = parse_label(j.at("label").get<std::string>());
  r.prediction.explanations = j.at("explanations").get<std::vector<std::string>>();
  r.prediction.parse_status = parse_parse_status(j.at("parse_status").get<std::string>());
  r.prediction.raw = j.at("raw").get<std::string>();
  if (j.contains("explainer_raw")) r.explainer_raw = j["explainer_raw"].get<std::string>();
  if (j.contains("error")) r.error = j["error"].get<std::string>();
  r.gold_label = parse_label(j.at("gold_label").get<std::string>());
  for (const auto& s : j.at("gold_explanations")) {
    ExplanationSpan span{s.at("text").get<std::string>(), std::nullopt, std::nullopt};
    if (s.contains("start")) span.char_start = s["start"].get<std::size_t>();
    if (s.contains("end")) span.char_end = s["end"].get<std::size_t>();
    r.gold_explanations.push_back(std::move(span));
  }
  r.post_text = j.at("post_text").get<std::string>();
  r.latency_ms = j.value("latency_ms", 0.0);
  return r;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw ValidationError("write failed for " + path.string());
}

}  // namespace

std::string prediction_payload(const PostRecord& r) { return prediction_json(r).dump(); }

std::string new_run_id() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%S", &tm);
  std::random_device rd;
  char suffix[16];
  std::snprintf(suffix, sizeof suffix, "%06x", rd() & 0xffffffu);
  return std::string(stamp) + "-" + suffix;
}

RunRecord execute_run(const ExperimentSetting& setting, const PipelineConfig& cfg, CallLog* log) {
  validate(cfg);
  RunRecord rec;
  rec.run_id = cfg.run_id ? *cfg.run_id : new_run_id();
  rec.setting_name = std::string(to_string(setting.name));
  rec.method_label = cfg.method_label.empty() ? std::string(to_string(cfg.mode)) : cfg.method_label;
  rec.mode = std::string(to_string(cfg.mode));
  rec.backend_fingerprint = backend_fingerprint(cfg);
  rec.seed = cfg.seed;
  rec.created_at = utc_now();
  rec.train_size = setting.train.size();
  rec.config = to_json(cfg);
  rec.config["setting_seed"] = setting.seed;

  CallLog local_log;
  CallLog* calls = log ? log : &local_log;

  RunOutput output;
  if (cfg.mode == PipelineMode::TwoStep) {
    auto classifier = make_backend(*cfg.classifier, setting.test);
    auto explainer = make_backend(*cfg.explainer, setting.test);
    output = run_two_step(*classifier, *explainer, setting.test, cfg.input_char_budget, calls);
  } else {
    auto backend = make_backend(cfg.backend, setting.test);
    PromptConfig prompt;
    prompt.input_char_budget = cfg.input_char_budget;
    if (cfg.mode == PipelineMode::FewShot) {
      prompt.fewshot = cfg.fewshot;
      prompt.train = &setting.train;
    }
    output = run_single_step(*backend, setting.test, prompt, calls);
  }

  rec.failures = output.failures;
  rec.records.reserve(setting.test.size());
  for (std::size_t i = 0; i < setting.test.size(); ++i) {
    const auto& post = setting.test[i];
    auto& o = output.outcomes[i];
    PostRecord r;
    r.post_id = post.id;
    r.prediction = std::move(o.prediction);
    r.explainer_raw = std::move(o.explainer_raw);
    r.error = std::move(o.error);
    r.gold_label = post.gold_label;
    r.gold_explanations = post.gold_explanations;
    r.post_text = post.text;
    r.latency_ms = o.latency_ms;
    rec.records.push_back(std::move(r));
  }
  if (cfg.persist) persist_run(rec, cfg.out_dir, calls);
  return rec;
}

void persist_run(RunRecord& rec, const std::filesystem::path& out_dir, const CallLog* log) {
  rec.dir = out_dir / rec.run_id;
  std::error_code ec;
  std::filesystem::create_directories(rec.dir, ec);
  if (ec) throw ValidationError("cannot create run directory " + rec.dir.string() + ": " + ec.message());

  ordered_json header{{"run_id", rec.run_id},
                      {"setting", rec.setting_name},
                      {"method_label", rec.method_label},
                      {"mode", rec.mode},
                      {"backend_fingerprint", rec.backend_fingerprint},
                      {"seed", rec.seed},
                      {"created_at", rec.created_at},
                      {"test_size", rec.records.size()},
                      {"train_size", rec.train_size},
                      {"failures", rec.failures},
                      {"config", rec.config}};
  write_file(rec.dir / "header.json", header.dump() + "\n");

  std::ofstream out(rec.dir / "records.jsonl", std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write records for run " + rec.run_id);
  for (const auto& r : rec.records) out << record_json(r).dump() << '\n';
  out.flush();
  if (!out) throw ValidationError("write failed for run " + rec.run_id);

  if (log) {
    std::ofstream calls(rec.dir / "calls.jsonl", std::ios::binary | std::ios::trunc);
    for (const auto& c : log->snapshot()) calls << to_json(c).dump() << '\n';
  }
}

RunRecord load_run(const std::filesystem::path& dir) {
  RunRecord rec;
  rec.dir = dir;
  std::ifstream hin(dir / "header.json");
  if (!hin) throw ValidationError("no run header in " + dir.string());
  try {
    json h;
    hin >> h;
    rec.run_id = h.at("run_id").get<std::string>();
    rec.setting_name = h.at("setting").get<std::string>();
    rec.method_label = h.at("method_label").get<std::string>();
    rec.mode = h.value("mode", "");
    rec.backend_fingerprint = h.at("backend_fingerprint").get<std::string>();
    rec.seed = h.at("seed").get<std::uint64_t>();
    rec.created_at = h.at("created_at").get<std::string>();
    rec.train_size = h.value("train_size", std::size_t{0});
    rec.failures = h.value("failures", std::size_t{0});
    rec.config = h.value("config", ordered_json::object());

    std::ifstream rin(dir / "records.jsonl");
    if (!rin) throw ValidationError("no records in " + dir.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(rin, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        rec.records.push_back(record_from_json(json::parse(line)));
      } catch (const json::exception& e) {
        throw ValidationError((dir / "records.jsonl").string() + ":" + std::to_string(lineno) +
                              ": " + e.what());
      }
    }
    const auto expected = h.at("test_size").get<std::size_t>();
    if (rec.records.size() != expected)
      throw ValidationError("run " + rec.run_id + " holds " + std::to_string(rec.records.size()) +
                            " records, header says " + std::to_string(expected));
  } catch (const json::exception& e) {
    throw ValidationError("malformed run header in " + dir.string() + ": " + e.what());
  }
  return rec;
}

MetricReport evaluate_run(const RunRecord& rec) {
  std::vector<Prediction> preds;
  std::vector<Post> golds;
  preds.reserve(rec.records.size());
  golds.reserve(rec.records.size());
  std::set<std::string> seen;
  for (const auto& r : rec.records) {
    if (!seen.insert(r.post_id).second)
      throw ValidationError("run " + rec.run_id + " scores post " + r.post_id + " twice");
    preds.push_back(r.prediction);
    preds.back().post_id = r.post_id;
    golds.push_back(r.gold_post());
  }
  return score(preds, golds);
}

std::string report_document(const RunRecord& rec, const MetricReport& report) {
  ordered_json j{{"run_id", rec.run_id},
                 {"setting", rec.setting_name},
                 {"method_label", rec.method_label},
                 {"test_size", rec.records.size()},
                 {"metrics", to_json(report)}};
  return j.dump(2) + "\n";
}

void write_report(const RunRecord& rec, const MetricReport& report) {
  if (rec.dir.empty()) throw ValidationError("run " + rec.run_id + " has no directory");
  write_file(rec.dir / "report.json", report_document(rec, report));
}

namespace {

std::string point_run_id(const PipelineConfig& cfg, std::string_view tag, std::size_t n) {
  return (cfg.run_id ? *cfg.run_id : std::string("ablation")) + "-" + std::string(tag) +
         std::to_string(n);
}

}  // namespace

AblationSeries ablation_curve(const ExperimentSetting& setting, const std::vector<std::size_t>& sizes,
                              const PipelineConfig& cfg) {
  if (sizes.empty()) throw ValidationError("ablation needs at least one size");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] <= sizes[i - 1])
      throw ValidationError("ablation sizes must be strictly increasing");
  }
  AblationSeries series;
  for (auto n : sizes) {
    const auto sub = subsample_training(setting, n, cfg.seed);
    auto point_cfg = cfg;
    point_cfg.run_id = point_run_id(cfg, "n", n);
    const auto rec = execute_run(sub, point_cfg);
    const auto report = evaluate_run(rec);
    if (!rec.dir.empty()) write_report(rec, report);
    series.push_back({n, report, rec.run_id});
  }
  return series;
}

AblationSeries external_mix_curve(const ExperimentSetting& setting,
                                  const std::vector<Post>& external, std::size_t step,
                                  const PipelineConfig& cfg) {
  AblationSeries series;
  const auto base = setting.train_positives();
  for (const auto& s : mix_external(setting, external, step)) {
    const auto added = s.train_positives() - base;
    auto point_cfg = cfg;
    point_cfg.run_id = point_run_id(cfg, "ext", added);
    const auto rec = execute_run(s, point_cfg);
    const auto report = evaluate_run(rec);
    if (!rec.dir.empty()) write_report(rec, report);
    series.push_back({s.train_positives(), report, rec.run_id});
  }
  return series;
}

std::string ablation_csv(const AblationSeries& series) {
  std::ostringstream out;
  out << "n_train,micro_f1,positive_f1,tp,rouge_l_f1,corpus_bleu,token_f1,n_explained\n";
  out << std::setprecision(6) << std::fixed;
  for (const auto& p : series) {
    out << p.n_train << ',' << p.report.micro_f1 << ',' << p.report.positive_f1 << ','
        << p.report.confusion.tp << ',' << p.report.rouge_l_f1 << ',' << p.report.corpus_bleu << ','
        << p.report.token_f1 << ',' << p.report.n_explained << '\n';
  }
  return out.str();
}

namespace {

std::string svg_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string ablation_svg(const AblationSeries& series, const std::string& title) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 140, kTop = 40, kBottom = 50;
  const double plot_w = kW - kLeft - kRight, plot_h = kH - kTop - kBottom;
  double x_min = 0, x_max = 1;
  if (!series.empty()) {
    x_min = static_cast<double>(series.front().n_train);
    x_max = static_cast<double>(series.back().n_train);
    if (x_max == x_min) {
      x_min -= 1;
      x_max += 1;
    }
  }
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * plot_w; };
  auto py = [&](double y) { return kTop + (1.0 - y) * plot_h; };

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << svg_escape(title) << "</text>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << py(0) << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
      << py(0) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << py(0) << "\" x2=\"" << kLeft << "\" y2=\"" << py(1)
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = i / 5.0;
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">"
        << std::setprecision(1) << y << std::setprecision(2) << "</text>\n";
  }
  for (const auto& p : series) {
    svg << "<text x=\"" << px(static_cast<double>(p.n_train)) << "\" y=\"" << py(0) + 18
        << "\" text-anchor=\"middle\">" << p.n_train << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kH - 10
      << "\" text-anchor=\"middle\">training examples</text>\n";

  struct Line {
    const char* name;
    const char* color;
    double MetricReport::*field;
  };
  const Line lines[] = {{"ROUGE", "#1f77b4", &MetricReport::rouge_l_f1},
                        {"BLEU", "#ff7f0e", &MetricReport::corpus_bleu},
                        {"TF1", "#2ca02c", &MetricReport::token_f1},
                        {"F1", "#7f7f7f", &MetricReport::micro_f1}};
  int legend = 0;
  for (const auto& l : lines) {
    svg << "<polyline fill=\"none\" stroke=\"" << l.color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : series)
      svg << px(static_cast<double>(p.n_train)) << ',' << py(p.report.*l.field) << ' ';
    svg << "\"/>\n";
    for (const auto& p : series) {
      svg << "<circle cx=\"" << px(static_cast<double>(p.n_train)) << "\" cy=\""
          << py(p.report.*l.field) << "\" r=\"3\" fill=\"" << l.color << "\"/>\n";
    }
    const double ly = kTop + 20.0 * legend++;
    svg << "<rect x=\"" << kW - kRight + 20 << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"12\" fill=\""
        << l.color << "\"/><text x=\"" << kW - kRight + 38 << "\" y=\"" << ly + 1 << "\">" << l.name
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

ReportTable report_table(const std::vector<ReportRow>& rows) {
  auto setting_rank = [](const std::string& s) {
    const auto& all = all_settings();
    for (std::size_t i = 0; i < all.size(); ++i)
      if (to_string(all[i]) == s) return i;
    return all.size();
  };
  std::vector<std::string> settings;
  std::set<std::string> methods;
  std::map<std::pair<std::string, std::string>, const MetricReport*> cells;
  for (const auto& r : rows) {
    if (std::find(settings.begin(), settings.end(), r.setting) == settings.end())
      settings.push_back(r.setting);
    methods.insert(r.method);
    cells[{r.setting, r.method}] = &r.report;
  }
  std::stable_sort(settings.begin(), settings.end(), [&](const auto& a, const auto& b) {
    const auto ra = setting_rank(a), rb = setting_rank(b);
    return ra != rb ? ra < rb : a < b;
  });

  constexpr int kCell = 30;  // width of one method block: F1 TPs ROUGE BLEU TF1
  std::ostringstream text;
  text << std::left << std::setw(8) << "";
  for (const auto& m : methods) text << "| " << std::setw(kCell) << m.substr(0, kCell);
  text << '\n' << std::setw(8) << "Setting";
  for (std::size_t i = 0; i < methods.size(); ++i) {
    text << "| " << std::left << std::setw(6) << "F1" << std::setw(6) << "TPs" << std::setw(6)
         << "ROUGE" << std::setw(6) << "BLEU" << std::setw(6) << "TF1";
  }
  text << '\n';

  ordered_json doc{{"columns", ordered_json::array()}, {"rows", ordered_json::array()}};
  for (const auto& m : methods) doc["columns"].push_back(m);
  for (const auto& s : settings) {
    text << std::left << std::setw(8) << s;
    ordered_json row{{"setting", s}, {"cells", ordered_json::object()}};
    for (const auto& m : methods) {
      auto it = cells.find({s, m});
      text << "| ";
      if (it == cells.end()) {
        text << std::setw(kCell) << "-";
        continue;
      }
      const auto& r = *it->second;
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(2) << std::left << std::setw(6) << r.micro_f1
           << std::setw(6) << r.confusion.tp << std::setw(6) << r.rouge_l_f1 << std::setw(6)
           << r.corpus_bleu << std::setw(6) << r.token_f1;
      text << std::setw(kCell) << cell.str();
      row["cells"][m] = {{"f1", r.micro_f1},
                         {"tps", r.confusion.tp},
                         {"rouge", r.rouge_l_f1},
                         {"bleu", r.corpus_bleu},
                         {"tf1", r.token_f1},
                         {"positive_f1", r.positive_f1}};
    }
    text << '\n';
    doc["rows"].push_back(std::move(row));
  }
  return {text.str(), std::move(doc)};
}

ConfusionCounts confusion_figure_data(const RunRecord& rec) { return evaluate_run(rec).confusion; }

std::string confusion_svg(const ConfusionCounts& c, const std::string& title) {
  constexpr double kCell = 120, kLeft = 110, kTop = 70;
  const double total = static_cast<double>(std::max<std::size_t>(c.total(), 1));
  // Rows are gold labels, columns predictions.
  const std::size_t grid[2][2] = {{c.tp, c.fn}, {c.fp, c.tn}};
  const char* names[2] = {"positive", "negative"};

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLeft + 2 * kCell + 30
      << "\" height=\"" << kTop + 2 * kCell + 50 << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft + kCell << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << svg_escape(title) << "</text>\n";
  svg << "<text x=\"" << kLeft + kCell << "\" y=\"48\" text-anchor=\"middle\">predicted</text>\n";
  for (int i = 0; i < 2; ++i) {
    svg << "<text x=\"" << kLeft + kCell * (i + 0.5) << "\" y=\"" << kTop - 6
        << "\" text-anchor=\"middle\">" << names[i] << "</text>\n";
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << kTop + kCell * (i + 0.5)
        << "\" text-anchor=\"end\">" << names[i] << "</text>\n";
  }
  svg << "<text x=\"20\" y=\"" << kTop + kCell << "\" transform=\"rotate(-90 20 " << kTop + kCell
      << ")\" text-anchor=\"middle\">gold</text>\n";
  for (int r = 0; r < 2; ++r) {
    for (int col = 0; col < 2; ++col) {
      const double share = static_cast<double>(grid[r][col]) / total;
      const int shade = static_cast<int>(255 - 200 * share);
      svg << "<rect x=\"" << kLeft + kCell * col << "\" y=\"" << kTop + kCell * r << "\" width=\""
          << kCell << "\" height=\"" << kCell << "\" fill=\"rgb(" << shade << "," << shade
          << ",255)\" stroke=\"black\"/>\n";
      svg << "<text x=\"" << kLeft + kCell * (col + 0.5) << "\" y=\"" << kTop + kCell * (r + 0.5) + 5
          << "\" text-anchor=\"middle\" font-size=\"18\">" << grid[r][col] << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace symptex
