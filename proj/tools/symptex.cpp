// Command-line front end for explainable symptom detection experiments.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "symptex/annotation.hpp"
#include "symptex/annotation_server.hpp"
#include "symptex/config.hpp"
#include "symptex/error.hpp"
#include "symptex/experiment.hpp"
#include "symptex/synthetic.hpp"

namespace fs = std::filesystem;
using namespace symptex;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitBackend = 3;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

std::vector<Post> load_nonempty(const fs::path& path, Source source) {
  auto posts = load_dataset(path, source);
  if (posts.empty()) throw ValidationError("dataset " + path.string() + " is empty");
  return posts;
}

void write_confusion_figure(const RunRecord& rec, const MetricReport& report) {
  if (rec.dir.empty()) return;
  fs::create_directories(rec.dir / "figures");
  write_text(rec.dir / "figures" / "confusion.svg",
             confusion_svg(report.confusion, rec.setting_name + " / " + rec.method_label));
}

int cmd_synth(const fs::path& out, std::uint64_t seed) {
  fs::create_directories(out);
  const auto c = make_synthetic_corpora({}, seed);
  save_dataset(out / "bdi.jsonl", c.bdi);
  save_dataset(out / "psysym.jsonl", c.psysym);
  save_dataset(out / "controls.jsonl", c.controls);
  save_dataset(out / "depresym.jsonl", c.external);
  std::cout << "wrote " << c.bdi.size() << " BDI-Sen, " << c.psysym.size() << " PsySym, "
            << c.controls.size() << " control and " << c.external.size() << " DepreSym posts to "
            << out.string() << "\n";
  return 0;
}

int cmd_build_settings(const fs::path& bdi_path, const fs::path& psy_path, const fs::path& ctl_path,
                       std::uint64_t seed, const fs::path& out) {
  const auto bdi = load_nonempty(bdi_path, Source::BdiSen);
  const auto psysym = load_nonempty(psy_path, Source::PsySym);
  const auto controls = load_nonempty(ctl_path, Source::PsySym);
  fs::create_directories(out);
  std::cout << std::left << std::setw(9) << "Setting" << std::setw(12) << "Train +/-"
            << "Test +/-\n";
  for (auto name : all_settings()) {
    const auto s = build_setting(name, bdi, psysym, controls, seed);
    write_manifest(out / (std::string(to_string(name)) + ".jsonl"), s);
    std::ostringstream train, test;
    train << s.train_positives() << "/" << s.train_negatives();
    test << s.test_positives() << "/" << s.test_negatives();
    std::cout << std::setw(9) << to_string(name) << std::setw(12) << train.str() << test.str() << "\n";
  }
  return 0;
}

int cmd_run(const fs::path& config_path, const std::string& run_id, const std::string& output_dir) {
  auto cfg = load_run_config(config_path);
  if (!run_id.empty()) cfg.pipeline.run_id = run_id;
  if (!output_dir.empty()) cfg.pipeline.out_dir = output_dir;
  const auto setting = load_setting(cfg.setting);

  std::vector<ReportRow> rows;
  bool all_failed = false;
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    auto p = cfg.pipeline;
    if (cfg.repeats > 1) {
      p.fewshot.seed += r;
      if (p.run_id) p.run_id = *p.run_id + "-r" + std::to_string(r + 1);
    }
    const auto rec = execute_run(setting, p);
    const auto report = evaluate_run(rec);
    write_report(rec, report);
    write_confusion_figure(rec, report);
    std::cerr << "run " << rec.run_id << " -> " << rec.dir.string() << " (" << rec.records.size()
              << " posts, " << rec.failures << " failures)\n";
    all_failed = all_failed || (!rec.records.empty() && rec.failures == rec.records.size());
    rows.push_back({rec.setting_name, rec.method_label, report});
  }
  std::cout << report_table(rows).text;
  if (all_failed) {
    std::cerr << "error: every inference call failed; see calls.jsonl in the run directory\n";
    return kExitBackend;
  }
  return 0;
}

int cmd_score(const fs::path& run_dir, const std::string& out) {
  const auto rec = load_run(run_dir);
  const auto report = evaluate_run(rec);
  const auto doc = report_document(rec, report);
  if (out.empty()) {
    write_report(rec, report);
    write_confusion_figure(rec, report);
  } else {
    write_text(out, doc);
  }
  std::cout << doc;
  return 0;
}

std::vector<std::size_t> parse_sizes(const std::string& csv) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ValidationError("bad size '" + item + "' in --sizes");
    }
  }
  return out;
}

int cmd_ablate(const fs::path& config_path, const std::string& sizes, const std::string& external,
               std::size_t step, const std::string& out_arg) {
  auto cfg = load_run_config(config_path);
  const auto setting = load_setting(cfg.setting);
  const fs::path out = out_arg.empty() ? cfg.pipeline.out_dir / "ablation" : fs::path(out_arg);
  fs::create_directories(out);
  cfg.pipeline.out_dir = out / "runs";
  if (!cfg.pipeline.run_id) cfg.pipeline.run_id = "ablation";

  AblationSeries series;
  std::string title;
  if (!sizes.empty()) {
    const auto ns = parse_sizes(sizes);
    series = ablation_curve(setting, ns, cfg.pipeline);
    for (auto n : ns) {
      const auto sub = subsample_training(setting, n, cfg.pipeline.seed);
      export_training(out / ("train_n" + std::to_string(n) + ".jsonl"), sub.train,
                      TrainingMode::SingleStep, cfg.pipeline.input_char_budget);
    }
    title = std::string(to_string(setting.name)) + ": training-set size";
  } else {
    const fs::path ext = !external.empty() ? fs::path(external) : cfg.external.value_or(fs::path());
    if (ext.empty()) throw ValidationError("ablate needs --sizes or --external");
    if (step == 0) throw ValidationError("--step must be positive");
    const auto posts = load_nonempty(ext, Source::DepreSym);
    series = external_mix_curve(setting, posts, step, cfg.pipeline);
    const auto base = setting.train_positives();
    for (const auto& s : mix_external(setting, posts, step)) {
      export_training(out / ("train_ext" + std::to_string(s.train_positives() - base) + ".jsonl"),
                      s.train, TrainingMode::SingleStep, cfg.pipeline.input_char_budget);
    }
    title = std::string(to_string(setting.name)) + ": external training examples";
  }
  const auto csv = ablation_csv(series);
  write_text(out / "ablation.csv", csv);
  write_text(out / "ablation.svg", ablation_svg(series, title));
  std::cout << csv;
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_annotate(const fs::path& run_dir, const std::string& assessors, const std::string& serve,
                 const std::string& static_dir, const std::string& export_path,
                 const std::string& import_path, bool stats) {
  const fs::path session_dir = run_dir / "annotation";
  std::shared_ptr<AnnotationSession> session;
  if (fs::exists(session_dir / "session.json")) {
    session = AnnotationSession::open(session_dir);
    if (!assessors.empty() && split_list(assessors) != session->assessors())
      throw ValidationError("session in " + session_dir.string() + " has assessors that differ from --assessors");
  } else {
    if (assessors.empty()) throw ValidationError("--assessors is required to create a session");
    session = AnnotationSession::create(load_run(run_dir), split_list(assessors), session_dir);
    std::cerr << "created session " << session->id() << " with " << session->items().size()
              << " items\n";
  }

  if (!import_path.empty()) {
    const auto n = import_csv(*session, import_path);
    std::cout << "imported " << n << " judgments\n";
  }
  if (!export_path.empty()) {
    export_csv(*session, export_path);
    write_text(fs::path(export_path).string() + ".elapsed.csv", elapsed_summary_csv(*session));
    std::cout << elapsed_summary_csv(*session);
  }
  if (stats) std::cout << to_json(session->stats()).dump(2) << "\n";
  if (!serve.empty()) {
    const auto colon = serve.rfind(':');
    if (colon == std::string::npos) throw ValidationError("--serve expects host:port");
    const auto host = serve.substr(0, colon);
    int port = 0;
    try {
      port = std::stoi(serve.substr(colon + 1));
    } catch (const std::exception&) {
      throw ValidationError("bad port in --serve " + serve);
    }
    AnnotationServer server(static_dir.empty() ? std::nullopt : std::optional<fs::path>(static_dir));
    server.add_session(session);
    std::cerr << "serving session " << session->id() << " on http://" << serve << "\n";
    server.listen(host, port);
  }
  return 0;
}

int cmd_export_training(const fs::path& manifest, const std::vector<std::string>& data,
                        const std::string& mode, const std::string& split, const fs::path& out,
                        std::size_t budget) {
  std::vector<Post> pool;
  for (const auto& d : data) {
    auto posts = load_dataset(d);
    pool.insert(pool.end(), posts.begin(), posts.end());
  }
  const auto setting = read_manifest(manifest, pool);
  const auto m = parse_training_mode(mode);
  fs::create_directories(out);
  for (const auto& part : split == "both" ? std::vector<std::string>{"train", "test"}
                                          : std::vector<std::string>{split}) {
    if (part != "train" && part != "test") throw ValidationError("--split must be train, test or both");
    const auto path = out / (std::string(to_string(setting.name)) + "_" + part + "_" + mode + ".jsonl");
    const auto n = export_training(path, part == "train" ? setting.train : setting.test, m, budget);
    std::cout << path.string() << ": " << n << " examples\n";
  }
  return 0;
}

int cmd_plot_confusion(const fs::path& run_dir, const std::string& out) {
  const auto rec = load_run(run_dir);
  const auto c = confusion_figure_data(rec);
  const fs::path path = out.empty() ? rec.dir / "figures" / "confusion.svg" : fs::path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_text(path, confusion_svg(c, rec.setting_name + " / " + rec.method_label));
  std::cout << "tp=" << c.tp << " fp=" << c.fp << " fn=" << c.fn << " tn=" << c.tn << " -> "
            << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"symptex: explainable depression-symptom detection toolkit"};
  app.require_subcommand(1);

  std::string out, config, run_id, run_dir, sizes, external, assessors, serve, static_dir,
      export_path, import_path, manifest, mode = "single_step", split = "train", bdi, psysym,
      controls, output_dir;
  std::vector<std::string> data;
  std::uint64_t seed = 0;
  std::size_t step = 0, budget = kDefaultInputCharBudget;
  bool stats = false;

  auto* synth = app.add_subcommand("synth", "Write synthetic corpora with the reference corpus sizes");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--seed", seed, "Generator seed");

  auto* build = app.add_subcommand("build-settings", "Build the five train/test settings");
  build->add_option("--bdi", bdi, "BDI-Sen positives (JSON lines)")->required();
  build->add_option("--psysym", psysym, "PsySym positives (JSON lines)")->required();
  build->add_option("--controls", controls, "Control posts (JSON lines)")->required();
  build->add_option("--seed", seed, "Sampling seed");
  build->add_option("--out", out, "Manifest directory")->required();

  auto* run = app.add_subcommand("run", "Execute a run and print its report row");
  run->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--run-id", run_id, "Pin the run id");
  run->add_option("--output-dir", output_dir, "Override the runs directory");

  auto* score = app.add_subcommand("score", "Re-score a stored run offline");
  score->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  score->add_option("--out", out, "Write the report here instead of <run>/report.json");

  auto* ablate = app.add_subcommand("ablate", "Training-size or external-data ablation");
  ablate->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  auto* sizes_opt = ablate->add_option("--sizes", sizes, "Comma-separated training sizes");
  auto* ext_opt = ablate->add_option("--external", external, "External training posts (JSON lines)");
  ablate->add_option("--step", step, "External posts added per point")->needs(ext_opt);
  ablate->add_option("--out", out, "Output directory");
  sizes_opt->excludes(ext_opt);

  auto* annotate = app.add_subcommand("annotate", "Expert relevance judging for a run");
  annotate->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  annotate->add_option("--assessors", assessors, "Comma-separated assessor ids");
  annotate->add_option("--serve", serve, "Serve the judging API on host:port");
  annotate->add_option("--static", static_dir, "Directory of UI assets to serve");
  annotate->add_option("--export", export_path, "Write judgments as CSV");
  annotate->add_option("--import", import_path, "Read judgments from CSV");
  annotate->add_flag("--stats", stats, "Print agreement and consensus statistics");

  auto* export_cmd = app.add_subcommand("export-training", "Write seq2seq examples for external trainers");
  export_cmd->add_option("--setting", manifest, "Setting manifest")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--data", data, "Datasets holding the manifest's posts")->required();
  export_cmd->add_option("--mode", mode, "single_step, classify_only or explain_only");
  export_cmd->add_option("--split", split, "train, test or both");
  export_cmd->add_option("--out", out, "Output directory")->required();
  export_cmd->add_option("--char-budget", budget, "Post character budget");

  auto* plot = app.add_subcommand("plot-confusion", "Render a run's confusion matrix as SVG");
  plot->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  plot->add_option("--out", out, "SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(out, seed);
    if (*build) return cmd_build_settings(bdi, psysym, controls, seed, out);
    if (*run) return cmd_run(config, run_id, output_dir);
    if (*score) return cmd_score(run_dir, out);
    if (*ablate) {
      if (sizes.empty() && external.empty() && step == 0) {
        std::cerr << "error: ablate needs --sizes or --external with --step\n";
        return kExitUsage;
      }
      return cmd_ablate(config, sizes, external, step, out);
    }
    if (*annotate) {
      if (serve.empty() && export_path.empty() && import_path.empty() && !stats && assessors.empty()) {
        std::cerr << "error: annotate needs one of --serve, --export, --import, --stats\n";
        return kExitUsage;
      }
      return cmd_annotate(run_dir, assessors, serve, static_dir, export_path, import_path, stats);
    }
    if (*export_cmd) return cmd_export_training(manifest, data, mode, split, out, budget);
    if (*plot) return cmd_plot_confusion(run_dir, out);
  } catch (const BackendError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}
