#include "symptex/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "symptex/error.hpp"

namespace symptex {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ValidationError("malformed config " + path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  RunConfig cfg;
  try {
    const auto& s = j.at("setting");
    if (s.contains("manifest")) {
      cfg.setting.manifest = resolve(base, s["manifest"].get<std::string>());
      for (const auto& d : s.at("datasets")) cfg.setting.datasets.push_back(resolve(base, d.get<std::string>()));
    } else {
      cfg.setting.name = parse_setting_name(s.at("name").get<std::string>());
      cfg.setting.bdi = resolve(base, s.at("bdi").get<std::string>());
      cfg.setting.psysym = resolve(base, s.at("psysym").get<std::string>());
      cfg.setting.controls = resolve(base, s.at("controls").get<std::string>());
      cfg.setting.seed = s.value("seed", std::uint64_t{0});
    }

    auto& p = cfg.pipeline;
    p.mode = parse_pipeline_mode(j.value("mode", "single_step"));
    p.method_label = j.value("method_label", "");
    if (p.mode == PipelineMode::TwoStep) {
      p.classifier = backend_spec_from_json(j.at("classifier"));
      p.explainer = backend_spec_from_json(j.at("explainer"));
    } else {
      p.backend = backend_spec_from_json(j.at("backend"));
    }
    if (j.contains("prompt")) {
      const auto& pr = j["prompt"];
      if (pr.contains("instructions_path"))
        p.fewshot.instructions = read_text(resolve(base, pr["instructions_path"].get<std::string>()));
      else if (pr.contains("instructions"))
        p.fewshot.instructions = pr["instructions"].get<std::string>();
      p.fewshot.n_pos = pr.value("n_pos", p.fewshot.n_pos);
      p.fewshot.n_neg = pr.value("n_neg", p.fewshot.n_neg);
      p.fewshot.seed = pr.value("seed", j.value("seed", std::uint64_t{0}));
      p.fewshot.prompt_char_budget = pr.value("prompt_char_budget", p.fewshot.prompt_char_budget);
    } else {
      p.fewshot.seed = j.value("seed", std::uint64_t{0});
    }
    p.seed = j.value("seed", std::uint64_t{0});
    p.input_char_budget = j.value("input_char_budget", p.input_char_budget);
    p.out_dir = resolve(base, j.value("output_dir", std::string("runs")));
    if (j.contains("run_id")) p.run_id = j["run_id"].get<std::string>();
    cfg.repeats = j.value("repeats", std::size_t{1});
    if (cfg.repeats == 0) throw ValidationError("repeats must be positive");
    if (j.contains("external")) cfg.external = resolve(base, j["external"].get<std::string>());
  } catch (const json::exception& e) {
    throw ValidationError("invalid config " + path.string() + ": " + e.what());
  }
  validate(cfg.pipeline);
  return cfg;
}

ExperimentSetting load_setting(const SettingSource& src) {
  if (src.manifest) {
    std::vector<Post> pool;
    for (const auto& d : src.datasets) {
      auto posts = load_dataset(d);
      pool.insert(pool.end(), posts.begin(), posts.end());
    }
    return read_manifest(*src.manifest, pool);
  }
  if (!src.name) throw ValidationError("setting needs a name or a manifest");
  const auto bdi = load_dataset(src.bdi, Source::BdiSen);
  const auto psysym = load_dataset(src.psysym, Source::PsySym);
  const auto controls = load_dataset(src.controls, Source::PsySym);
  return build_setting(*src.name, bdi, psysym, controls, src.seed);
}

}  // namespace symptex
