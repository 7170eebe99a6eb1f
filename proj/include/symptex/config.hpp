#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "symptex/corpus.hpp"
#include "symptex/experiment.hpp"

namespace symptex {

/// Where a run's setting comes from: either rebuilt from the source corpora
/// and a seed, or resolved from a manifest against a set of datasets.
struct SettingSource {
  std::optional<SettingName> name;
  std::filesystem::path bdi;
  std::filesystem::path psysym;
  std::filesystem::path controls;
  std::uint64_t seed = 0;

  std::optional<std::filesystem::path> manifest;
  std::vector<std::filesystem::path> datasets;
};

struct RunConfig {
  SettingSource setting;
  PipelineConfig pipeline;
  std::size_t repeats = 1;
  std::optional<std::filesystem::path> external;  // extra training posts for mixing ablations
};

/// Parses a JSON run config. Relative paths resolve against the config
/// file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

ExperimentSetting load_setting(const SettingSource& src);

}  // namespace symptex
