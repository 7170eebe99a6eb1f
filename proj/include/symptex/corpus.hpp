#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace symptex {

enum class Source { BdiSen, PsySym, DepreSym, Synthetic };
enum class Label { Positive, Negative };

std::string_view to_string(Source s);
std::string_view to_string(Label l);
Source parse_source(std::string_view s);
Label parse_label(std::string_view s);

struct ExplanationSpan {
  std::string text;
  // Code-point offsets into the owning post's text, [char_start, char_end).
  std::optional<std::size_t> char_start;
  std::optional<std::size_t> char_end;
};

struct Post {
  std::string id;
  std::string text;
  Source source = Source::Synthetic;
  Label gold_label = Label::Negative;
  std::vector<ExplanationSpan> gold_explanations;

  bool positive() const { return gold_label == Label::Positive; }
};

/// Throws ValidationError when `p` breaks the label/explanation invariants.
void validate_post(const Post& p);

/// Reads a JSON-lines dataset. Each line carries id, text, label and
/// explanations[{text, start?, end?}]; an optional "source" field overrides
/// `default_source`. Records come back in file order.
std::vector<Post> load_dataset(const std::filesystem::path& path,
                               Source default_source = Source::Synthetic);

void save_dataset(const std::filesystem::path& path, const std::vector<Post>& posts);

enum class SettingName { BB, BP, PP, PB, MM };

std::string_view to_string(SettingName n);
SettingName parse_setting_name(std::string_view s);
const std::vector<SettingName>& all_settings();

struct ExperimentSetting {
  SettingName name = SettingName::BB;
  std::vector<Post> train;
  std::vector<Post> test;
  std::uint64_t seed = 0;

  std::size_t train_positives() const;
  std::size_t train_negatives() const;
  std::size_t test_positives() const;
  std::size_t test_negatives() const;
};

// Corpus sizes for which the test control counts are pinned to the
// reference ones rather than derived from the 1:5 rule.
inline constexpr std::size_t kReferenceBdiPositives = 357;
inline constexpr std::size_t kReferencePsySymPositives = 752;
inline constexpr std::size_t kReferenceBdiTestControls = 359;
inline constexpr std::size_t kReferencePsySymTestControls = 753;

/// Positives kept for training under the 80-20 split.
std::size_t train_share(std::size_t positives);

/// Number of controls added to a source's test positives.
std::size_t test_control_count(Source source, std::size_t corpus_positives,
                               std::size_t test_positives);

/// Builds one named setting. Each source's positives are split 80-20, and
/// the shuffled control pool is carved into four disjoint slices (BDI train,
/// PsySym train, BDI test, PsySym test) so that all five settings built from
/// the same inputs and seed share the same partition.
ExperimentSetting build_setting(SettingName name, const std::vector<Post>& bdi,
                                const std::vector<Post>& psysym,
                                const std::vector<Post>& controls, std::uint64_t seed);

/// Keeps `n` training positives chosen uniformly at random plus `n` training
/// controls. The test split is untouched.
ExperimentSetting subsample_training(const ExperimentSetting& setting, std::size_t n,
                                     std::uint64_t seed);

/// Shuffles `external` and returns one setting per `step` of it, each
/// training set being the base training set plus the next prefix of the
/// shuffled external posts. The last element may be a partial step.
std::vector<ExperimentSetting> mix_external(const ExperimentSetting& setting,
                                            const std::vector<Post>& external,
                                            std::size_t step);

/// Manifest: a header line {setting, seed, counts} then one line per member
/// {id, split, label, source}.
void write_manifest(const std::filesystem::path& path, const ExperimentSetting& setting);

/// Rebuilds a setting from a manifest by resolving ids against `pool`.
ExperimentSetting read_manifest(const std::filesystem::path& path,
                                const std::vector<Post>& pool);

}  // namespace symptex
