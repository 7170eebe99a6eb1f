#pragma once

#include <cstdint>
#include <vector>

#include "symptex/corpus.hpp"

namespace symptex {

// Default sizes follow the reference corpus statistics: 357 BDI-Sen and 752
// PsySym positives, 1998 controls, 1956 external DepreSym posts.
struct SyntheticSizes {
  std::size_t bdi = kReferenceBdiPositives;
  std::size_t psysym = kReferencePsySymPositives;
  std::size_t controls = 1998;
  std::size_t external = 1956;
};

struct SyntheticCorpora {
  std::vector<Post> bdi;
  std::vector<Post> psysym;
  std::vector<Post> controls;
  std::vector<Post> external;
};

/// Templated posts for exercising the pipeline without the real corpora.
/// Positive posts mix filler with one or two symptom sentences, which are
/// their gold spans (with code-point offsets). Controls are filler only.
SyntheticCorpora make_synthetic_corpora(const SyntheticSizes& sizes, std::uint64_t seed);

}  // namespace symptex
