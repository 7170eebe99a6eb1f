#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace symptex {

/// Reproducible sampling on top of std::mt19937_64.
///
/// The engine's output sequence is fixed by the C++ standard, but the
/// standard distributions are not, so bounded draws use our own rejection
/// sampling. A run seed plus a purpose label (e.g. "split/bdi") selects an
/// independent stream, so adding a new sampling step never perturbs the
/// existing ones.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream);

  /// Uniform integer in [0, bound). `bound` must be positive.
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// `k` distinct indices from [0, n), in selection order.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

}  // namespace symptex
