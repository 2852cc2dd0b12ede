#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "advlab/datasets/image_set.hpp"
#include "advlab/error.hpp"
#include "advlab/random.hpp"

namespace advlab {

struct BenchmarkSample {
  LabeledImageSet set;
  std::vector<std::size_t> source_index;
  std::size_t per_class = 0;
  std::uint64_t seed = 0;
};

/// Exactly k images per class, drawn uniformly without replacement per class.
/// Output is ordered by class, then by source index, so it does not depend on
/// the order in which the draws happened.
inline BenchmarkSample sample_benchmark(const LabeledImageSet& set, std::size_t k_per_class,
                                        std::uint64_t seed) {
  if (k_per_class == 0) throw ConfigError("sample_benchmark: k_per_class must be positive");
  std::vector<std::vector<std::size_t>> members(set.class_count);
  for (std::size_t i = 0; i < set.size(); ++i) members[static_cast<std::size_t>(set.labels[i])].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < set.class_count; ++c) {
    auto& m = members[c];
    if (m.size() < k_per_class) {
      throw RangeError("sample_benchmark: class " + std::to_string(c) + " has " + std::to_string(m.size()) +
                       " images, needs " + std::to_string(k_per_class));
    }
    rng.shuffle(m.begin(), m.end());
    std::vector<std::size_t> pick(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(k_per_class));
    std::sort(pick.begin(), pick.end());
    chosen.insert(chosen.end(), pick.begin(), pick.end());
  }
  return {set.subset(chosen), chosen, k_per_class, seed};
}

}  // namespace advlab
