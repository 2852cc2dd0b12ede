#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advlab/error.hpp"
#include "advlab/gradcore/tensor.hpp"
#include "advlab/random.hpp"

namespace advlab {

/// Images N×H×W×C holding raw pixel values in [0,255]; labels in [0, class_count).
struct LabeledImageSet {
  Tensor<float> images;
  std::vector<int> labels;
  std::size_t class_count = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t height() const { return images.dim(1); }
  std::size_t width() const { return images.dim(2); }
  std::size_t channels() const { return images.dim(3); }
  std::size_t image_size() const { return images.size() / std::max<std::size_t>(size(), 1); }

  void validate() const {
    if (labels.empty()) throw ShapeError("image set is empty");
    if (images.rank() != 4 || images.dim(0) != labels.size()) {
      throw ShapeError("image set: images " + shape_str(images.shape()) + " do not match " +
                       std::to_string(labels.size()) + " labels");
    }
    if (class_count == 0) throw ShapeError("image set: class_count must be positive");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
        throw RangeError("image set: label " + std::to_string(labels[i]) + " at index " +
                         std::to_string(i) + " outside [0," + std::to_string(class_count) + ")");
      }
    }
    for (const float v : images.data()) {
      if (!(v >= 0.0f && v <= 255.0f)) throw RangeError("image set: pixel outside [0,255]");
    }
  }

  LabeledImageSet subset(std::span<const std::size_t> index) const {
    LabeledImageSet out{images.gather_rows(index), {}, class_count};
    out.labels.reserve(index.size());
    for (const auto i : index) out.labels.push_back(labels.at(i));
    return out;
  }

  LabeledImageSet slice(std::size_t begin, std::size_t count) const {
    LabeledImageSet out{images.rows(begin, count), {}, class_count};
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
    return out;
  }

  std::vector<std::size_t> class_histogram() const {
    std::vector<std::size_t> h(class_count, 0);
    for (const int y : labels) ++h[static_cast<std::size_t>(y)];
    return h;
  }

  friend bool operator==(const LabeledImageSet&, const LabeledImageSet&) = default;
};

/// Seeded shuffle followed by a split into (train, held-out) with `holdout` images held out.
inline std::pair<LabeledImageSet, LabeledImageSet> split_holdout(const LabeledImageSet& set,
                                                                 std::size_t holdout,
                                                                 std::uint64_t seed) {
  if (holdout == 0 || holdout >= set.size()) {
    throw ConfigError("split_holdout: holdout must be in [1, " + std::to_string(set.size()) + ")");
  }
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  const std::span<const std::size_t> all(order);
  return {set.subset(all.subspan(holdout)), set.subset(all.first(holdout))};
}

}  // namespace advlab
