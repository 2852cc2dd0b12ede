#pragma once

#include <cmath>

#include "advlab/error.hpp"
#include "advlab/gradcore/tensor.hpp"

namespace advlab {

inline constexpr double kPixelMin = 0.0;
inline constexpr double kPixelMax = 255.0;

/// Affine pixel map (x - offset) / scale applied as the first layer of every
/// model. Inputs are always raw pixels in [0, 255].
struct PreprocessSpec {
  double offset = 127.5;
  double scale = 127.5;

  void validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(offset)) {
      throw ConfigError("preprocess scale must be positive and finite");
    }
  }

  /// Radius in the model's internal space of a pixel-space budget.
  double internal_radius(double pixel_epsilon) const { return pixel_epsilon / scale; }

  friend bool operator==(const PreprocessSpec&, const PreprocessSpec&) = default;
};

template <std::floating_point T>
Tensor<T> apply_preprocess(const PreprocessSpec& spec, Tensor<T> pixels) {
  spec.validate();
  const T inv = static_cast<T>(1.0 / spec.scale);
  const T shift = static_cast<T>(-spec.offset / spec.scale);
  for (auto& v : pixels.data()) v = v * inv + shift;
  return pixels;
}

template <std::floating_point T>
void check_pixel_range(const Tensor<T>& pixels) {
  for (const T v : pixels.data()) {
    if (!(v >= T{0} && v <= T{255})) {
      throw RangeError("pixel value " + std::to_string(static_cast<double>(v)) +
                       " outside [0, 255]");
    }
  }
}

}  // namespace advlab
