#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "advlab/datasets/image_set.hpp"
#include "advlab/error.hpp"
#include "advlab/random.hpp"

namespace advlab {

namespace detail {

// Sum of Gaussian bumps with per-bump colours, scaled so max |value| = 1.
inline std::vector<double> blob_prototype(Rng& rng, std::size_t side, std::size_t channels,
                                          int bumps, double margin, double rmin, double rmax) {
  std::vector<double> img(side * side * channels, 0.0);
  for (int b = 0; b < bumps; ++b) {
    const double cy = rng.uniform(margin, side - margin), cx = rng.uniform(margin, side - margin);
    const double r = rng.uniform(rmin, rmax);
    std::vector<double> colour(channels);
    for (auto& c : colour) c = rng.uniform(-1.0, 1.0);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const double g = std::exp(-d2 / (2 * r * r));
        for (std::size_t c = 0; c < channels; ++c) img[(y * side + x) * channels + c] += g * colour[c];
      }
    }
  }
  double peak = 0;
  for (const double v : img) peak = std::max(peak, std::abs(v));
  if (peak > 0) {
    for (auto& v : img) v /= peak;
  }
  return img;
}

inline float quantize_pixel(double v) { return static_cast<float>(std::clamp(std::round(v), 0.0, 255.0)); }

}  // namespace detail

/// Grayscale Gaussian-blob classes plus pixel noise. Deterministic in `seed`.
inline LabeledImageSet synth_blobs(std::size_t class_count, std::size_t per_class,
                                   std::size_t resolution, std::uint64_t seed) {
  if (class_count == 0 || per_class == 0 || resolution == 0) {
    throw ConfigError("synth_blobs: arguments must be positive");
  }
  Rng rng(seed);
  std::vector<std::vector<double>> protos;
  const double side = static_cast<double>(resolution);
  for (std::size_t c = 0; c < class_count; ++c) {
    protos.push_back(detail::blob_prototype(rng, resolution, 1, 2, side / 6, side / 10, side / 5));
  }
  const std::size_t n = class_count * per_class, d = resolution * resolution;
  LabeledImageSet set{Tensor<float>({n, resolution, resolution, 1}), std::vector<int>(n), class_count};
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = order[i] % class_count;
    set.labels[i] = static_cast<int>(c);
    const double gain = rng.uniform(0.8, 1.0);
    for (std::size_t p = 0; p < d; ++p) {
      set.images[i * d + p] = detail::quantize_pixel(128.0 + 100.0 * gain * protos[c][p] + 12.0 * rng.normal());
    }
  }
  return set;
}

/// CIFAR-shaped (32×32×3, 10 classes) stand-in with two cue types per class:
/// a large low-frequency colour "shape" and a low-amplitude high-frequency
/// grating "texture". Each cue agrees with the label with its own probability
/// and otherwise shows a uniformly drawn class. The texture is strictly below
/// small training budgets, so only the shape survives adversarial training.
struct ShapeTextureSpec {
  std::size_t classes = 10;
  std::size_t side = 32;
  std::size_t channels = 3;
  double shape_amplitude = 32.0;
  double texture_amplitude = 1.0;
  double noise_sigma = 2.0;
  double shape_agreement = 0.8;
  double texture_agreement = 0.9;
  double period_min = 2.2;
  double period_max = 4.0;
  std::uint64_t prototype_seed = 0;

  void validate() const {
    if (classes < 2 || side < 8 || channels == 0) throw ConfigError("shape-texture: bad geometry");
    if (shape_amplitude < 0 || texture_amplitude < 0 || noise_sigma < 0) {
      throw ConfigError("shape-texture: amplitudes must be non-negative");
    }
    for (const double p : {shape_agreement, texture_agreement}) {
      if (p < 0 || p > 1) throw ConfigError("shape-texture: agreement must be in [0,1]");
    }
    if (!(period_min >= 2.0 && period_max >= period_min)) throw ConfigError("shape-texture: bad periods");
  }
};

struct ShapeTexturePrototypes {
  std::vector<std::vector<double>> shapes;
  std::vector<std::vector<double>> textures;
};

inline ShapeTexturePrototypes shape_texture_prototypes(const ShapeTextureSpec& spec) {
  spec.validate();
  Rng rng(spec.prototype_seed);
  const std::size_t side = spec.side, ch = spec.channels;
  ShapeTexturePrototypes protos;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    protos.shapes.push_back(detail::blob_prototype(rng, side, ch, 3, side / 8.0, 3.0, 7.0));
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double period = rng.uniform(spec.period_min, spec.period_max);
    std::vector<double> phase(ch);
    for (auto& p : phase) p = rng.uniform(0.0, 2 * std::numbers::pi);
    std::vector<double> tex(side * side * ch);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double t = (std::cos(angle) * x + std::sin(angle) * y) * 2 * std::numbers::pi / period;
        for (std::size_t k = 0; k < ch; ++k) {
          const double s = std::sin(t + phase[k]);
          tex[(y * side + x) * ch + k] = s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0);
        }
      }
    }
    protos.textures.push_back(std::move(tex));
  }
  return protos;
}

/// `per_class` images of every class in seeded random order.
inline LabeledImageSet synth_shape_texture(const ShapeTextureSpec& spec, std::size_t per_class,
                                           std::uint64_t sample_seed) {
  if (per_class == 0) throw ConfigError("shape-texture: per_class must be positive");
  const auto protos = shape_texture_prototypes(spec);
  Rng rng(sample_seed);
  const std::size_t n = spec.classes * per_class, d = spec.side * spec.side * spec.channels;
  LabeledImageSet set{Tensor<float>({n, spec.side, spec.side, spec.channels}), std::vector<int>(n),
                      spec.classes};
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  auto cue = [&](std::size_t c, double agreement) {
    return rng.uniform() < agreement ? c : static_cast<std::size_t>(rng.below(spec.classes));
  };
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = order[i] % spec.classes;
    set.labels[i] = static_cast<int>(c);
    const std::size_t sc = cue(c, spec.shape_agreement);
    const std::size_t tc = cue(c, spec.texture_agreement);
    const double gain = spec.shape_amplitude * rng.uniform(0.6, 1.0);
    for (std::size_t p = 0; p < d; ++p) {
      const double v = 128.0 + gain * protos.shapes[sc][p] + spec.texture_amplitude * protos.textures[tc][p] +
                       spec.noise_sigma * rng.normal();
      set.images[i * d + p] = detail::quantize_pixel(v);
    }
  }
  return set;
}

}  // namespace advlab
