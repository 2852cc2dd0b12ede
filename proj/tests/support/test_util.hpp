#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "advlab/gradcore/tape.hpp"
#include "advlab/gradcore/tensor.hpp"
#include "advlab/random.hpp"
#include "advlab/zoo/classifier.hpp"

namespace advlab::testing {

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor), where floor is 1e-3 of the
/// largest reference magnitude so coordinates with vanishing gradient do not
/// dominate.
inline double max_relative_error(const std::vector<double>& analytic,
                                 const std::vector<double>& numeric) {
  double scale = 0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  for (double v : analytic) scale = std::max(scale, std::abs(v));
  const double floor = std::max(1e-3 * scale, 1e-12);
  double worst = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

inline double max_relative_error(const Tensor<double>& a, const Tensor<double>& n) {
  return max_relative_error(a.storage(), n.storage());
}

template <class T = double>
Tensor<T> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Pixels in [margin, 255 - margin] so finite-difference probes stay in range.
template <class T = double>
Tensor<T> random_pixels(Rng& rng, Shape shape, double margin = 1.0) {
  return random_tensor<T>(rng, std::move(shape), margin, 255.0 - margin);
}

inline std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.below(classes));
  return y;
}

/// Distance of the closest relu input to its kink for one forward pass.
/// Finite differences straddling a kink measure a different function, so
/// gradient checks draw instances with a comfortable margin.
template <class Model>
double relu_margin(const Model& model, const Tensor<double>& x) {
  Tape<double> tape;
  const auto params = model.bind(tape, false);
  model.forward(tape, tape.constant(x), params);
  return tape.relu_margin();
}

/// Softmax regression on (h, w, c) pixels with weights (h*w*c, classes) and
/// identity preprocessing, so logits are exactly x·W + b.
inline Classifier<double> linear_classifier(const Tensor<double>& w, std::size_t h, std::size_t wd, std::size_t c,
                                            Tensor<double> b = {}) {
  ModelConfig cfg;
  cfg.family = Family::mlp;
  cfg.height = h;
  cfg.width = wd;
  cfg.channels = c;
  cfg.num_classes = w.dim(1);
  cfg.hidden = {};
  if (b.empty()) b = Tensor<double>({w.dim(1)});
  std::vector<NamedTensor<double>> ps{{"head.w", w}, {"head.b", std::move(b)}};
  return Classifier<double>(cfg, PreprocessSpec{0.0, 1.0}, std::move(ps));
}

}  // namespace advlab::testing
