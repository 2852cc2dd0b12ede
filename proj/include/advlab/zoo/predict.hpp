#pragma once

#include <algorithm>
#include <vector>

#include "advlab/zoo/classifier.hpp"

namespace advlab {

template <std::floating_point T>
struct Prediction {
  Tensor<T> logits;         // [N, C]
  Tensor<T> probabilities;  // [N, C], rows sum to 1
  std::vector<int> labels;  // argmax per row
};

template <std::floating_point T>
std::vector<int> argmax_rows(const Tensor<T>& m) {
  const std::size_t n = m.dim(0), c = m.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = m.data().data() + i * c;
    out[i] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  return out;
}

/// Logits for a batch of raw pixels, evaluated `chunk` images at a time.
template <std::floating_point T>
Tensor<T> logits(const Classifier<T>& model, const Tensor<T>& batch, std::size_t chunk = 128) {
  const std::size_t n = batch.dim(0);
  const std::size_t c = model.config().num_classes;
  Tensor<T> out({n, c});
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    Tape<T> tape;
    const auto params = model.bind(tape, false);
    const Var x = tape.constant(batch.rows(start, count));
    const auto& l = tape.value(model.forward(tape, x, params));
    std::copy(l.data().begin(), l.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(start * c));
  }
  return out;
}

template <std::floating_point T>
Prediction<T> predict(const Classifier<T>& model, const Tensor<T>& batch, std::size_t chunk = 128) {
  Prediction<T> p;
  p.logits = logits(model, batch, chunk);
  p.probabilities = Tensor<T>(p.logits.shape());
  const std::size_t n = p.logits.dim(0), c = p.logits.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = p.logits.data().data() + i * c;
    T* out = p.probabilities.data().data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T se = 0;
    for (std::size_t j = 0; j < c; ++j) se += out[j] = std::exp(row[j] - mx);
    for (std::size_t j = 0; j < c; ++j) out[j] /= se;
  }
  p.labels = argmax_rows(p.logits);
  return p;
}

}  // namespace advlab
