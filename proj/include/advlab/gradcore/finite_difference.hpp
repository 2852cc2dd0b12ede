#pragma once

#include <span>
#include <utility>
#include <vector>

#include "advlab/error.hpp"
#include "advlab/gradcore/tensor.hpp"

namespace advlab {

/// Central differences (S(x + h e_i) - S(x - h e_i)) / 2h for every
/// coordinate of x. Test oracle for the analytic gradients.
template <std::floating_point T, class ScalarFn>
Tensor<T> finite_difference(ScalarFn&& scalar, Tensor<T> x, T h) {
  if (!(h > T{0})) throw ConfigError("finite difference step must be positive");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T orig = x[i];
    x[i] = orig + h;
    const T up = scalar(std::as_const(x));
    x[i] = orig - h;
    const T down = scalar(std::as_const(x));
    x[i] = orig;
    out[i] = (up - down) / (T{2} * h);
  }
  return out;
}

/// Central difference along selected coordinates only.
template <std::floating_point T, class ScalarFn>
std::vector<T> finite_difference_at(ScalarFn&& scalar, Tensor<T> x, T h,
                                    std::span<const std::size_t> coords) {
  if (!(h > T{0})) throw ConfigError("finite difference step must be positive");
  std::vector<T> out;
  out.reserve(coords.size());
  for (const std::size_t i : coords) {
    const T orig = x[i];
    x[i] = orig + h;
    const T up = scalar(std::as_const(x));
    x[i] = orig - h;
    const T down = scalar(std::as_const(x));
    x[i] = orig;
    out.push_back((up - down) / (T{2} * h));
  }
  return out;
}

}  // namespace advlab
