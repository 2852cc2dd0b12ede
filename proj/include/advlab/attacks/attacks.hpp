#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advlab/attacks/attack_spec.hpp"
#include "advlab/error.hpp"
#include "advlab/gradcore/model_grad.hpp"
#include "advlab/parallel.hpp"
#include "advlab/zoo/classifier.hpp"
#include "advlab/zoo/predict.hpp"

namespace advlab {

/// Images are attacked in fixed chunks of `chunk`; `threads` workers share
/// the chunks. Outputs depend on `chunk` but not on `threads`.
struct ExecOptions {
  std::size_t threads = 1;
  std::size_t chunk = 16;
};

/// Largest interpolant batch evaluated in one tape by integrated_gradients.
inline constexpr std::size_t kIgRows = 256;

/// Clamp x into [x0 - ε, x0 + ε] ∩ [0, 255].
template <std::floating_point T>
Tensor<T> project_ball(const Tensor<T>& x0, const Tensor<T>& x, double epsilon) {
  if (epsilon < 0.0) throw ConfigError("project_ball: negative epsilon");
  if (x0.shape() != x.shape()) throw ShapeError("project_ball: shape mismatch");
  check_pixel_range(x0);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double c = static_cast<double>(x0[i]);
    const double lo = std::max(c - epsilon, 0.0);
    const double hi = std::min(c + epsilon, 255.0);
    T v = static_cast<T>(std::clamp(static_cast<double>(x[i]), lo, hi));
    // Rounding to T may land one ulp outside the ball.
    if (static_cast<double>(v) > hi) v = std::nextafter(v, T{0});
    if (static_cast<double>(v) < lo) v = std::nextafter(v, T{255});
    out[i] = v;
  }
  return out;
}

template <std::floating_point T>
double linf_distance(const Tensor<T>& a, const Tensor<T>& b, std::size_t row) {
  const std::size_t d = a.size() / a.dim(0);
  double m = 0;
  for (std::size_t j = row * d; j < (row + 1) * d; ++j) {
    m = std::max(m, std::abs(static_cast<double>(a[j]) - static_cast<double>(b[j])));
  }
  return m;
}

namespace detail {

template <std::floating_point T>
void write_rows(Tensor<T>& dst, std::size_t begin, const Tensor<T>& src) {
  std::copy(src.data().begin(), src.data().end(),
            dst.data().begin() + static_cast<std::ptrdiff_t>(begin * (dst.size() / dst.dim(0))));
}

template <std::floating_point T>
Tensor<T> baseline_image(const Tensor<double>& baseline, const Shape& image_shape) {
  if (baseline.empty()) return Tensor<T>(image_shape);
  if (baseline.shape() != image_shape) {
    throw ShapeError("baseline " + shape_str(baseline.shape()) + " does not match image " + shape_str(image_shape));
  }
  return baseline.cast<T>();
}

/// Riemann-sum IG for one chunk; baseline is one image.
template <std::floating_point T>
Tensor<T> ig_chunk(const Classifier<T>& model, const Tensor<T>& x, std::span<const int> labels,
                   const Tensor<T>& base, int s, ScalarKind kind) {
  const std::size_t b = x.dim(0), d = x.size() / b;
  Shape batch_shape = x.shape();
  const std::size_t levels = std::max<std::size_t>(1, kIgRows / b);
  Tensor<T> total(x.shape());
  for (int k0 = 1; k0 <= s; k0 += static_cast<int>(levels)) {
    const std::size_t g = std::min<std::size_t>(levels, static_cast<std::size_t>(s - k0 + 1));
    batch_shape[0] = g * b;
    Tensor<T> batch(batch_shape);
    std::vector<int> labs(g * b);
    for (std::size_t j = 0; j < g; ++j) {
      const T frac = static_cast<T>(k0 + static_cast<int>(j)) / static_cast<T>(s);
      for (std::size_t i = 0; i < b; ++i) {
        labs[j * b + i] = labels[i];
        T* row = batch.data().data() + (j * b + i) * d;
        for (std::size_t p = 0; p < d; ++p) row[p] = base[p] + frac * (x[i * d + p] - base[p]);
      }
    }
    const auto grad = input_gradient(model, batch, labs, kind);
    for (std::size_t j = 0; j < g; ++j) {
      for (std::size_t q = 0; q < b * d; ++q) total[q] += grad[j * b * d + q];
    }
  }
  Tensor<T> attr(x.shape());
  for (std::size_t q = 0; q < b * d; ++q) {
    attr[q] = (x[q] - base[q % d]) * total[q] / static_cast<T>(s);
  }
  return attr;
}

/// Adds Δ_i/‖Δ_i‖₁ to g_i after scaling g by μ, per image. Images whose
/// attribution is all zero contribute no direction; their indices are returned.
template <std::floating_point T>
std::vector<std::size_t> momentum_update(Tensor<T>& g, const Tensor<T>& delta, double mu) {
  const std::size_t b = g.dim(0), d = g.size() / b;
  std::vector<std::size_t> zero;
  for (std::size_t i = 0; i < b; ++i) {
    double l1 = 0;
    for (std::size_t p = 0; p < d; ++p) l1 += std::abs(static_cast<double>(delta[i * d + p]));
    const T m = static_cast<T>(mu);
    if (l1 == 0.0 || !std::isfinite(l1)) {
      zero.push_back(i);
      for (std::size_t p = 0; p < d; ++p) g[i * d + p] *= m;
      continue;
    }
    const T inv = static_cast<T>(1.0 / l1);
    for (std::size_t p = 0; p < d; ++p) g[i * d + p] = m * g[i * d + p] + delta[i * d + p] * inv;
  }
  return zero;
}

template <std::floating_point T>
Tensor<T> signed_step(const Tensor<T>& x, const Tensor<T>& dir, double alpha) {
  Tensor<T> out(x.shape());
  const T a = static_cast<T>(alpha);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + a * sign(dir[i]);
  return out;
}

using ChunkDiagnostics = std::vector<std::string>;

/// Runs attack_chunk over fixed chunks and assembles an AttackOutput. A chunk
/// that hits a numeric failure is retried image by image; an image that still
/// fails is returned clean and reported in the diagnostics.
template <std::floating_point T, class F>
AttackOutput<T> run_chunked(const Classifier<T>& model, const Tensor<T>& x, std::span<const int> labels,
                            const std::vector<double>& epsilons, const ExecOptions& exec,
                            const std::string& name, F&& attack_chunk) {
  if (x.rank() != 4 || x.dim(0) != labels.size() || labels.empty()) {
    throw ShapeError(name + ": need a non-empty (N,H,W,C) batch with N labels");
  }
  check_pixel_range(x);
  const std::size_t n = labels.size();
  const std::size_t chunks = (n + std::max<std::size_t>(exec.chunk, 1) - 1) / std::max<std::size_t>(exec.chunk, 1);
  AttackOutput<T> out;
  out.epsilons = epsilons;
  out.adversarial.assign(epsilons.size(), Tensor<T>(x.shape()));
  std::vector<ChunkDiagnostics> diag(chunks);
  parallel_chunks(n, exec.chunk, exec.threads, [&](std::size_t begin, std::size_t count) {
    auto& notes = diag[begin / std::max<std::size_t>(exec.chunk, 1)];
    const Tensor<T> xb = x.rows(begin, count);
    const auto yb = labels.subspan(begin, count);
    std::vector<Tensor<T>> adv;
    try {
      adv = attack_chunk(xb, yb, notes, begin);
    } catch (const NumericError&) {
      notes.clear();
      adv.assign(epsilons.size(), xb);
      for (std::size_t i = 0; i < count; ++i) {
        const Tensor<T> xi = xb.rows(i, 1);
        try {
          const auto one = attack_chunk(xi, yb.subspan(i, 1), notes, begin + i);
          for (std::size_t e = 0; e < epsilons.size(); ++e) write_rows(adv[e], i, one[e]);
        } catch (const NumericError& err) {
          notes.push_back(name + ": image " + std::to_string(begin + i) + " aborted: " + err.what());
        }
      }
    }
    for (std::size_t e = 0; e < epsilons.size(); ++e) write_rows(out.adversarial[e], begin, adv[e]);
  });
  for (auto& notes : diag) out.diagnostics.insert(out.diagnostics.end(), notes.begin(), notes.end());
  for (std::size_t e = 0; e < epsilons.size(); ++e) {
    const auto pred = predict(model, out.adversarial[e]).labels;
    std::vector<std::uint8_t> ok(n);
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      ok[i] = pred[i] != labels[i];
      dist[i] = linf_distance(out.adversarial[e], x, i);
    }
    out.success.push_back(std::move(ok));
    out.linf.push_back(std::move(dist));
  }
  return out;
}

}  // namespace detail

/// Integrated gradients of the selected class scalar along the straight path
/// from `baseline` (one image, empty = black) to each input, with s Riemann steps.
template <std::floating_point T>
Tensor<T> integrated_gradients(const Classifier<T>& model, const Tensor<T>& x, std::span<const int> labels,
                               const Tensor<double>& baseline, int s,
                               ScalarKind kind = ScalarKind::logit, const ExecOptions& exec = {}) {
  if (s < 1) throw ConfigError("integrated_gradients: s must be at least 1");
  if (x.rank() != 4 || x.dim(0) != labels.size()) throw ShapeError("integrated_gradients: batch/label mismatch");
  const Shape image(x.shape().begin() + 1, x.shape().end());
  const Tensor<T> base = detail::baseline_image<T>(baseline, image);
  check_pixel_range(x);
  check_pixel_range(base);
  Tensor<T> out(x.shape());
  parallel_chunks(labels.size(), exec.chunk, exec.threads, [&](std::size_t begin, std::size_t count) {
    detail::write_rows(out, begin, detail::ig_chunk(model, x.rows(begin, count), labels.subspan(begin, count), base,
                                                    s, kind));
  });
  return out;
}

/// T steps of x ← Π(x + α·sign(∇ₓL)) from the clean input. With a class-score
/// selector (logit or probability) the step descends that score instead.
template <std::floating_point T>
AttackOutput<T> pgd(const Classifier<T>& model, const Tensor<T>& x, std::span<const int> labels,
                    const AttackSpec& spec, const ExecOptions& exec = {}) {
  spec.validate();
  if (spec.epsilons.size() != 1) throw ConfigError("pgd: exactly one epsilon expected");
  const double eps = spec.epsilons[0], alpha = spec.alpha(0);
  const double dir = spec.loss_selector == ScalarKind::loss ? alpha : -alpha;
  return detail::run_chunked(model, x, labels, spec.epsilons, exec, "pgd",
                             [&](const Tensor<T>& xb, std::span<const int> yb, detail::ChunkDiagnostics&,
                                 std::size_t) {
                               Tensor<T> adv = xb;
                               for (int t = 0; t < spec.steps; ++t) {
                                 const auto g = input_gradient(model, adv, yb, spec.loss_selector);
                                 adv = project_ball(xb, detail::signed_step(adv, g, dir), eps);
                               }
                               return std::vector<Tensor<T>>{adv};
                             });
}

/// Momentum attack driven by L1-normalised integrated gradients.
template <std::floating_point T>
AttackOutput<T> mig(const Classifier<T>& model, const Tensor<T>& x, std::span<const int> labels,
                    const AttackSpec& spec, const ExecOptions& exec = {}) {
  spec.validate();
  if (spec.epsilons.size() != 1) throw ConfigError("mig: exactly one epsilon expected");
  const Shape image(x.shape().begin() + 1, x.shape().end());
  const Tensor<T> base = detail::baseline_image<T>(spec.baseline, image);
  const double eps = spec.epsilons[0];
  const double step = spec.update_sign == UpdateSign::ascend ? spec.alpha(0) : -spec.alpha(0);
  return detail::run_chunked(
      model, x, labels, spec.epsilons, exec, "mig",
      [&](const Tensor<T>& xb, std::span<const int> yb, detail::ChunkDiagnostics& notes, std::size_t first) {
        Tensor<T> adv = xb;
        Tensor<T> g(xb.shape());
        for (int t = 0; t < spec.steps; ++t) {
          const auto delta = detail::ig_chunk(model, adv, yb, base, spec.ig_steps, spec.scalar_selector);
          for (const auto i : detail::momentum_update(g, delta, spec.momentum)) {
            notes.push_back("mig: image " + std::to_string(first + i) + " zero attribution at step " +
                            std::to_string(t));
          }
          adv = project_ball(xb, detail::signed_step(adv, g, step), eps);
        }
        return std::vector<Tensor<T>>{adv};
      });
}

/// Multi-budget MIG: one IG evaluation per iteration on the largest-budget
/// trajectory drives every trajectory, each with its own momentum, step and
/// clip radius. The largest-budget output coincides with mig at that budget.
template <std::floating_point T>
AttackOutput<T> mig_multi_epsilon(const Classifier<T>& model, const Tensor<T>& x, std::span<const int> labels,
                                  const AttackSpec& spec, const ExecOptions& exec = {}) {
  spec.validate();
  const Shape image(x.shape().begin() + 1, x.shape().end());
  const Tensor<T> base = detail::baseline_image<T>(spec.baseline, image);
  const std::size_t n = spec.epsilons.size();
  const double dir = spec.update_sign == UpdateSign::ascend ? 1.0 : -1.0;
  return detail::run_chunked(
      model, x, labels, spec.epsilons, exec, "mig_multi_epsilon",
      [&](const Tensor<T>& xb, std::span<const int> yb, detail::ChunkDiagnostics& notes, std::size_t first) {
        std::vector<Tensor<T>> adv(n, xb);
        std::vector<Tensor<T>> g(n, Tensor<T>(xb.shape()));
        for (int t = 0; t < spec.steps; ++t) {
          const auto delta = detail::ig_chunk(model, adv[n - 1], yb, base, spec.ig_steps, spec.scalar_selector);
          for (std::size_t e = 0; e < n; ++e) {
            const auto zero = detail::momentum_update(g[e], delta, spec.momentum);
            if (e == n - 1) {
              for (const auto i : zero) {
                notes.push_back("mig_multi_epsilon: image " + std::to_string(first + i) +
                                " zero attribution at step " + std::to_string(t));
              }
            }
            adv[e] = project_ball(xb, detail::signed_step(adv[e], g[e], dir * spec.alpha(e)), spec.epsilons[e]);
          }
        }
        return adv;
      });
}

struct SuccessReport {
  double accuracy = 0;
  double attack_success = 0;
  std::size_t n = 0;
  std::vector<double> per_class_accuracy;
  std::vector<std::size_t> per_class_count;
};

inline SuccessReport success_from_predictions(std::span<const int> predicted, std::span<const int> labels,
                                              std::size_t class_count) {
  if (labels.empty()) throw ShapeError("success_rate: empty set");
  if (predicted.size() != labels.size()) throw ShapeError("success_rate: prediction/label count mismatch");
  SuccessReport r;
  r.n = labels.size();
  r.per_class_accuracy.assign(class_count, 0.0);
  r.per_class_count.assign(class_count, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    if (c >= class_count) throw RangeError("success_rate: label outside class range");
    ++r.per_class_count[c];
    if (predicted[i] == labels[i]) {
      ++correct;
      r.per_class_accuracy[c] += 1.0;
    }
  }
  for (std::size_t c = 0; c < class_count; ++c) {
    if (r.per_class_count[c] > 0) r.per_class_accuracy[c] /= static_cast<double>(r.per_class_count[c]);
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  r.attack_success = 1.0 - r.accuracy;
  return r;
}

template <std::floating_point T>
SuccessReport success_rate(const Classifier<T>& model, const Tensor<T>& adversarial, std::span<const int> labels) {
  if (labels.empty()) throw ShapeError("success_rate: empty set");
  const auto pred = predict(model, adversarial).labels;
  return success_from_predictions(pred, labels, model.config().num_classes);
}

}  // namespace advlab
