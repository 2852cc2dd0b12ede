#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advlab/gradcore/finite_difference.hpp"
#include "advlab/gradcore/tape.hpp"
#include "advlab/zoo/classifier.hpp"

namespace advlab {

/// Which scalar of the model output is differentiated.
///   loss         softmax cross-entropy summed over the batch
///   logit        sum over the batch of the label's pre-softmax logit
///   probability  sum over the batch of the label's softmax probability
enum class ScalarKind { loss, logit, probability };

inline std::string to_string(ScalarKind k) {
  switch (k) {
    case ScalarKind::loss: return "loss";
    case ScalarKind::logit: return "logit";
    case ScalarKind::probability: return "probability";
  }
  return "?";
}

inline ScalarKind scalar_kind_from_string(const std::string& s) {
  if (s == "loss") return ScalarKind::loss;
  if (s == "logit") return ScalarKind::logit;
  if (s == "probability") return ScalarKind::probability;
  throw ConfigError("unknown scalar selector '" + s + "'");
}

/// A recorded forward pass ready for one backward pass.
template <std::floating_point T>
struct LossEvaluation {
  T loss = 0;
  Tape<T> tape;
  Var loss_var;
  Var input;
  Var logits;
  std::vector<Var> params;
};

template <std::floating_point T>
using GradientMap = std::vector<NamedTensor<T>>;

/// Records model(batch) and the selected scalar on a fresh tape. Parameters
/// are variables when `param_grads`; the input when `input_grad`.
template <std::floating_point T>
LossEvaluation<T> forward_scalar(const Classifier<T>& model, const Tensor<T>& batch,
                                 std::span<const int> labels, ScalarKind kind,
                                 Reduction reduction, bool param_grads, bool input_grad) {
  LossEvaluation<T> ev;
  ev.params = model.bind(ev.tape, param_grads);
  ev.input = input_grad ? ev.tape.variable(batch) : ev.tape.constant(batch);
  ev.logits = model.forward(ev.tape, ev.input, ev.params);
  switch (kind) {
    case ScalarKind::loss: ev.loss_var = ev.tape.cross_entropy(ev.logits, labels, reduction); break;
    case ScalarKind::logit: ev.loss_var = ev.tape.pick(ev.logits, labels); break;
    case ScalarKind::probability:
      ev.loss_var = ev.tape.pick(ev.tape.softmax(ev.logits), labels);
      break;
  }
  ev.loss = ev.tape.value(ev.loss_var)[0];
  if (!std::isfinite(ev.loss)) throw NumericError("non-finite scalar objective");
  return ev;
}

/// Mean softmax cross-entropy of model(batch) against labels, with the tape
/// recording every parameter as a variable.
template <std::floating_point T>
LossEvaluation<T> forward_scalar_loss(const Classifier<T>& model, const Tensor<T>& batch,
                                      std::span<const int> labels) {
  return forward_scalar(model, batch, labels, ScalarKind::loss, Reduction::mean, true, false);
}

template <std::floating_point T>
GradientMap<T> backward_params(LossEvaluation<T>& ev, const Classifier<T>& model) {
  ev.tape.backward(ev.loss_var);
  GradientMap<T> out;
  out.reserve(ev.params.size());
  for (std::size_t i = 0; i < ev.params.size(); ++i) {
    out.push_back({model.params()[i].name, ev.tape.grad(ev.params[i])});
  }
  return out;
}

/// Gradient of the selected scalar with respect to the raw pixels.
template <std::floating_point T>
Tensor<T> input_gradient(const Classifier<T>& model, const Tensor<T>& x,
                         std::span<const int> labels, ScalarKind kind) {
  auto ev = forward_scalar(model, x, labels, kind, Reduction::sum, false, true);
  ev.tape.backward(ev.loss_var);
  auto g = ev.tape.grad(ev.input);
  if (!g.all_finite()) throw NumericError("non-finite input gradient");
  return g;
}

template <std::floating_point T>
T evaluate_scalar(const Classifier<T>& model, const Tensor<T>& x, std::span<const int> labels,
                  ScalarKind kind) {
  return forward_scalar(model, x, labels, kind, Reduction::sum, false, false).loss;
}

/// Central-difference input gradient. x must lie at least h inside
/// [0, 255], since the model rejects out-of-range pixels.
template <std::floating_point T>
Tensor<T> finite_difference_oracle(const Classifier<T>& model, const Tensor<T>& x,
                                   std::span<const int> labels, ScalarKind kind, T h) {
  return finite_difference(
      [&](const Tensor<T>& p) { return evaluate_scalar(model, p, labels, kind); }, x, h);
}

}  // namespace advlab
