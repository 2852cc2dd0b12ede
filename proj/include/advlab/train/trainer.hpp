#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "advlab/attacks/attacks.hpp"
#include "advlab/datasets/image_set.hpp"
#include "advlab/error.hpp"
#include "advlab/gradcore/model_grad.hpp"
#include "advlab/random.hpp"
#include "advlab/train/optimizer.hpp"
#include "advlab/train/train_config.hpp"
#include "advlab/zoo/classifier.hpp"

namespace advlab {

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_acc = 0;
  double lr = 0;
};

struct EarlyStopDecision {
  bool stop = false;
  std::size_t best_epoch = 0;
};

/// Best epoch is the first minimum of the validation losses; training stops
/// once `patience` epochs have passed without improving on it.
inline EarlyStopDecision early_stop(const std::vector<double>& val_losses, std::size_t patience) {
  if (val_losses.empty()) throw ConfigError("early_stop: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_losses.size(); ++i) {
    if (val_losses[i] < val_losses[best]) best = i;
  }
  return {val_losses.size() - 1 - best >= patience, best};
}

template <std::floating_point T>
struct TrainResult {
  Classifier<T> model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  bool stopped_early = false;
};

struct CleanEval {
  double loss = 0;
  double accuracy = 0;
};

/// Mean cross-entropy and accuracy on clean images.
template <std::floating_point T>
CleanEval evaluate_clean(const Classifier<T>& model, const LabeledImageSet& set, std::size_t chunk = 256) {
  set.validate();
  double loss = 0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < set.size(); b += chunk) {
    const std::size_t n = std::min(chunk, set.size() - b);
    const auto part = set.slice(b, n);
    auto ev = forward_scalar(model, part.images.template cast<T>(), part.labels, ScalarKind::loss, Reduction::sum,
                             false, false);
    loss += static_cast<double>(ev.loss);
    const auto pred = argmax_rows(ev.tape.value(ev.logits));
    for (std::size_t i = 0; i < n; ++i) correct += pred[i] == part.labels[i];
  }
  return {loss / static_cast<double>(set.size()), static_cast<double>(correct) / static_cast<double>(set.size())};
}

/// Observes every epoch record as it is produced.
using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {

template <std::floating_point T>
void check_train_inputs(const Classifier<T>& model, const LabeledImageSet& train, const LabeledImageSet& val) {
  train.validate();
  val.validate();
  const auto& c = model.config();
  for (const auto* s : {&train, &val}) {
    if (s->height() != c.height || s->width() != c.width || s->channels() != c.channels) {
      throw ShapeError("training data " + shape_str(s->images.shape()) + " does not match the model input");
    }
    if (s->class_count != c.num_classes) throw ShapeError("training data class count does not match the model");
  }
}

/// Shared epoch loop. `run_batch(x, y, state)` performs the optimizer steps for
/// one batch and returns its mean loss.
template <std::floating_point T, class BatchFn>
TrainResult<T> fit(Classifier<T> model, const LabeledImageSet& train, const LabeledImageSet& val,
                   const TrainConfig& config, std::uint64_t seed, TrainingTag tag, const EpochCallback& on_epoch,
                   BatchFn&& run_batch) {
  config.validate();
  check_train_inputs(model, train, val);
  model.set_tag(tag);
  TrainResult<T> result{model, {}, 0, 0, false};
  if (config.max_epochs == 0) return result;
  OptimizerState<T> state;
  Rng shuffle_rng(derive_seed(seed, "shuffle"));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> val_losses;
  Classifier<T> best = model;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - b);
      const std::span<const std::size_t> idx(order.data() + b, n);
      const auto batch = train.subset(idx);
      loss_sum += run_batch(model, batch.images.template cast<T>(), batch.labels, state);
      ++batches;
    }
    const auto clean = evaluate_clean(model, val);
    const double lr = lr_at_step(config, state.step == 0 ? 0 : state.step - 1);
    result.history.push_back({epoch, loss_sum / static_cast<double>(batches), clean.loss, clean.accuracy, lr});
    if (on_epoch) on_epoch(result.history.back());
    val_losses.push_back(clean.loss);
    const auto decision = early_stop(val_losses, config.patience);
    if (decision.best_epoch == epoch) best = model;
    result.best_epoch = decision.best_epoch;
    if (decision.stop) {
      result.stopped_early = true;
      break;
    }
  }
  result.steps = state.step;
  result.model = std::move(best);
  result.model.set_tag(tag);
  return result;
}

}  // namespace detail

/// Clean cross-entropy minimisation with early stopping on validation loss;
/// the returned model is the best-validation snapshot, tagged ST.
template <std::floating_point T>
TrainResult<T> train_standard(const Classifier<T>& model, const LabeledImageSet& train, const LabeledImageSet& val,
                              const TrainConfig& config, std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  return detail::fit(model, train, val, config, seed, TrainingTag::st, on_epoch,
                     [&](Classifier<T>& m, const Tensor<T>& x, const std::vector<int>& y, OptimizerState<T>& state) {
                       auto ev = forward_scalar_loss(m, x, y);
                       auto grads = backward_params(ev, m);
                       optimizer_step(m.mutable_params(), std::move(grads), config, state);
                       return static_cast<double>(ev.loss);
                     });
}

/// Free adversarial training. Each batch is replayed m times; every replay
/// records one tape at x + δ whose single backward pass yields both the input
/// gradient (for δ) and the parameter gradient (for the optimizer). δ persists
/// across batches; a short final batch uses and writes back the leading slice.
template <std::floating_point T>
TrainResult<T> train_free_at(const Classifier<T>& model, const LabeledImageSet& train, const LabeledImageSet& val,
                             const TrainConfig& config, std::uint64_t seed, const EpochCallback& on_epoch = {},
                             const std::function<void(const Tensor<T>&)>& on_replay = {}) {
  if (!config.free_at) throw ConfigError("train_free_at: free_at block required");
  const FreeAtConfig fa = *config.free_at;
  Shape delta_shape{config.batch_size, model.config().height, model.config().width, model.config().channels};
  Tensor<T> delta(delta_shape);
  return detail::fit(
      model, train, val, config, seed, TrainingTag::at, on_epoch,
      [&](Classifier<T>& m, const Tensor<T>& x, const std::vector<int>& y, OptimizerState<T>& state) {
        const std::size_t n = x.dim(0);
        Tensor<T> dlt = delta.rows(0, n);
        double loss_sum = 0;
        for (int r = 0; r < fa.replay; ++r) {
          Tensor<T> shifted(x.shape());
          for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = x[i] + dlt[i];
          const Tensor<T> xa = project_ball(x, shifted, fa.epsilon);
          auto ev = forward_scalar(m, xa, y, ScalarKind::loss, Reduction::mean, true, true);
          ev.tape.backward(ev.loss_var);
          const auto gx = ev.tape.grad(ev.input);
          GradientMap<T> grads;
          for (std::size_t p = 0; p < ev.params.size(); ++p) {
            grads.push_back({m.params()[p].name, ev.tape.grad(ev.params[p])});
          }
          const Tensor<T> next = project_ball(x, detail::signed_step(xa, gx, fa.step), fa.epsilon);
          for (std::size_t i = 0; i < x.size(); ++i) dlt[i] = next[i] - x[i];
          optimizer_step(m.mutable_params(), std::move(grads), config, state);
          loss_sum += static_cast<double>(ev.loss);
          if (on_replay) on_replay(dlt);
        }
        std::copy(dlt.data().begin(), dlt.data().end(), delta.data().begin());
        return loss_sum / fa.replay;
      });
}

}  // namespace advlab
