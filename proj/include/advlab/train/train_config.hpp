#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>

#include "advlab/error.hpp"

namespace advlab {

enum class OptimizerKind { sgd_momentum, adam };
enum class ScheduleKind { exponential_staircase, cosine_warmup };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd-momentum"; }
inline std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::cosine_warmup ? "cosine-with-warmup" : "exponential-staircase";
}
inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd-momentum") return OptimizerKind::sgd_momentum;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd-momentum or adam)");
}
inline ScheduleKind schedule_from_string(const std::string& s) {
  if (s == "exponential-staircase") return ScheduleKind::exponential_staircase;
  if (s == "cosine-with-warmup") return ScheduleKind::cosine_warmup;
  throw ConfigError("unknown schedule '" + s + "' (expected exponential-staircase or cosine-with-warmup)");
}

/// Free adversarial training: each batch is replayed `replay` times; budget
/// and step are in pixel units.
struct FreeAtConfig {
  int replay = 4;
  double epsilon = 2.0;
  double step = 0.6;

  friend bool operator==(const FreeAtConfig&, const FreeAtConfig&) = default;
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::sgd_momentum;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-7;
  double weight_decay = 1e-4;
  std::optional<double> clipnorm;

  ScheduleKind schedule = ScheduleKind::exponential_staircase;
  double initial_lr = 0.1;
  /// Staircase: lr·rate^floor(step/decay_steps). Cosine: length of the decay
  /// phase after warmup.
  std::size_t decay_steps = 1000;
  double decay_rate = 0.1;
  std::size_t warmup_steps = 0;
  double warmup_target = 0.001;

  std::size_t batch_size = 64;
  std::size_t max_epochs = 10;
  std::size_t patience = 5;
  std::optional<FreeAtConfig> free_at;

  void validate() const {
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (!(initial_lr >= 0.0)) throw ConfigError("train: initial_lr must be non-negative");
    if (decay_steps == 0) throw ConfigError("train: decay_steps must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0,1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: bad Adam betas");
    if (clipnorm && !(*clipnorm > 0.0)) throw ConfigError("train: clipnorm must be positive");
    if (patience == 0) throw ConfigError("train: patience must be positive");
    if (free_at) {
      if (free_at->replay < 1) throw ConfigError("train: free_at.replay must be at least 1");
      if (!(free_at->epsilon >= 0.0)) throw ConfigError("train: free_at.epsilon must be non-negative");
      if (!(free_at->step > 0.0)) throw ConfigError("train: free_at.step must be positive");
    }
  }
};

/// Learning rate at optimizer step `step` (0-based).
inline double lr_at_step(const TrainConfig& c, std::size_t step) {
  switch (c.schedule) {
    case ScheduleKind::exponential_staircase:
      return c.initial_lr * std::pow(c.decay_rate, static_cast<double>(step / c.decay_steps));
    case ScheduleKind::cosine_warmup: {
      if (step < c.warmup_steps) {
        const double f = static_cast<double>(step) / static_cast<double>(c.warmup_steps);
        return c.initial_lr + (c.warmup_target - c.initial_lr) * f;
      }
      const double peak = c.warmup_steps > 0 ? c.warmup_target : c.initial_lr;
      const double t = std::min(static_cast<double>(step - c.warmup_steps), static_cast<double>(c.decay_steps));
      return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * t / static_cast<double>(c.decay_steps)));
    }
  }
  return c.initial_lr;
}

/// Reference recipe from the TPU runs: 8 replicas × 32 images per batch,
/// 5004 batches per epoch, schedules stepping every 8 epochs. With Free AT the
/// CNN decay period is multiplied by the replay count, since the step counter
/// advances once per replay.
inline TrainConfig reference_config(bool transformer, bool free_at) {
  TrainConfig c;
  c.batch_size = 32 * 8;
  c.max_epochs = transformer ? 300 : 100;
  if (free_at) c.free_at = FreeAtConfig{4, 2.0, 0.6};
  const std::size_t m = free_at ? 4 : 1;
  if (transformer) {
    c.optimizer = OptimizerKind::adam;
    c.weight_decay = 0.1;
    c.clipnorm = 1.0;
    c.schedule = ScheduleKind::cosine_warmup;
    c.initial_lr = 0.001;
    c.warmup_target = 0.001;
    c.warmup_steps = 8 * 30;
    c.decay_steps = 8 * 270;
  } else {
    c.optimizer = OptimizerKind::sgd_momentum;
    c.momentum = 0.9;
    c.weight_decay = 1e-4;
    c.schedule = ScheduleKind::exponential_staircase;
    c.initial_lr = 0.1;
    c.decay_rate = 0.1;
    c.decay_steps = 8 * 5004 * m;
  }
  return c;
}

}  // namespace advlab
