#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/error.hpp"
#include "advlab/gradcore/model_grad.hpp"
#include "advlab/gradcore/tensor.hpp"

namespace advlab {

/// Direction of the MIG step relative to the accumulated attribution.
/// `ascend` adds α·sign(g); `descend` subtracts it.
enum class UpdateSign { ascend, descend };

inline std::string to_string(UpdateSign s) { return s == UpdateSign::ascend ? "ascend" : "descend"; }

inline UpdateSign update_sign_from_string(const std::string& s) {
  if (s == "ascend") return UpdateSign::ascend;
  if (s == "descend") return UpdateSign::descend;
  throw ConfigError("unknown update_sign '" + s + "' (expected ascend or descend)");
}

/// Budgets and step sizes are in pixel units on the [0, 255] scale.
struct AttackSpec {
  std::vector<double> epsilons{16.0};
  int steps = 20;
  std::optional<double> step_size;
  double momentum = 1.0;
  int ig_steps = 20;
  /// One image (H, W, C); empty means the all-black image.
  Tensor<double> baseline;
  UpdateSign update_sign = UpdateSign::ascend;
  ScalarKind loss_selector = ScalarKind::loss;
  ScalarKind scalar_selector = ScalarKind::logit;

  void validate() const {
    if (epsilons.empty()) throw ConfigError("attack: epsilons must be non-empty");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
      if (!(epsilons[i] > 0.0)) throw ConfigError("attack: epsilons must be strictly positive");
      if (i > 0 && !(epsilons[i] > epsilons[i - 1])) throw ConfigError("attack: epsilons must be ascending");
    }
    if (steps < 0) throw ConfigError("attack: steps must be non-negative");
    if (step_size && !(*step_size > 0.0)) throw ConfigError("attack: step_size must be positive");
    if (!(momentum >= 0.0)) throw ConfigError("attack: momentum must be non-negative");
    if (ig_steps < 1) throw ConfigError("attack: ig_steps must be at least 1");
    if (!baseline.empty()) {
      if (baseline.rank() != 3) throw ShapeError("attack: baseline must be one (H,W,C) image");
      for (const double v : baseline.data()) {
        if (!(v >= 0.0 && v <= 255.0)) throw RangeError("attack: baseline outside [0,255]");
      }
    }
  }

  double max_epsilon() const { return epsilons.back(); }

  /// Step for budget i: the explicit step size scaled to the budget relative to
  /// the largest one, or ε_i / T.
  double alpha(std::size_t i) const {
    if (step_size) return *step_size * epsilons.at(i) / epsilons.back();
    return steps > 0 ? epsilons.at(i) / steps : 0.0;
  }

  AttackSpec with_epsilons(std::vector<double> eps) const {
    AttackSpec s = *this;
    s.epsilons = std::move(eps);
    return s;
  }
};

/// Adversarial images for every budget, in spec order.
template <std::floating_point T>
struct AttackOutput {
  std::vector<double> epsilons;
  std::vector<Tensor<T>> adversarial;
  /// Per budget and image: the attacked model misclassifies the output.
  std::vector<std::vector<std::uint8_t>> success;
  std::vector<std::vector<double>> linf;
  std::vector<std::string> diagnostics;
};

/// Canonical JSON form; the baseline is "black" or a flat pixel list with its shape.
inline nlohmann::json to_json_value(const AttackSpec& s) {
  nlohmann::json j;
  j["epsilons"] = s.epsilons;
  j["steps"] = s.steps;
  j["step_size"] = s.step_size ? nlohmann::json(*s.step_size) : nlohmann::json(nullptr);
  j["momentum"] = s.momentum;
  j["ig_steps"] = s.ig_steps;
  if (s.baseline.empty()) {
    j["baseline"] = "black";
  } else {
    j["baseline"] = {{"shape", s.baseline.shape()}, {"values", s.baseline.storage()}};
  }
  j["update_sign"] = to_string(s.update_sign);
  j["loss_selector"] = to_string(s.loss_selector);
  j["scalar_selector"] = to_string(s.scalar_selector);
  return j;
}

}  // namespace advlab
