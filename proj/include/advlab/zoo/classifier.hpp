#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advlab/error.hpp"
#include "advlab/gradcore/tape.hpp"
#include "advlab/gradcore/tensor.hpp"
#include "advlab/random.hpp"
#include "advlab/zoo/model_config.hpp"
#include "advlab/zoo/preprocess.hpp"

namespace advlab {

enum class TrainingTag { unset, st, at };

inline std::string to_string(TrainingTag t) {
  switch (t) {
    case TrainingTag::st: return "ST";
    case TrainingTag::at: return "AT";
    case TrainingTag::unset: return "unset";
  }
  return "unset";
}

inline TrainingTag tag_from_string(const std::string& s) {
  if (s == "ST") return TrainingTag::st;
  if (s == "AT") return TrainingTag::at;
  if (s == "unset") return TrainingTag::unset;
  throw ConfigError("unknown training tag '" + s + "'");
}

enum class Init { he_uniform, trunc_normal, zeros, ones };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
  std::size_t fan_in = 1;
};

/// Parameter names, shapes and initialisers in forward order. A pure function
/// of the config.
inline std::vector<ParamSpec> parameter_specs(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> out;
  auto dense = [&](const std::string& name, std::size_t in, std::size_t o, Init w_init) {
    out.push_back({name + ".w", {in, o}, w_init, in});
    out.push_back({name + ".b", {o}, Init::zeros, in});
  };
  auto conv = [&](const std::string& name, std::size_t cin, std::size_t cout) {
    out.push_back({name + ".w", {3, 3, cin, cout}, Init::he_uniform, 9 * cin});
    out.push_back({name + ".b", {cout}, Init::zeros, 9 * cin});
  };
  auto down = [](std::size_t v) { return (v + 1) / 2; };  // 3x3, stride 2, pad 1
  switch (cfg.family) {
    case Family::mlp: {
      std::size_t in = cfg.input_size();
      for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
        dense("fc" + std::to_string(i), in, cfg.hidden[i], Init::he_uniform);
        in = cfg.hidden[i];
      }
      dense("head", in, cfg.num_classes, Init::he_uniform);
      break;
    }
    case Family::small_cnn_a: {
      std::size_t c = cfg.channels, h = cfg.height, w = cfg.width;
      for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        conv("conv" + std::to_string(i), c, cfg.conv_channels[i]);
        c = cfg.conv_channels[i];
        h = down(h);
        w = down(w);
      }
      dense("head", h * w * c, cfg.num_classes, Init::he_uniform);
      break;
    }
    case Family::small_cnn_b_residual: {
      std::size_t c = cfg.conv_channels[0];
      std::size_t h = down(cfg.height), w = down(cfg.width);
      conv("stem", cfg.channels, c);
      for (std::size_t i = 0; i < cfg.residual_blocks; ++i) {
        conv("block" + std::to_string(i) + ".conv1", c, c);
        conv("block" + std::to_string(i) + ".conv2", c, c);
      }
      if (cfg.conv_channels.size() > 1) {
        conv("down", c, cfg.conv_channels[1]);
        c = cfg.conv_channels[1];
        h = down(h);
        w = down(w);
      }
      dense("head", h * w * c, cfg.num_classes, Init::he_uniform);
      break;
    }
    case Family::tiny_vit: {
      const std::size_t d = cfg.embed_dim;
      dense("patch", cfg.patch * cfg.patch * cfg.channels, d, Init::trunc_normal);
      out.push_back({"cls", {d}, Init::trunc_normal, 1});
      out.push_back({"pos", {cfg.vit_tokens(), d}, Init::trunc_normal, 1});
      for (std::size_t i = 0; i < cfg.depth; ++i) {
        const std::string b = "block" + std::to_string(i);
        out.push_back({b + ".ln1.g", {d}, Init::ones, 1});
        out.push_back({b + ".ln1.b", {d}, Init::zeros, 1});
        dense(b + ".attn.qkv", d, 3 * d, Init::trunc_normal);
        dense(b + ".attn.proj", d, d, Init::trunc_normal);
        out.push_back({b + ".ln2.g", {d}, Init::ones, 1});
        out.push_back({b + ".ln2.b", {d}, Init::zeros, 1});
        dense(b + ".mlp.fc1", d, cfg.mlp_dim, Init::trunc_normal);
        dense(b + ".mlp.fc2", cfg.mlp_dim, d, Init::trunc_normal);
      }
      out.push_back({"ln.g", {d}, Init::ones, 1});
      out.push_back({"ln.b", {d}, Init::zeros, 1});
      dense("head", d, cfg.num_classes, Init::trunc_normal);
      break;
    }
  }
  return out;
}

inline std::size_t parameter_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& p : parameter_specs(cfg)) n += shape_size(p.shape);
  return n;
}

namespace detail {

// Copying a model yields a fresh counter.
struct CallCounter {
  mutable std::atomic<std::uint64_t> count{0};
  CallCounter() = default;
  CallCounter(const CallCounter&) : count(0) {}
  CallCounter& operator=(const CallCounter&) { return *this; }
};

}  // namespace detail

template <std::floating_point T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

/// A differentiable model together with its preprocessing layer.
template <std::floating_point T>
class Classifier {
 public:
  Classifier(ModelConfig config, PreprocessSpec preprocess, std::vector<NamedTensor<T>> params,
             TrainingTag tag = TrainingTag::unset, std::string id = {})
      : config_(std::move(config)),
        preprocess_(preprocess),
        params_(std::move(params)),
        tag_(tag),
        id_(std::move(id)) {
    preprocess_.validate();
    const auto specs = parameter_specs(config_);
    if (specs.size() != params_.size()) throw ShapeError("parameter list does not match config");
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].name != params_[i].name || specs[i].shape != params_[i].value.shape()) {
        throw ShapeError("parameter '" + params_[i].name + "' " +
                         shape_str(params_[i].value.shape()) + " does not match expected '" +
                         specs[i].name + "' " + shape_str(specs[i].shape));
      }
    }
  }

  const ModelConfig& config() const { return config_; }
  const PreprocessSpec& preprocess() const { return preprocess_; }
  TrainingTag tag() const { return tag_; }
  void set_tag(TrainingTag t) { tag_ = t; }
  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }

  const std::vector<NamedTensor<T>>& params() const { return params_; }
  std::vector<NamedTensor<T>>& mutable_params() { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// Number of forward passes evaluated on this instance.
  std::uint64_t forward_calls() const { return calls_.count.load(std::memory_order_relaxed); }

  template <std::floating_point U>
  Classifier<U> cast() const {
    std::vector<NamedTensor<U>> ps;
    ps.reserve(params_.size());
    for (const auto& p : params_) ps.push_back({p.name, p.value.template cast<U>()});
    return Classifier<U>(config_, preprocess_, std::move(ps), tag_, id_);
  }

  /// Puts every parameter on the tape, as variables when `trainable`.
  std::vector<Var> bind(Tape<T>& tape, bool trainable) const {
    std::vector<Var> vars;
    vars.reserve(params_.size());
    for (const auto& p : params_) vars.push_back(trainable ? tape.variable(p.value) : tape.constant(p.value));
    return vars;
  }

  /// Logits [N, num_classes] for raw pixels [N, H, W, C] in [0, 255].
  Var forward(Tape<T>& tape, Var pixels, std::span<const Var> params) const {
    const auto& xs = tape.value(pixels).shape();
    if (xs.size() != 4 || xs[1] != config_.height || xs[2] != config_.width ||
        xs[3] != config_.channels) {
      throw ShapeError("model expects (N," + std::to_string(config_.height) + "," +
                       std::to_string(config_.width) + "," + std::to_string(config_.channels) +
                       ") input, got " + shape_str(xs));
    }
    if (params.size() != params_.size()) throw ShapeError("bound parameter count mismatch");
    check_pixel_range(tape.value(pixels));
    calls_.count.fetch_add(1, std::memory_order_relaxed);

    const T inv = static_cast<T>(1.0 / preprocess_.scale);
    Var x = tape.affine(pixels, inv, static_cast<T>(-preprocess_.offset / preprocess_.scale));
    std::size_t k = 0;
    auto next = [&]() { return params[k++]; };
    const std::size_t n = xs[0];
    Var logits{};
    switch (config_.family) {
      case Family::mlp: {
        x = tape.reshape(x, {n, config_.input_size()});
        for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
          const Var w = next(), b = next();
          x = tape.relu(tape.dense(x, w, b));
        }
        const Var w = next(), b = next();
        logits = tape.dense(x, w, b);
        break;
      }
      case Family::small_cnn_a: {
        for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
          const Var w = next(), b = next();
          x = tape.relu(tape.conv2d(x, w, b, 2, 1));
        }
        x = tape.reshape(x, {n, tape.value(x).size() / n});
        const Var w = next(), b = next();
        logits = tape.dense(x, w, b);
        break;
      }
      case Family::small_cnn_b_residual: {
        {
          const Var w = next(), b = next();
          x = tape.relu(tape.conv2d(x, w, b, 2, 1));
        }
        for (std::size_t i = 0; i < config_.residual_blocks; ++i) {
          const Var w1 = next(), b1 = next(), w2 = next(), b2 = next();
          Var h = tape.relu(tape.conv2d(x, w1, b1, 1, 1));
          h = tape.conv2d(h, w2, b2, 1, 1);
          x = tape.relu(tape.add(h, x));
        }
        if (config_.conv_channels.size() > 1) {
          const Var w = next(), b = next();
          x = tape.relu(tape.conv2d(x, w, b, 2, 1));
        }
        x = tape.reshape(x, {n, tape.value(x).size() / n});
        const Var w = next(), b = next();
        logits = tape.dense(x, w, b);
        break;
      }
      case Family::tiny_vit: {
        const Var pw = next(), pb = next(), cls = next(), pos = next();
        x = tape.dense(tape.patchify(x, config_.patch), pw, pb);
        x = tape.add(tape.prepend_token(x, cls), pos);
        for (std::size_t i = 0; i < config_.depth; ++i) {
          const Var g1 = next(), be1 = next(), qw = next(), qb = next(), ow = next(), ob = next();
          const Var g2 = next(), be2 = next(), f1w = next(), f1b = next(), f2w = next(), f2b = next();
          Var h = tape.layer_norm(x, g1, be1);
          x = tape.add(x, tape.self_attention(h, qw, qb, ow, ob, config_.heads));
          h = tape.layer_norm(x, g2, be2);
          h = tape.dense(tape.gelu(tape.dense(h, f1w, f1b)), f2w, f2b);
          x = tape.add(x, h);
        }
        const Var lg = next(), lb = next();
        x = tape.select_token(tape.layer_norm(x, lg, lb), 0);
        const Var w = next(), b = next();
        logits = tape.dense(x, w, b);
        break;
      }
    }
    if (!tape.value(logits).all_finite()) throw NumericError("non-finite logits");
    return logits;
  }

 private:
  ModelConfig config_;
  PreprocessSpec preprocess_;
  std::vector<NamedTensor<T>> params_;
  TrainingTag tag_ = TrainingTag::unset;
  std::string id_;
  detail::CallCounter calls_;
};

/// Deterministic initialisation: He-uniform for conv/dense weights of the
/// CNN and MLP families, truncated normal (sigma 0.02) for transformer
/// weights, zero biases, unit layer-norm gains.
template <std::floating_point T = float>
Classifier<T> build_classifier(const ModelConfig& config, std::uint64_t seed,
                               PreprocessSpec preprocess = {}, std::string id = {}) {
  Rng rng(seed);
  std::vector<NamedTensor<T>> params;
  for (const auto& spec : parameter_specs(config)) {
    Tensor<T> t(spec.shape);
    switch (spec.init) {
      case Init::he_uniform: {
        const double limit = std::sqrt(6.0 / static_cast<double>(spec.fan_in));
        for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-limit, limit));
        break;
      }
      case Init::trunc_normal:
        for (auto& v : t.data()) v = static_cast<T>(rng.truncated_normal(0.02));
        break;
      case Init::zeros: break;
      case Init::ones: t.fill(T{1}); break;
    }
    params.push_back({spec.name, std::move(t)});
  }
  return Classifier<T>(config, preprocess, std::move(params), TrainingTag::unset, std::move(id));
}

/// Same function with the preprocessing scale multiplied by `lambda` and the
/// input-layer weights (always the first parameter) multiplied to compensate.
template <std::floating_point T>
Classifier<T> rescale_preprocess(const Classifier<T>& model, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("rescale_preprocess: lambda must be positive");
  PreprocessSpec pre = model.preprocess();
  pre.scale *= lambda;
  std::vector<NamedTensor<T>> params = model.params();
  for (auto& v : params.front().value.data()) v = static_cast<T>(static_cast<double>(v) * lambda);
  return Classifier<T>(model.config(), pre, std::move(params), model.tag(), model.id());
}

}  // namespace advlab
