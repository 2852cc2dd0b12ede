#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/attacks/attack_spec.hpp"
#include "advlab/datasets/synthetic.hpp"
#include "advlab/error.hpp"
#include "advlab/train/train_config.hpp"
#include "advlab/zoo/model_config.hpp"
#include "advlab/zoo/preprocess.hpp"

namespace advlab::cli {

using nlohmann::json;

/// Strict view of one JSON object: every key must be read, and every error
/// names the full path of the offending field.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  /// True when the key is present with an explicit null.
  bool is_null(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && j_.at(key).is_null();
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(at(key) + ": missing required field");
    return j_.at(key);
  }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    if (!present(key, fallback.has_value())) return *fallback;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(at(key) + ": expected a number");
    return v.get<double>();
  }

  std::optional<double> optional_number(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) return std::nullopt;
    return number(key);
  }

  std::uint64_t unsigned_int(const std::string& key, std::optional<std::uint64_t> fallback = std::nullopt) {
    if (!present(key, fallback.has_value())) return *fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError(at(key) + ": expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::size_t count(const std::string& key, std::optional<std::size_t> fallback = std::nullopt) {
    return static_cast<std::size_t>(unsigned_int(key, fallback));
  }

  bool boolean(const std::string& key, std::optional<bool> fallback = std::nullopt) {
    if (!present(key, fallback.has_value())) return *fallback;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(at(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    if (!present(key, fallback.has_value())) return *fallback;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(at(key) + ": expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt) {
    if (!present(key, fallback.has_value())) return *fallback;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(at(key) + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]: expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key, std::optional<std::vector<std::size_t>> fallback = std::nullopt) {
    if (!present(key, fallback.has_value())) return *fallback;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(at(key) + ": expected an array of integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_unsigned() && !(v[i].is_number_integer() && v[i].get<std::int64_t>() >= 0)) {
        throw ConfigError(at(key) + "[" + std::to_string(i) + "]: expected a non-negative integer");
      }
      out.push_back(v[i].get<std::size_t>());
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& key,
                                   std::optional<std::vector<std::string>> fallback = std::nullopt) {
    if (!present(key, fallback.has_value())) return *fallback;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(at(key) + ": expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]: expected a string");
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }

  /// Nested object; an absent key reads as an empty object so defaults apply.
  Fields object(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Fields(has(key) ? j_.at(key) : empty, at(key));
  }

  void reject_unknown() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(at(key) + ": unknown key");
    }
  }

  const std::string& path() const { return path_; }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  bool present(const std::string& key, bool has_default) {
    seen_.insert(key);
    if (has(key)) return true;
    if (!has_default) throw ConfigError(at(key) + ": missing required field");
    return false;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Wraps module-level ConfigErrors with the path of the block being parsed.
template <class F>
auto with_path(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw ConfigError(path + ": " + msg);
  }
}

// ---- dataset ---------------------------------------------------------------

struct SplitSpec {
  std::size_t holdout = 0;
  std::uint64_t seed = 0;
  std::string part = "rest";  // or "holdout"

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

/// One labelled image set: a synthetic generator or files on disk, optionally
/// narrowed to one side of a seeded holdout split.
struct DataSpec {
  std::string kind = "shape-texture";  // blobs | shape-texture | idx | cifar
  std::size_t classes = 10;
  std::size_t per_class = 100;
  std::size_t resolution = 16;
  std::uint64_t seed = 0;
  ShapeTextureSpec shape_texture;
  std::string images;
  std::string labels;
  std::vector<std::string> files;
  std::optional<SplitSpec> split;
};

inline ShapeTextureSpec parse_shape_texture(Fields f) {
  ShapeTextureSpec s;
  s.classes = f.count("classes", s.classes);
  s.side = f.count("side", s.side);
  s.channels = f.count("channels", s.channels);
  s.shape_amplitude = f.number("shape_amplitude", s.shape_amplitude);
  s.texture_amplitude = f.number("texture_amplitude", s.texture_amplitude);
  s.noise_sigma = f.number("noise_sigma", s.noise_sigma);
  s.shape_agreement = f.number("shape_agreement", s.shape_agreement);
  s.texture_agreement = f.number("texture_agreement", s.texture_agreement);
  s.period_min = f.number("period_min", s.period_min);
  s.period_max = f.number("period_max", s.period_max);
  s.prototype_seed = f.unsigned_int("prototype_seed", s.prototype_seed);
  f.reject_unknown();
  with_path(f.path(), [&] { s.validate(); return 0; });
  return s;
}

inline json to_json_value(const ShapeTextureSpec& s) {
  return {{"classes", s.classes},
          {"side", s.side},
          {"channels", s.channels},
          {"shape_amplitude", s.shape_amplitude},
          {"texture_amplitude", s.texture_amplitude},
          {"noise_sigma", s.noise_sigma},
          {"shape_agreement", s.shape_agreement},
          {"texture_agreement", s.texture_agreement},
          {"period_min", s.period_min},
          {"period_max", s.period_max},
          {"prototype_seed", s.prototype_seed}};
}

inline DataSpec parse_data(Fields f) {
  DataSpec d;
  d.kind = f.string("kind");
  if (d.kind == "blobs") {
    d.classes = f.count("classes", 10);
    d.per_class = f.count("per_class");
    d.resolution = f.count("resolution", 16);
    d.seed = f.unsigned_int("seed", 0);
  } else if (d.kind == "shape-texture") {
    d.per_class = f.count("per_class");
    d.seed = f.unsigned_int("seed", 0);
    d.shape_texture = parse_shape_texture(f.object("generator"));
  } else if (d.kind == "idx") {
    d.images = f.string("images");
    d.labels = f.string("labels");
    d.classes = f.count("classes", 10);
  } else if (d.kind == "cifar") {
    d.files = f.strings("files");
    if (d.files.empty()) throw ConfigError(f.at("files") + ": at least one file required");
  } else {
    throw ConfigError(f.at("kind") + ": unknown dataset kind '" + d.kind +
                      "' (expected blobs, shape-texture, idx or cifar)");
  }
  if (f.has("split")) {
    auto s = f.object("split");
    SplitSpec sp;
    sp.holdout = s.count("holdout");
    sp.seed = s.unsigned_int("seed", 0);
    sp.part = s.string("part", "rest");
    if (sp.part != "rest" && sp.part != "holdout") {
      throw ConfigError(s.at("part") + ": expected 'rest' or 'holdout'");
    }
    s.reject_unknown();
    d.split = sp;
  } else {
    f.object("split");
  }
  f.reject_unknown();
  return d;
}

inline json to_json_value(const DataSpec& d) {
  json j{{"kind", d.kind}};
  if (d.kind == "blobs") {
    j["classes"] = d.classes;
    j["per_class"] = d.per_class;
    j["resolution"] = d.resolution;
    j["seed"] = d.seed;
  } else if (d.kind == "shape-texture") {
    j["per_class"] = d.per_class;
    j["seed"] = d.seed;
    j["generator"] = to_json_value(d.shape_texture);
  } else if (d.kind == "idx") {
    j["images"] = d.images;
    j["labels"] = d.labels;
    j["classes"] = d.classes;
  } else {
    j["files"] = d.files;
  }
  if (d.split) j["split"] = {{"holdout", d.split->holdout}, {"seed", d.split->seed}, {"part", d.split->part}};
  return j;
}

// ---- model -----------------------------------------------------------------

struct ModelSpec {
  std::string id;
  ModelConfig config;
  PreprocessSpec preprocess;
};

inline ModelSpec parse_model(Fields f) {
  ModelSpec m;
  m.id = f.string("id");
  ModelConfig& c = m.config;
  c.family = with_path(f.at("family"), [&] { return family_from_string(f.string("family")); });
  c.height = f.count("height", 32);
  c.width = f.count("width", 32);
  c.channels = f.count("channels", 3);
  c.num_classes = f.count("num_classes", 10);
  c.hidden = f.counts("hidden", c.hidden);
  c.conv_channels = f.counts("conv_channels", c.conv_channels);
  c.residual_blocks = f.count("residual_blocks", c.residual_blocks);
  c.patch = f.count("patch", c.patch);
  c.embed_dim = f.count("embed_dim", c.embed_dim);
  c.depth = f.count("depth", c.depth);
  c.heads = f.count("heads", c.heads);
  c.mlp_dim = f.count("mlp_dim", c.mlp_dim);
  auto p = f.object("preprocess");
  m.preprocess.offset = p.number("offset", m.preprocess.offset);
  m.preprocess.scale = p.number("scale", m.preprocess.scale);
  p.reject_unknown();
  f.reject_unknown();
  with_path(f.path(), [&] { c.validate(); m.preprocess.validate(); return 0; });
  return m;
}

inline json to_json_value(const ModelSpec& m) {
  json j = m.config;
  j["id"] = m.id;
  j["preprocess"] = {{"offset", m.preprocess.offset}, {"scale", m.preprocess.scale}};
  return j;
}

// ---- training --------------------------------------------------------------

inline TrainConfig parse_train(Fields f) {
  TrainConfig c;
  const auto preset = f.string("preset", "");
  if (preset == "reference-cnn" || preset == "reference-vit") {
    c = reference_config(preset == "reference-vit", f.has("free_at"));
  } else if (!preset.empty()) {
    throw ConfigError(f.at("preset") + ": unknown preset '" + preset + "' (expected reference-cnn or reference-vit)");
  }
  c.optimizer = with_path(f.at("optimizer"), [&] { return optimizer_from_string(f.string("optimizer", to_string(c.optimizer))); });
  c.momentum = f.number("momentum", c.momentum);
  c.beta1 = f.number("beta1", c.beta1);
  c.beta2 = f.number("beta2", c.beta2);
  c.adam_epsilon = f.number("adam_epsilon", c.adam_epsilon);
  c.weight_decay = f.number("weight_decay", c.weight_decay);
  if (f.is_null("clipnorm")) {
    c.clipnorm.reset();
  } else if (const auto v = f.optional_number("clipnorm")) {
    c.clipnorm = v;
  }
  c.schedule = with_path(f.at("schedule"), [&] { return schedule_from_string(f.string("schedule", to_string(c.schedule))); });
  c.initial_lr = f.number("initial_lr", c.initial_lr);
  c.decay_steps = f.count("decay_steps", c.decay_steps);
  c.decay_rate = f.number("decay_rate", c.decay_rate);
  c.warmup_steps = f.count("warmup_steps", c.warmup_steps);
  c.warmup_target = f.number("warmup_target", c.warmup_target);
  c.batch_size = f.count("batch_size", c.batch_size);
  c.max_epochs = f.count("max_epochs", c.max_epochs);
  c.patience = f.count("patience", c.patience);
  if (f.has("free_at")) {
    auto a = f.object("free_at");
    FreeAtConfig fa;
    fa.replay = static_cast<int>(a.count("replay", static_cast<std::size_t>(fa.replay)));
    fa.epsilon = a.number("epsilon", fa.epsilon);
    fa.step = a.number("step", fa.step);
    a.reject_unknown();
    c.free_at = fa;
  } else {
    f.object("free_at");
    c.free_at.reset();
  }
  f.reject_unknown();
  with_path(f.path(), [&] { c.validate(); return 0; });
  return c;
}

inline json to_json_value(const TrainConfig& c) {
  json j{{"optimizer", to_string(c.optimizer)},
         {"momentum", c.momentum},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"adam_epsilon", c.adam_epsilon},
         {"weight_decay", c.weight_decay},
         {"clipnorm", c.clipnorm ? json(*c.clipnorm) : json(nullptr)},
         {"schedule", to_string(c.schedule)},
         {"initial_lr", c.initial_lr},
         {"decay_steps", c.decay_steps},
         {"decay_rate", c.decay_rate},
         {"warmup_steps", c.warmup_steps},
         {"warmup_target", c.warmup_target},
         {"batch_size", c.batch_size},
         {"max_epochs", c.max_epochs},
         {"patience", c.patience}};
  j["free_at"] = c.free_at ? json{{"replay", c.free_at->replay}, {"epsilon", c.free_at->epsilon},
                                  {"step", c.free_at->step}}
                           : json(nullptr);
  return j;
}

// ---- attacks ---------------------------------------------------------------

/// Attack block. The MIG direction defaults to descending the true-class
/// score, which is the adversarial direction for the logit selector.
inline AttackSpec parse_attack(Fields f, std::vector<double> default_epsilons,
                               UpdateSign default_sign = UpdateSign::descend,
                               ScalarKind default_loss = ScalarKind::loss) {
  AttackSpec s;
  s.epsilons = f.numbers("epsilons", default_epsilons);
  s.steps = static_cast<int>(f.count("steps", 20));
  s.step_size = f.optional_number("step_size");
  s.momentum = f.number("momentum", 1.0);
  s.ig_steps = static_cast<int>(f.count("ig_steps", 20));
  if (f.has("baseline")) {
    const auto& b = f.raw("baseline");
    if (b.is_string()) {
      if (b.get<std::string>() != "black") throw ConfigError(f.at("baseline") + ": expected \"black\" or an image");
    } else {
      Fields bf(b, f.at("baseline"));
      const auto shape = bf.counts("shape");
      const auto values = bf.numbers("values");
      bf.reject_unknown();
      s.baseline = with_path(f.at("baseline"), [&] { return Tensor<double>(Shape(shape.begin(), shape.end()), values); });
    }
  } else {
    f.string("baseline", "black");
  }
  s.update_sign =
      with_path(f.at("update_sign"), [&] { return update_sign_from_string(f.string("update_sign", to_string(default_sign))); });
  s.loss_selector = with_path(f.at("loss_selector"),
                              [&] { return scalar_kind_from_string(f.string("loss_selector", to_string(default_loss))); });
  s.scalar_selector = with_path(f.at("scalar_selector"),
                                [&] { return scalar_kind_from_string(f.string("scalar_selector", "logit")); });
  f.reject_unknown();
  with_path(f.path(), [&] { s.validate(); return 0; });
  return s;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
}

}  // namespace advlab::cli
