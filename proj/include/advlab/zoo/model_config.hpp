#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/error.hpp"

namespace advlab {

enum class Family { mlp, small_cnn_a, small_cnn_b_residual, tiny_vit };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::mlp: return "mlp";
    case Family::small_cnn_a: return "small-cnn-a";
    case Family::small_cnn_b_residual: return "small-cnn-b-residual";
    case Family::tiny_vit: return "tiny-vit";
  }
  return "?";
}

inline Family family_from_string(const std::string& s) {
  if (s == "mlp") return Family::mlp;
  if (s == "small-cnn-a") return Family::small_cnn_a;
  if (s == "small-cnn-b-residual") return Family::small_cnn_b_residual;
  if (s == "tiny-vit") return Family::tiny_vit;
  throw ConfigError("unknown model family '" + s + "'");
}

inline bool is_cnn(Family f) { return f == Family::small_cnn_a || f == Family::small_cnn_b_residual; }

/// Architecture hyperparameters. Which fields matter depends on the family:
///   mlp                   hidden
///   small-cnn-a           conv_channels (one stride-2 3x3 conv per entry)
///   small-cnn-b-residual  conv_channels (stem, then optional downsample),
///                         residual_blocks
///   tiny-vit              patch, embed_dim, depth, heads, mlp_dim
struct ModelConfig {
  Family family = Family::mlp;
  std::size_t height = 28;
  std::size_t width = 28;
  std::size_t channels = 1;
  std::size_t num_classes = 10;
  std::vector<std::size_t> hidden{64};
  std::vector<std::size_t> conv_channels{16, 32};
  std::size_t residual_blocks = 1;
  std::size_t patch = 4;
  std::size_t embed_dim = 32;
  std::size_t depth = 2;
  std::size_t heads = 2;
  std::size_t mlp_dim = 64;

  std::size_t input_size() const { return height * width * channels; }

  void validate() const {
    if (height == 0 || width == 0 || channels == 0) throw ConfigError("model input dimensions must be positive");
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
    switch (family) {
      case Family::mlp:
        for (auto h : hidden) if (h == 0) throw ConfigError("mlp hidden widths must be positive");
        break;
      case Family::small_cnn_a:
      case Family::small_cnn_b_residual:
        if (conv_channels.empty()) throw ConfigError("cnn needs at least one conv_channels entry");
        for (auto c : conv_channels) if (c == 0) throw ConfigError("conv_channels must be positive");
        break;
      case Family::tiny_vit:
        if (patch == 0 || height % patch || width % patch) {
          throw ConfigError("tiny-vit resolution " + std::to_string(height) + "x" +
                            std::to_string(width) + " not divisible by patch " + std::to_string(patch));
        }
        if (embed_dim == 0 || heads == 0 || embed_dim % heads) {
          throw ConfigError("tiny-vit embed_dim must be a positive multiple of heads");
        }
        if (depth == 0 || mlp_dim == 0) throw ConfigError("tiny-vit depth and mlp_dim must be positive");
        break;
    }
  }

  /// Patch tokens plus the class token.
  std::size_t vit_tokens() const { return (height / patch) * (width / patch) + 1; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"family", to_string(c.family)},
                     {"height", c.height},
                     {"width", c.width},
                     {"channels", c.channels},
                     {"num_classes", c.num_classes},
                     {"hidden", c.hidden},
                     {"conv_channels", c.conv_channels},
                     {"residual_blocks", c.residual_blocks},
                     {"patch", c.patch},
                     {"embed_dim", c.embed_dim},
                     {"depth", c.depth},
                     {"heads", c.heads},
                     {"mlp_dim", c.mlp_dim}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.family = family_from_string(j.at("family").get<std::string>());
  j.at("height").get_to(c.height);
  j.at("width").get_to(c.width);
  j.at("channels").get_to(c.channels);
  j.at("num_classes").get_to(c.num_classes);
  j.at("hidden").get_to(c.hidden);
  j.at("conv_channels").get_to(c.conv_channels);
  j.at("residual_blocks").get_to(c.residual_blocks);
  j.at("patch").get_to(c.patch);
  j.at("embed_dim").get_to(c.embed_dim);
  j.at("depth").get_to(c.depth);
  j.at("heads").get_to(c.heads);
  j.at("mlp_dim").get_to(c.mlp_dim);
}

}  // namespace advlab
