#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/error.hpp"
#include "advlab/gradcore/tensor.hpp"
#include "advlab/zoo/checkpoint.hpp"

namespace advlab {

// Same container layout as checkpoints with magic "ADVS": the JSON header
// carries the manifest plus labels, followed by one float32 image blob.
inline constexpr std::array<char, 4> kAdversarialSetMagic{'A', 'D', 'V', 'S'};
inline constexpr std::uint32_t kAdversarialSetVersion = 1;

struct AdversarialSet {
  /// Surrogate id, attack spec, seed, budget and per-image ∞-distances.
  nlohmann::json manifest;
  Tensor<float> images;
  std::vector<int> labels;

  friend bool operator==(const AdversarialSet&, const AdversarialSet&) = default;
};

inline void save_adversarial_set(const AdversarialSet& set, const std::filesystem::path& path) {
  if (set.images.rank() != 4 || set.images.dim(0) != set.labels.size()) {
    throw ShapeError("adversarial set: images do not match labels");
  }
  nlohmann::json header;
  header["manifest"] = set.manifest;
  header["shape"] = set.images.shape();
  header["labels"] = set.labels;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  detail::write_container_header(os, kAdversarialSetMagic, kAdversarialSetVersion, header);
  detail::put_f32s(os, set.images.data());
  if (!os) throw FormatError("write failed: " + path.string());
}

inline AdversarialSet load_adversarial_set(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  const auto header = detail::read_container_header(is, kAdversarialSetMagic, kAdversarialSetVersion);
  AdversarialSet set;
  try {
    set.manifest = header.at("manifest");
    const auto shape = header.at("shape").get<Shape>();
    set.labels = header.at("labels").get<std::vector<int>>();
    if (shape.size() != 4 || shape[0] != set.labels.size()) throw FormatError("adversarial set: bad shape");
    set.images = Tensor<float>(shape, detail::get_f32s(is, shape_size(shape), "images"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  return set;
}

}  // namespace advlab
