#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "advlab/datasets/image_set.hpp"
#include "advlab/error.hpp"

namespace advlab {

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarChannels = 3;
inline constexpr std::size_t kCifarRecord = 1 + kCifarSide * kCifarSide * kCifarChannels;
inline constexpr int kCifarClasses = 10;

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("cannot write " + path.string());
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at, const std::string& what) {
  if (at + 4 > b.size()) throw FormatError(what + ": truncated header");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

inline void push_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

inline unsigned char to_byte(float v) {
  if (!(v >= 0.0f && v <= 255.0f) || v != static_cast<float>(static_cast<int>(v))) {
    throw RangeError("byte formats need integer pixels in [0,255], got " + std::to_string(v));
  }
  return static_cast<unsigned char>(v);
}

}  // namespace detail

/// IDX image (0x803, N×H×W) and label (0x801, N) files; class_count is max label + 1
/// unless given.
inline LabeledImageSet load_idx(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path,
                                std::size_t class_count = 10) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);
  const std::string iname = images_path.string(), lname = labels_path.string();
  if (detail::be32(img, 0, iname) != kIdxImageMagic) throw FormatError(iname + ": bad IDX image magic");
  if (detail::be32(lab, 0, lname) != kIdxLabelMagic) throw FormatError(lname + ": bad IDX label magic");
  const std::size_t n = detail::be32(img, 4, iname);
  const std::size_t h = detail::be32(img, 8, iname);
  const std::size_t w = detail::be32(img, 12, iname);
  const std::size_t nl = detail::be32(lab, 4, lname);
  if (nl != n) {
    throw FormatError("IDX label count " + std::to_string(nl) + " != image count " + std::to_string(n));
  }
  if (img.size() != 16 + n * h * w) {
    throw FormatError(iname + ": expected " + std::to_string(16 + n * h * w) + " bytes, found " +
                      std::to_string(img.size()));
  }
  if (lab.size() != 8 + n) {
    throw FormatError(lname + ": expected " + std::to_string(8 + n) + " bytes, found " +
                      std::to_string(lab.size()));
  }
  LabeledImageSet set{Tensor<float>({n, h, w, 1}), std::vector<int>(n), class_count};
  for (std::size_t i = 0; i < n * h * w; ++i) set.images[i] = img[16 + i];
  for (std::size_t i = 0; i < n; ++i) set.labels[i] = lab[8 + i];
  set.validate();
  return set;
}

inline void write_idx(const LabeledImageSet& set, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
  if (set.channels() != 1) throw ShapeError("IDX holds single-channel images");
  std::vector<unsigned char> img, lab;
  detail::push_be32(img, kIdxImageMagic);
  detail::push_be32(img, static_cast<std::uint32_t>(set.size()));
  detail::push_be32(img, static_cast<std::uint32_t>(set.height()));
  detail::push_be32(img, static_cast<std::uint32_t>(set.width()));
  for (const float v : set.images.data()) img.push_back(detail::to_byte(v));
  detail::push_be32(lab, kIdxLabelMagic);
  detail::push_be32(lab, static_cast<std::uint32_t>(set.size()));
  for (const int y : set.labels) lab.push_back(static_cast<unsigned char>(y));
  detail::write_file(images_path, img);
  detail::write_file(labels_path, lab);
}

/// Concatenates CIFAR-10 binary batches: per record one label byte, then the
/// R, G and B planes of 32×32 bytes each.
inline LabeledImageSet load_cifar_binary(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw ConfigError("load_cifar_binary: no files given");
  std::vector<unsigned char> all;
  for (const auto& p : paths) {
    const auto b = detail::read_file(p);
    if (b.empty() || b.size() % kCifarRecord != 0) {
      throw FormatError(p.string() + ": size " + std::to_string(b.size()) + " is not a multiple of " +
                        std::to_string(kCifarRecord));
    }
    all.insert(all.end(), b.begin(), b.end());
  }
  const std::size_t n = all.size() / kCifarRecord, plane = kCifarSide * kCifarSide;
  LabeledImageSet set{Tensor<float>({n, kCifarSide, kCifarSide, kCifarChannels}), std::vector<int>(n),
                      static_cast<std::size_t>(kCifarClasses)};
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = all.data() + i * kCifarRecord;
    if (rec[0] >= kCifarClasses) {
      throw FormatError("CIFAR record " + std::to_string(i) + ": label byte " + std::to_string(rec[0]));
    }
    set.labels[i] = rec[0];
    float* dst = set.images.data().data() + i * plane * kCifarChannels;
    for (std::size_t c = 0; c < kCifarChannels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) dst[p * kCifarChannels + c] = rec[1 + c * plane + p];
    }
  }
  return set;
}

inline void write_cifar_binary(const LabeledImageSet& set, const std::filesystem::path& path) {
  if (set.height() != kCifarSide || set.width() != kCifarSide || set.channels() != kCifarChannels) {
    throw ShapeError("CIFAR records are 32x32x3, got " + shape_str(set.images.shape()));
  }
  const std::size_t plane = kCifarSide * kCifarSide;
  std::vector<unsigned char> out;
  out.reserve(set.size() * kCifarRecord);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.labels[i] < 0 || set.labels[i] >= kCifarClasses) throw RangeError("CIFAR label out of range");
    out.push_back(static_cast<unsigned char>(set.labels[i]));
    const float* src = set.images.data().data() + i * plane * kCifarChannels;
    for (std::size_t c = 0; c < kCifarChannels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) out.push_back(detail::to_byte(src[p * kCifarChannels + c]));
    }
  }
  detail::write_file(path, out);
}

}  // namespace advlab
