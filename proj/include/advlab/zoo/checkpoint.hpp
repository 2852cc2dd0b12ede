#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/error.hpp"
#include "advlab/zoo/classifier.hpp"

namespace advlab {

// Checkpoint layout, little-endian:
//   "ADVZ"  u32 version  u64 header_len  header (JSON, UTF-8)
//   float32 blobs, one per parameter in header order
inline constexpr std::array<char, 4> kCheckpointMagic{'A', 'D', 'V', 'Z'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void read_exact(std::istream& is, char* dst, std::size_t n, const std::string& what) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw FormatError("truncated file while reading " + what);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  read_exact(is, reinterpret_cast<char*>(b), 4, what);
  return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
         std::uint32_t{b[3]} << 24;
}
inline std::uint64_t get_u64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  read_exact(is, reinterpret_cast<char*>(b), 8, what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline void put_f32s(std::ostream& os, std::span<const float> data) {
  for (const float f : data) put_u32(os, std::bit_cast<std::uint32_t>(f));
}

inline std::vector<float> get_f32s(std::istream& is, std::size_t n, const std::string& what) {
  std::vector<unsigned char> raw(n * 4);
  read_exact(is, reinterpret_cast<char*>(raw.data()), raw.size(), what);
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t u = std::uint32_t{raw[4 * i]} | std::uint32_t{raw[4 * i + 1]} << 8 |
                            std::uint32_t{raw[4 * i + 2]} << 16 | std::uint32_t{raw[4 * i + 3]} << 24;
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

/// Writes magic, version and JSON header of an ADV* container.
inline void write_container_header(std::ostream& os, const std::array<char, 4>& magic,
                                   std::uint32_t version, const nlohmann::json& header) {
  os.write(magic.data(), 4);
  put_u32(os, version);
  const std::string text = header.dump();
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline nlohmann::json read_container_header(std::istream& is, const std::array<char, 4>& magic,
                                            std::uint32_t version) {
  std::array<char, 4> m{};
  read_exact(is, m.data(), 4, "magic");
  if (m != magic) throw FormatError("bad magic: expected '" + std::string(magic.data(), 4) + "'");
  const auto v = get_u32(is, "version");
  if (v != version) {
    throw FormatError("unsupported version " + std::to_string(v) + " (expected " +
                      std::to_string(version) + ")");
  }
  const auto len = get_u64(is, "header length");
  if (len > (std::uint64_t{1} << 30)) throw FormatError("implausible header length");
  std::string text(len, '\0');
  read_exact(is, text.data(), len, "header");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed header JSON: ") + e.what());
  }
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const PreprocessSpec& p) {
  j = nlohmann::json{{"offset", p.offset}, {"scale", p.scale}};
}
inline void from_json(const nlohmann::json& j, PreprocessSpec& p) {
  j.at("offset").get_to(p.offset);
  j.at("scale").get_to(p.scale);
}

template <std::floating_point T>
void save_checkpoint(const Classifier<T>& model, const std::filesystem::path& path) {
  nlohmann::json header;
  header["id"] = model.id();
  header["config"] = model.config();
  header["preprocess"] = model.preprocess();
  header["tag"] = to_string(model.tag());
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : model.params()) params.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  header["params"] = params;

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  detail::write_container_header(os, kCheckpointMagic, kCheckpointVersion, header);
  for (const auto& p : model.params()) {
    if constexpr (std::is_same_v<T, float>) {
      detail::put_f32s(os, p.value.data());
    } else {
      const auto f = p.value.template cast<float>();
      detail::put_f32s(os, f.data());
    }
  }
  if (!os) throw Error("write failed for '" + path.string() + "'");
}

/// Loads a checkpoint; throws FormatError and returns nothing on any
/// inconsistency.
inline Classifier<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint '" + path.string() + "'");
  const auto header = detail::read_container_header(is, kCheckpointMagic, kCheckpointVersion);
  try {
    const auto config = header.at("config").get<ModelConfig>();
    const auto pre = header.at("preprocess").get<PreprocessSpec>();
    const auto tag = tag_from_string(header.at("tag").get<std::string>());
    const auto specs = parameter_specs(config);
    const auto& declared = header.at("params");
    if (declared.size() != specs.size()) throw FormatError("header declares wrong number of parameters");
    std::vector<NamedTensor<float>> params;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto name = declared[i].at("name").get<std::string>();
      const auto shape = declared[i].at("shape").get<Shape>();
      if (name != specs[i].name || shape != specs[i].shape) {
        throw FormatError("parameter '" + name + "' " + shape_str(shape) +
                          " does not match config (expected '" + specs[i].name + "' " +
                          shape_str(specs[i].shape) + ")");
      }
      params.push_back({name, Tensor<float>(shape, detail::get_f32s(is, shape_size(shape), name))});
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after parameters");
    return Classifier<float>(config, pre, std::move(params), tag, header.value("id", std::string{}));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid config in checkpoint: ") + e.what());
  }
}

}  // namespace advlab
