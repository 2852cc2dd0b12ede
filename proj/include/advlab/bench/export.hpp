#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/bench/robustness.hpp"
#include "advlab/bench/transfer.hpp"
#include "advlab/error.hpp"
#include "advlab/gradcore/tensor.hpp"

namespace advlab {

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw FormatError("cannot write " + path.string());
}

/// surrogate,target,surrogate_tag,target_tag,accuracy,n, one line per cell in
/// surrogate-major order.
inline std::string transfer_csv(const TransferMatrix& m) {
  std::string out = "surrogate,target,surrogate_tag,target_tag,accuracy,n\n";
  for (std::size_t s = 0; s < m.surrogates.size(); ++s) {
    for (std::size_t t = 0; t < m.targets.size(); ++t) {
      out += m.surrogates[s].id + ',' + m.targets[t].id + ',' + m.surrogates[s].tag + ',' + m.targets[t].tag + ',' +
             format_double(m.accuracy[s][t]) + ',' + std::to_string(m.n[s][t]) + '\n';
    }
  }
  return out;
}

inline nlohmann::json to_json_value(const AggregateMatrix& a) {
  const char* names[2] = {"AT", "ST"};
  nlohmann::json j;
  j["excludes_white_box"] = a.excludes_white_box;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      const std::string key = std::string(names[i]) + "->" + names[k];
      j["mean"][key] = a.mean[i][k];
      j["count"][key] = a.count[i][k];
      j["reference_percent"][key] = kReferenceAggregate[i][k];
    }
  }
  return j;
}

inline nlohmann::json to_json_value(const TransferMatrix& m) {
  nlohmann::json j;
  j["schema"] = "advlab.transfer/1";
  for (const auto* list : {&m.surrogates, &m.targets}) {
    auto& arr = j[list == &m.surrogates ? "surrogates" : "targets"];
    arr = nlohmann::json::array();
    for (const auto& meta : *list) arr.push_back({{"id", meta.id}, {"family", meta.family}, {"tag", meta.tag}});
  }
  j["accuracy"] = m.accuracy;
  j["n"] = m.n;
  j["clean_accuracy"] = m.clean_accuracy;
  std::vector<std::vector<bool>> wb(m.surrogates.size(), std::vector<bool>(m.targets.size()));
  for (std::size_t s = 0; s < m.surrogates.size(); ++s) {
    for (std::size_t t = 0; t < m.targets.size(); ++t) wb[s][t] = m.white_box(s, t);
  }
  j["white_box"] = wb;
  j["aggregate"] = to_json_value(aggregate_training_type(m));
  j["surrogate_mean"] = {{"AT", surrogate_mean(m, "AT")}, {"ST", surrogate_mean(m, "ST")}};
  return j;
}

inline nlohmann::json to_json_value(const RobustnessReport& r) {
  nlohmann::json j;
  j["schema"] = "advlab.robustness/1";
  j["epsilons"] = r.epsilons;
  j["pgd_spec"] = r.pgd_spec;
  j["mig_spec"] = r.mig_spec;
  j["n"] = r.n;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows) {
    j["rows"].push_back({{"model", row.model_id},
                         {"family", row.family},
                         {"tag", row.tag},
                         {"clean", row.clean_accuracy},
                         {"pgd", row.pgd_accuracy},
                         {"mig", row.mig_accuracy}});
  }
  return j;
}

inline std::string robustness_csv(const RobustnessReport& r) {
  std::string out = "model,family,tag,attack,epsilon,accuracy,n\n";
  for (const auto& row : r.rows) {
    out += row.model_id + ',' + row.family + ',' + row.tag + ",clean,0," + format_double(row.clean_accuracy) + ',' +
           std::to_string(r.n) + '\n';
    for (const auto* attack : {"pgd", "mig"}) {
      const auto& acc = std::string(attack) == "pgd" ? row.pgd_accuracy : row.mig_accuracy;
      for (std::size_t i = 0; i < r.epsilons.size(); ++i) {
        out += row.model_id + ',' + row.family + ',' + row.tag + ',' + attack + ',' + format_double(r.epsilons[i]) +
               ',' + format_double(acc[i]) + ',' + std::to_string(r.n) + '\n';
      }
    }
  }
  return out;
}

/// Linear ramp from blue (accuracy 0) to white (accuracy 1).
inline std::string heat_colour(double accuracy) {
  const double a = std::clamp(std::isfinite(accuracy) ? accuracy : 0.0, 0.0, 1.0);
  const int c = static_cast<int>(std::lround(255.0 * a));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02xff", c, c);
  return buf;
}

/// SVG 1.1 heatmap, surrogates as rows and targets as columns.
inline std::string transfer_heatmap_svg(const TransferMatrix& m) {
  const int cell = 48, left = 160, top = 120;
  const int w = left + cell * static_cast<int>(m.targets.size()) + 10;
  const int h = top + cell * static_cast<int>(m.surrogates.size()) + 10;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << w << "\" height=\"" << h << "\">\n"
     << "<style>text{font-family:monospace;font-size:11px}</style>\n";
  for (std::size_t t = 0; t < m.targets.size(); ++t) {
    const int x = left + cell * static_cast<int>(t) + cell / 2;
    os << "<text x=\"" << x << "\" y=\"" << top - 6 << "\" transform=\"rotate(-60 " << x << ' ' << top - 6
       << ")\">" << m.targets[t].id << " (" << m.targets[t].tag << ")</text>\n";
  }
  for (std::size_t s = 0; s < m.surrogates.size(); ++s) {
    const int y = top + cell * static_cast<int>(s);
    os << "<text x=\"4\" y=\"" << y + cell / 2 + 4 << "\">" << m.surrogates[s].id << " (" << m.surrogates[s].tag
       << ")</text>\n";
    for (std::size_t t = 0; t < m.targets.size(); ++t) {
      const int x = left + cell * static_cast<int>(t);
      char label[16];
      std::snprintf(label, sizeof label, "%.0f", 100.0 * m.accuracy[s][t]);
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
         << heat_colour(m.accuracy[s][t]) << "\" stroke=\"#888888\"/>\n"
         << "<text x=\"" << x + cell / 2 - 8 << "\" y=\"" << y + cell / 2 + 4 << "\">" << label << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

/// Binary PGM (P5) of one attribution image (H, W, C): channels are summed and
/// mapped to 128 + 127·a/max|a|, so zero attribution is mid-gray.
template <std::floating_point T>
std::string attribution_pgm(const Tensor<T>& attribution) {
  if (attribution.rank() != 3) throw ShapeError("attribution_pgm: expected (H,W,C)");
  const std::size_t h = attribution.dim(0), w = attribution.dim(1), c = attribution.dim(2);
  std::vector<double> map(h * w, 0.0);
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t k = 0; k < c; ++k) map[p] += static_cast<double>(attribution[p * c + k]);
  }
  double peak = 0;
  for (const double v : map) peak = std::max(peak, std::abs(v));
  std::string out = "P5\n" + std::to_string(w) + ' ' + std::to_string(h) + "\n255\n";
  for (const double v : map) {
    const double g = peak > 0 ? 128.0 + 127.0 * v / peak : 128.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(g))));
  }
  return out;
}

/// Writes transfer.csv, transfer.json and transfer.svg into out_dir.
inline void export_transfer_report(const TransferMatrix& m, const std::filesystem::path& out_dir) {
  write_text(out_dir / "transfer.csv", transfer_csv(m));
  write_text(out_dir / "transfer.json", to_json_value(m).dump(2) + "\n");
  write_text(out_dir / "transfer.svg", transfer_heatmap_svg(m));
}

inline void export_robustness_report(const RobustnessReport& r, const std::filesystem::path& out_dir) {
  write_text(out_dir / "robustness.csv", robustness_csv(r));
  write_text(out_dir / "robustness.json", to_json_value(r).dump(2) + "\n");
}

/// Parses a transfer CSV back into a matrix (ids and tags from the rows,
/// families unknown).
inline TransferMatrix parse_transfer_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "surrogate,target,surrogate_tag,target_tag,accuracy,n") {
    throw FormatError("transfer CSV: bad header");
  }
  TransferMatrix m;
  auto index_of = [](std::vector<ModelMeta>& list, const std::string& id, const std::string& tag) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i].id == id) return i;
    }
    list.push_back({id, "", tag});
    return list.size() - 1;
  };
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string field; std::getline(ls, field, ',');) f.push_back(field);
    if (f.size() != 6) throw FormatError("transfer CSV: bad row '" + line + "'");
    const auto s = index_of(m.surrogates, f[0], f[2]);
    const auto t = index_of(m.targets, f[1], f[3]);
    if (m.accuracy.size() <= s) {
      m.accuracy.resize(s + 1);
      m.n.resize(s + 1);
    }
    if (m.accuracy[s].size() <= t) {
      m.accuracy[s].resize(t + 1);
      m.n[s].resize(t + 1);
    }
    m.accuracy[s][t] = std::stod(f[4]);
    m.n[s][t] = std::stoul(f[5]);
  }
  return m;
}

}  // namespace advlab
