#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/attacks/adversarial_set.hpp"
#include "advlab/attacks/attacks.hpp"
#include "advlab/datasets/sampling.hpp"
#include "advlab/error.hpp"
#include "advlab/zoo/classifier.hpp"

namespace advlab {

/// Published reference aggregates (target accuracy, percent), indexed
/// [surrogate AT/ST][target AT/ST].
inline constexpr double kReferenceAggregate[2][2] = {{13.16, 26.58}, {48.09, 32.88}};

inline constexpr double kDefaultBenchmarkEpsilon = 16.0;

struct ModelMeta {
  std::string id;
  std::string family;
  std::string tag;

  friend bool operator==(const ModelMeta&, const ModelMeta&) = default;
};

template <std::floating_point T>
ModelMeta meta_of(const Classifier<T>& m) {
  return {m.id(), to_string(m.config().family), to_string(m.tag())};
}

/// Clean sample plus one adversarial set per surrogate, crafted with
/// single-budget MIG on that surrogate only.
struct TransferBenchmark {
  LabeledImageSet clean;
  nlohmann::json manifest;
  std::vector<ModelMeta> surrogates;
  std::vector<AdversarialSet> adversarial;
};

template <std::floating_point T>
TransferBenchmark build_transfer_benchmark(const std::vector<const Classifier<T>*>& surrogates,
                                           const BenchmarkSample& sample, const AttackSpec& spec,
                                           const ExecOptions& exec = {}) {
  spec.validate();
  if (spec.epsilons.size() != 1) throw ConfigError("benchmark: exactly one epsilon expected");
  if (surrogates.empty()) throw ConfigError("benchmark: no surrogates");
  sample.set.validate();
  TransferBenchmark bench;
  bench.clean = sample.set;
  bench.manifest = {{"schema", "advlab.benchmark/1"},
                    {"epsilon", spec.epsilons[0]},
                    {"attack", "mig"},
                    {"spec", to_json_value(spec)},
                    {"sample_seed", sample.seed},
                    {"per_class", sample.per_class},
                    {"source_index", sample.source_index},
                    {"n", sample.set.size()},
                    {"class_count", sample.set.class_count}};
  const Tensor<T> x = sample.set.images.template cast<T>();
  for (const auto* s : surrogates) {
    if (s->config().num_classes != sample.set.class_count) {
      throw ShapeError("benchmark: surrogate '" + s->id() + "' class count does not match the sample");
    }
    const auto out = mig(*s, x, sample.set.labels, spec, exec);
    for (const auto& d : out.diagnostics) {
      if (d.find("aborted") != std::string::npos) throw NumericError("benchmark: surrogate '" + s->id() + "': " + d);
    }
    AdversarialSet adv;
    adv.images = out.adversarial[0].template cast<float>();
    adv.labels = sample.set.labels;
    adv.manifest = {{"surrogate", s->id()},
                    {"family", to_string(s->config().family)},
                    {"tag", to_string(s->tag())},
                    {"epsilon", spec.epsilons[0]},
                    {"spec", to_json_value(spec)},
                    {"sample_seed", sample.seed},
                    {"linf", out.linf[0]},
                    {"diagnostics", out.diagnostics}};
    bench.surrogates.push_back(meta_of(*s));
    bench.adversarial.push_back(std::move(adv));
  }
  return bench;
}

inline void save_benchmark(const TransferBenchmark& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  AdversarialSet clean{{{"kind", "clean"}, {"class_count", b.clean.class_count}}, b.clean.images, b.clean.labels};
  save_adversarial_set(clean, dir / "clean.advs");
  nlohmann::json m = b.manifest;
  m["surrogates"] = nlohmann::json::array();
  for (std::size_t i = 0; i < b.surrogates.size(); ++i) {
    const std::string file = "adv_" + std::to_string(i) + ".advs";
    save_adversarial_set(b.adversarial[i], dir / file);
    m["surrogates"].push_back({{"id", b.surrogates[i].id},
                               {"family", b.surrogates[i].family},
                               {"tag", b.surrogates[i].tag},
                               {"file", file},
                               {"linf", b.adversarial[i].manifest.at("linf")}});
  }
  std::ofstream os(dir / "benchmark.json");
  os << m.dump(2) << '\n';
  if (!os) throw FormatError("cannot write " + (dir / "benchmark.json").string());
}

inline TransferBenchmark load_benchmark(const std::filesystem::path& dir) {
  std::ifstream is(dir / "benchmark.json");
  if (!is) throw FormatError("cannot open " + (dir / "benchmark.json").string());
  TransferBenchmark b;
  try {
    b.manifest = nlohmann::json::parse(is);
    const auto clean = load_adversarial_set(dir / "clean.advs");
    b.clean = {clean.images, clean.labels, clean.manifest.at("class_count").get<std::size_t>()};
    for (const auto& s : b.manifest.at("surrogates")) {
      b.surrogates.push_back(
          {s.at("id").get<std::string>(), s.at("family").get<std::string>(), s.at("tag").get<std::string>()});
      b.adversarial.push_back(load_adversarial_set(dir / s.at("file").get<std::string>()));
      if (b.adversarial.back().labels != b.clean.labels) throw FormatError("benchmark: label mismatch");
    }
    b.manifest.erase("surrogates");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("benchmark manifest: " + std::string(e.what()));
  }
  b.clean.validate();
  return b;
}

struct TransferMatrix {
  std::vector<ModelMeta> surrogates;
  std::vector<ModelMeta> targets;
  /// accuracy[s][t]: target t on surrogate s's adversarial images.
  std::vector<std::vector<double>> accuracy;
  std::vector<std::vector<std::size_t>> n;
  std::vector<double> clean_accuracy;

  bool white_box(std::size_t s, std::size_t t) const { return surrogates.at(s).id == targets.at(t).id; }
};

/// Targets only see the finished adversarial sets; nothing in benchmark
/// construction can reach them.
template <std::floating_point T>
TransferMatrix eval_transfer_matrix(const TransferBenchmark& bench, const std::vector<const Classifier<T>*>& targets) {
  if (targets.empty()) throw ConfigError("transfer matrix: no targets");
  TransferMatrix m;
  m.surrogates = bench.surrogates;
  for (const auto* t : targets) {
    if (t->config().num_classes != bench.clean.class_count) {
      throw ShapeError("transfer matrix: target '" + t->id() + "' has " + std::to_string(t->config().num_classes) +
                       " classes, benchmark has " + std::to_string(bench.clean.class_count));
    }
    m.targets.push_back(meta_of(*t));
    m.clean_accuracy.push_back(success_rate(*t, bench.clean.images.template cast<T>(), bench.clean.labels).accuracy);
  }
  for (const auto& adv : bench.adversarial) {
    std::vector<double> row;
    std::vector<std::size_t> counts;
    const auto x = adv.images.template cast<T>();
    for (const auto* t : targets) {
      row.push_back(success_rate(*t, x, adv.labels).accuracy);
      counts.push_back(adv.labels.size());
    }
    m.accuracy.push_back(std::move(row));
    m.n.push_back(std::move(counts));
  }
  return m;
}

/// 2×2 means over (surrogate tag, target tag), index 0 = AT, 1 = ST.
struct AggregateMatrix {
  std::array<std::array<double, 2>, 2> mean{};
  std::array<std::array<std::size_t, 2>, 2> count{};
  bool excludes_white_box = true;
};

inline std::size_t tag_index(const ModelMeta& m) {
  if (m.tag == "AT") return 0;
  if (m.tag == "ST") return 1;
  throw ConfigError("aggregate: model '" + m.id + "' is not tagged ST or AT");
}

inline AggregateMatrix aggregate_training_type(const TransferMatrix& m) {
  AggregateMatrix a;
  std::array<std::array<double, 2>, 2> sum{};
  for (const auto& s : m.surrogates) tag_index(s);
  for (const auto& t : m.targets) tag_index(t);
  for (std::size_t s = 0; s < m.surrogates.size(); ++s) {
    for (std::size_t t = 0; t < m.targets.size(); ++t) {
      if (m.white_box(s, t)) continue;
      const auto i = tag_index(m.surrogates[s]), j = tag_index(m.targets[t]);
      sum[i][j] += m.accuracy[s][t];
      ++a.count[i][j];
    }
  }
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      a.mean[i][j] = a.count[i][j] ? sum[i][j] / static_cast<double>(a.count[i][j]) : std::nan("");
    }
  }
  return a;
}

/// Mean target accuracy of all non-white-box cells whose surrogate has `tag`.
inline double surrogate_mean(const TransferMatrix& m, const std::string& tag) {
  double sum = 0;
  std::size_t k = 0;
  for (std::size_t s = 0; s < m.surrogates.size(); ++s) {
    if (m.surrogates[s].tag != tag) continue;
    for (std::size_t t = 0; t < m.targets.size(); ++t) {
      if (m.white_box(s, t)) continue;
      sum += m.accuracy[s][t];
      ++k;
    }
  }
  return k ? sum / static_cast<double>(k) : std::nan("");
}

}  // namespace advlab
