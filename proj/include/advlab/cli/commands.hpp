#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/attacks/adversarial_set.hpp"
#include "advlab/attacks/attacks.hpp"
#include "advlab/bench/export.hpp"
#include "advlab/bench/robustness.hpp"
#include "advlab/bench/transfer.hpp"
#include "advlab/cli/config.hpp"
#include "advlab/datasets/loaders.hpp"
#include "advlab/datasets/sampling.hpp"
#include "advlab/datasets/synthetic.hpp"
#include "advlab/random.hpp"
#include "advlab/train/trainer.hpp"
#include "advlab/zoo/checkpoint.hpp"

namespace advlab::cli {

namespace fs = std::filesystem;

/// Values given on the command line; each overrides the config key of the
/// same name.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<fs::path> out;
};

/// Fields shared by every command.
struct RunContext {
  std::string command;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  fs::path out;
  json config;                        // effective, defaults filled
  std::vector<std::string> artifacts;  // relative to out
  std::ostream* log = &std::cerr;

  /// Per-stage seeds: derive_seed(seed, stage name). Stages are "init",
  /// "train", "sample".
  std::uint64_t stage(const char* name) const { return derive_seed(seed, name); }

  ExecOptions exec() const { return {threads, 16}; }

  void write(const std::string& name, const std::string& text) {
    write_text(out / name, text);
    artifacts.push_back(name);
  }
};

inline LabeledImageSet load_data(const DataSpec& d) {
  LabeledImageSet set;
  if (d.kind == "blobs") {
    set = synth_blobs(d.classes, d.per_class, d.resolution, d.seed);
  } else if (d.kind == "shape-texture") {
    set = synth_shape_texture(d.shape_texture, d.per_class, d.seed);
  } else if (d.kind == "idx") {
    set = load_idx(d.images, d.labels, d.classes);
  } else {
    set = load_cifar_binary(std::vector<fs::path>(d.files.begin(), d.files.end()));
  }
  if (d.split) {
    auto [rest, held] = split_holdout(set, d.split->holdout, d.split->seed);
    set = d.split->part == "holdout" ? std::move(held) : std::move(rest);
  }
  return set;
}

inline std::string precision_of(Fields& f) {
  const auto p = f.string("precision", "float32");
  if (p != "float32" && p != "float64") throw ConfigError(f.at("precision") + ": expected float32 or float64");
  return p;
}

inline std::vector<std::string> checkpoint_list(Fields& f, const std::string& key) {
  const auto list = f.strings(key);
  if (list.empty()) throw ConfigError(f.at(key) + ": at least one checkpoint required");
  return list;
}

template <std::floating_point T>
std::vector<Classifier<T>> load_models(const std::vector<std::string>& paths) {
  std::vector<Classifier<T>> out;
  for (const auto& p : paths) {
    auto m = load_checkpoint(p);
    if (m.id().empty()) m.set_id(fs::path(p).stem().string());
    if constexpr (std::is_same_v<T, float>) {
      out.push_back(std::move(m));
    } else {
      out.push_back(m.template cast<T>());
    }
  }
  return out;
}

template <std::floating_point T>
std::vector<const Classifier<T>*> pointers(const std::vector<Classifier<T>>& models) {
  std::vector<const Classifier<T>*> out;
  for (const auto& m : models) out.push_back(&m);
  return out;
}

/// Optional stratified subsample ("per_class"), seeded by the "sample" stage.
inline LabeledImageSet maybe_sample(const LabeledImageSet& set, std::size_t per_class, const RunContext& ctx) {
  if (per_class == 0) return set;
  return sample_benchmark(set, per_class, ctx.stage("sample")).set;
}

inline void write_manifest(RunContext& ctx, json result) {
  json m;
  m["schema"] = "advlab.run/1";
  m["command"] = ctx.command;
  m["seed"] = ctx.seed;
  m["threads"] = ctx.threads;
  m["stage_seeds"] = {{"init", ctx.stage("init")}, {"train", ctx.stage("train")}, {"sample", ctx.stage("sample")}};
  m["config"] = ctx.config;
  m["result"] = std::move(result);
  auto artifacts = ctx.artifacts;
  artifacts.push_back("manifest.json");
  m["artifacts"] = artifacts;
  write_text(ctx.out / "manifest.json", m.dump(2) + "\n");
}

// ---- train -----------------------------------------------------------------

inline std::string curves_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& e : history) {
    out += std::to_string(e.epoch) + ',' + format_double(e.train_loss) + ',' + format_double(e.val_loss) + ',' +
           format_double(e.val_acc) + '\n';
  }
  return out;
}

inline void run_train(Fields f, RunContext& ctx) {
  const auto data = parse_data(f.object("data"));
  std::optional<DataSpec> validation;
  if (f.has("validation")) validation = parse_data(f.object("validation"));
  const std::size_t holdout = f.count("holdout", 0);
  if (!validation && holdout == 0) throw ConfigError("train: give a validation block or a positive holdout");
  if (validation && holdout > 0) throw ConfigError("train: validation and holdout are mutually exclusive");
  const auto model = parse_model(f.object("model"));
  const auto train = parse_train(f.object("train"));
  f.reject_unknown();

  ctx.config["data"] = to_json_value(data);
  if (validation) {
    ctx.config["validation"] = to_json_value(*validation);
  } else {
    ctx.config["holdout"] = holdout;
  }
  ctx.config["model"] = to_json_value(model);
  ctx.config["train"] = to_json_value(train);

  LabeledImageSet train_set = load_data(data), val_set;
  if (validation) {
    val_set = load_data(*validation);
  } else {
    auto [rest, held] = split_holdout(train_set, holdout, ctx.stage("sample"));
    train_set = std::move(rest);
    val_set = std::move(held);
  }
  const auto init = build_classifier<float>(model.config, ctx.stage("init"), model.preprocess, model.id);
  auto log = [&](const EpochRecord& e) {
    *ctx.log << model.id << " epoch " << e.epoch << " train_loss " << e.train_loss << " val_loss " << e.val_loss
             << " val_acc " << e.val_acc << '\n';
  };
  const auto result = train.free_at ? train_free_at(init, train_set, val_set, train, ctx.stage("train"), log)
                                    : train_standard(init, train_set, val_set, train, ctx.stage("train"), log);
  fs::create_directories(ctx.out);
  save_checkpoint(result.model, ctx.out / "model.ckpt");
  ctx.artifacts.push_back("model.ckpt");
  ctx.write("curves.csv", curves_csv(result.history));
  json curves = json::array();
  for (const auto& e : result.history) {
    curves.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"val_acc", e.val_acc},
                      {"lr", e.lr}});
  }
  const auto final_eval = evaluate_clean(result.model, val_set);
  write_manifest(ctx, {{"tag", to_string(result.model.tag())},
                       {"best_epoch", result.best_epoch},
                       {"steps", result.steps},
                       {"stopped_early", result.stopped_early},
                       {"train_size", train_set.size()},
                       {"val_size", val_set.size()},
                       {"val_loss", final_eval.loss},
                       {"val_acc", final_eval.accuracy},
                       {"curves", curves}});
}

// ---- eval ------------------------------------------------------------------

template <std::floating_point T>
RobustnessReport eval_models(const std::vector<std::string>& paths, const LabeledImageSet& data,
                             const AttackSpec& pgd_spec, const AttackSpec& mig_spec,
                             const std::vector<double>& epsilons, const ExecOptions& exec) {
  const auto models = load_models<T>(paths);
  return eval_robustness_sweep(pointers(models), data, pgd_spec, mig_spec, epsilons, exec);
}

inline AttackSpec parse_sweep_attack(Fields f, UpdateSign sign) {
  if (f.has("epsilons")) throw ConfigError(f.at("epsilons") + ": set budgets with the top-level 'epsilons' list");
  return parse_attack(std::move(f), {1.0}, sign);
}

inline void run_eval(Fields f, RunContext& ctx) {
  const auto models = checkpoint_list(f, "models");
  const auto data = parse_data(f.object("data"));
  const std::size_t per_class = f.count("per_class", 0);
  const auto epsilons = f.numbers("epsilons", std::vector<double>{1, 2, 3, 4, 5});
  if (epsilons.empty()) throw ConfigError(f.at("epsilons") + ": at least one budget required");
  const auto pgd_spec = parse_sweep_attack(f.object("pgd"), UpdateSign::ascend);
  const auto mig_spec = parse_sweep_attack(f.object("mig"), UpdateSign::descend);
  const auto precision = precision_of(f);
  f.reject_unknown();

  ctx.config["models"] = models;
  ctx.config["data"] = to_json_value(data);
  ctx.config["per_class"] = per_class;
  ctx.config["epsilons"] = epsilons;
  auto strip = [](json j) {
    j.erase("epsilons");
    return j;
  };
  ctx.config["pgd"] = strip(to_json_value(pgd_spec));
  ctx.config["mig"] = strip(to_json_value(mig_spec));
  ctx.config["precision"] = precision;

  const auto set = maybe_sample(load_data(data), per_class, ctx);
  const auto report = precision == "float64"
                          ? eval_models<double>(models, set, pgd_spec, mig_spec, epsilons, ctx.exec())
                          : eval_models<float>(models, set, pgd_spec, mig_spec, epsilons, ctx.exec());
  ctx.write("robustness.csv", robustness_csv(report));
  ctx.write("robustness.json", to_json_value(report).dump(2) + "\n");
  json rows = json::array();
  for (const auto& r : report.rows) rows.push_back({{"model", r.model_id}, {"clean", r.clean_accuracy}});
  write_manifest(ctx, {{"n", report.n}, {"rows", rows}});
}

// ---- attack ----------------------------------------------------------------

template <std::floating_point T>
json attack_model(const std::string& path, const LabeledImageSet& set, const std::string& method, const AttackSpec& spec,
                  std::size_t attributions, RunContext& ctx) {
  const auto model = load_models<T>({path}).front();
  const Tensor<T> x = set.images.template cast<T>();
  if (method == "ig") {
    const auto attr = integrated_gradients(model, x, set.labels, spec.baseline, spec.ig_steps, spec.scalar_selector,
                                           ctx.exec());
    const std::size_t d = set.image_size();
    // Completeness: the attributions of image i should sum to f(x_i) - f(baseline).
    const Shape image(x.shape().begin() + 1, x.shape().end());
    Shape one_shape{1};
    one_shape.insert(one_shape.end(), image.begin(), image.end());
    const auto base = detail::baseline_image<T>(spec.baseline, image).reshaped(one_shape);
    std::string csv = "image,label,attribution_sum,score_gap,relative_error\n";
    double worst = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      double sum = 0;
      for (std::size_t k = 0; k < d; ++k) sum += static_cast<double>(attr[i * d + k]);
      const std::span<const int> label(&set.labels[i], 1);
      const double gap = static_cast<double>(evaluate_scalar(model, x.rows(i, 1), label, spec.scalar_selector)) -
                         static_cast<double>(evaluate_scalar(model, base, label, spec.scalar_selector));
      const double rel = std::abs(sum - gap) / std::max(std::abs(gap), 1e-12);
      worst = std::max(worst, rel);
      csv += std::to_string(i) + ',' + std::to_string(set.labels[i]) + ',' + format_double(sum) + ',' +
             format_double(gap) + ',' + format_double(rel) + '\n';
    }
    ctx.write("attributions.csv", csv);
    const std::size_t maps = std::min(attributions, set.size());
    for (std::size_t i = 0; i < maps; ++i) {
      const auto one = attr.rows(i, 1).reshaped({set.height(), set.width(), set.channels()});
      char name[32];
      std::snprintf(name, sizeof name, "attr_%04zu.pgm", i);
      ctx.write(name, attribution_pgm(one));
    }
    return {{"method", method}, {"n", set.size()}, {"maps", maps}, {"max_completeness_error", worst}};
  }
  AttackOutput<T> out;
  if (method == "pgd") {
    if (spec.epsilons.size() != 1) throw ConfigError("attack.attack.epsilons: pgd takes exactly one budget");
    out = pgd(model, x, set.labels, spec, ctx.exec());
  } else if (method == "mig") {
    if (spec.epsilons.size() != 1) throw ConfigError("attack.attack.epsilons: mig takes exactly one budget");
    out = mig(model, x, set.labels, spec, ctx.exec());
  } else {
    out = mig_multi_epsilon(model, x, set.labels, spec, ctx.exec());
  }
  std::string csv = "epsilon,accuracy,attack_success,max_linf,n\n";
  json per_eps = json::array();
  for (std::size_t e = 0; e < out.epsilons.size(); ++e) {
    const auto r = success_rate(model, out.adversarial[e], set.labels);
    const double max_linf = *std::max_element(out.linf[e].begin(), out.linf[e].end());
    csv += format_double(out.epsilons[e]) + ',' + format_double(r.accuracy) + ',' + format_double(r.attack_success) +
           ',' + format_double(max_linf) + ',' + std::to_string(r.n) + '\n';
    per_eps.push_back({{"epsilon", out.epsilons[e]}, {"accuracy", r.accuracy}, {"max_linf", max_linf}});
    AdversarialSet adv{{{"model", model.id()},
                        {"method", method},
                        {"epsilon", out.epsilons[e]},
                        {"spec", to_json_value(spec)},
                        {"seed", ctx.seed},
                        {"linf", out.linf[e]},
                        {"diagnostics", out.diagnostics}},
                       out.adversarial[e].template cast<float>(),
                       set.labels};
    const std::string name = "adv_" + std::to_string(e) + ".advs";
    fs::create_directories(ctx.out);
    save_adversarial_set(adv, ctx.out / name);
    ctx.artifacts.push_back(name);
  }
  ctx.write("attack.csv", csv);
  return {{"method", method}, {"n", set.size()}, {"budgets", per_eps}, {"diagnostics", out.diagnostics}};
}

inline void run_attack(Fields f, RunContext& ctx) {
  const auto model = f.string("model");
  const auto data = parse_data(f.object("data"));
  const std::size_t per_class = f.count("per_class", 0);
  const auto method = f.string("method", "mig");
  if (method != "pgd" && method != "mig" && method != "mig-multi" && method != "ig") {
    throw ConfigError(f.at("method") + ": expected pgd, mig, mig-multi or ig");
  }
  const auto spec = parse_attack(f.object("attack"), method == "pgd" ? std::vector<double>{2} : std::vector<double>{16},
                                 UpdateSign::descend);
  const std::size_t attributions = f.count("attributions", 8);
  const auto precision = precision_of(f);
  f.reject_unknown();

  ctx.config["model"] = model;
  ctx.config["data"] = to_json_value(data);
  ctx.config["per_class"] = per_class;
  ctx.config["method"] = method;
  ctx.config["attack"] = to_json_value(spec);
  ctx.config["attributions"] = attributions;
  ctx.config["precision"] = precision;

  const auto set = maybe_sample(load_data(data), per_class, ctx);
  const auto result = precision == "float64" ? attack_model<double>(model, set, method, spec, attributions, ctx)
                                             : attack_model<float>(model, set, method, spec, attributions, ctx);
  write_manifest(ctx, result);
}

// ---- bench -----------------------------------------------------------------

inline void run_bench_build(Fields f, RunContext& ctx) {
  const auto surrogates = checkpoint_list(f, "surrogates");
  const auto data = parse_data(f.object("data"));
  const std::size_t per_class = f.count("per_class", 2);
  const auto spec = parse_attack(f.object("attack"), {kDefaultBenchmarkEpsilon}, UpdateSign::descend);
  if (spec.epsilons.size() != 1) throw ConfigError("attack.epsilons: the benchmark uses exactly one budget");
  const auto precision = precision_of(f);
  f.reject_unknown();

  ctx.config["surrogates"] = surrogates;
  ctx.config["data"] = to_json_value(data);
  ctx.config["per_class"] = per_class;
  ctx.config["attack"] = to_json_value(spec);
  ctx.config["precision"] = precision;

  const auto sample = sample_benchmark(load_data(data), per_class, ctx.stage("sample"));
  const auto bench = [&] {
    if (precision == "float64") {
      const auto models = load_models<double>(surrogates);
      return build_transfer_benchmark(pointers(models), sample, spec, ctx.exec());
    }
    const auto models = load_models<float>(surrogates);
    return build_transfer_benchmark(pointers(models), sample, spec, ctx.exec());
  }();
  save_benchmark(bench, ctx.out);
  ctx.artifacts.push_back("benchmark.json");
  ctx.artifacts.push_back("clean.advs");
  for (std::size_t i = 0; i < bench.adversarial.size(); ++i) ctx.artifacts.push_back("adv_" + std::to_string(i) + ".advs");
  json surr = json::array();
  for (const auto& s : bench.surrogates) surr.push_back({{"id", s.id}, {"tag", s.tag}});
  write_manifest(ctx, {{"n", sample.set.size()}, {"surrogates", surr}});
}

inline std::string aggregate_csv(const AggregateMatrix& a) {
  std::string out = "surrogate_tag,AT,ST\n";
  const char* names[2] = {"AT", "ST"};
  for (std::size_t i = 0; i < 2; ++i) {
    out += std::string(names[i]) + ',' + format_double(a.mean[i][0]) + ',' + format_double(a.mean[i][1]) + '\n';
  }
  return out;
}

inline void run_bench_run(Fields f, RunContext& ctx) {
  const auto benchmark = f.string("benchmark");
  const auto targets = checkpoint_list(f, "targets");
  const auto precision = precision_of(f);
  f.reject_unknown();

  ctx.config["benchmark"] = benchmark;
  ctx.config["targets"] = targets;
  ctx.config["precision"] = precision;

  const auto bench = load_benchmark(benchmark);
  const auto m = [&] {
    if (precision == "float64") return eval_transfer_matrix(bench, pointers(load_models<double>(targets)));
    return eval_transfer_matrix(bench, pointers(load_models<float>(targets)));
  }();
  export_transfer_report(m, ctx.out);
  ctx.artifacts.insert(ctx.artifacts.end(), {"transfer.csv", "transfer.json", "transfer.svg"});
  const auto agg = aggregate_training_type(m);
  ctx.write("aggregate.csv", aggregate_csv(agg));
  write_manifest(ctx, {{"aggregate", to_json_value(agg)},
                       {"surrogate_mean", {{"AT", surrogate_mean(m, "AT")}, {"ST", surrogate_mean(m, "ST")}}}});
}

// ---- report ----------------------------------------------------------------

inline std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw FormatError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(is), {}};
}

/// Combines transfer matrices (for example one per seed) into per-run and
/// mean aggregates, and collects robustness tables.
inline void run_report(Fields f, RunContext& ctx) {
  const auto transfer = f.strings("transfer", std::vector<std::string>{});
  const auto robustness = f.strings("robustness", std::vector<std::string>{});
  if (transfer.empty() && robustness.empty()) throw ConfigError("report: nothing to report (transfer and robustness empty)");
  f.reject_unknown();
  ctx.config["transfer"] = transfer;
  ctx.config["robustness"] = robustness;

  json runs = json::array();
  std::array<std::array<double, 2>, 2> sum{};
  std::array<std::array<std::size_t, 2>, 2> k{};
  std::size_t ordering_holds = 0;
  std::string md = "# advlab report\n\n";
  if (!transfer.empty()) {
    md += "| run | AT->AT | AT->ST | ST->AT | ST->ST | AT surrogates | ST surrogates |\n|---|---|---|---|---|---|---|\n";
  }
  for (std::size_t i = 0; i < transfer.size(); ++i) {
    const auto m = parse_transfer_csv(read_text(transfer[i]));
    const auto a = aggregate_training_type(m);
    const double at = surrogate_mean(m, "AT"), st = surrogate_mean(m, "ST");
    const bool holds = a.mean[0][0] < a.mean[1][0] && at <= st;
    ordering_holds += holds;
    runs.push_back({{"source", transfer[i]},
                    {"aggregate", to_json_value(a)},
                    {"surrogate_mean", {{"AT", at}, {"ST", st}}},
                    {"ordering_holds", holds}});
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t c = 0; c < 2; ++c) {
        if (std::isnan(a.mean[r][c])) continue;
        sum[r][c] += a.mean[r][c];
        ++k[r][c];
      }
    }
    md += "| " + std::to_string(i) + " | " + format_double(a.mean[0][0]) + " | " + format_double(a.mean[0][1]) +
          " | " + format_double(a.mean[1][0]) + " | " + format_double(a.mean[1][1]) + " | " + format_double(at) +
          " | " + format_double(st) + " |\n";
    const std::string svg = "transfer_" + std::to_string(i) + ".svg";
    ctx.write(svg, transfer_heatmap_svg(m));
  }
  json result;
  if (!transfer.empty()) {
    AggregateMatrix mean;
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t c = 0; c < 2; ++c) {
        mean.mean[r][c] = k[r][c] ? sum[r][c] / static_cast<double>(k[r][c]) : std::nan("");
        mean.count[r][c] = k[r][c];
      }
    }
    ctx.write("aggregate.csv", aggregate_csv(mean));
    result["transfer_runs"] = runs;
    result["mean_aggregate"] = to_json_value(mean);
    result["runs_with_ordering"] = ordering_holds;
    md += "\nReference (percent): AT->AT 13.16, AT->ST 26.58, ST->AT 48.09, ST->ST 32.88.\n";
    md += "Runs where AT->AT < ST->AT and AT surrogates <= ST surrogates: " + std::to_string(ordering_holds) + " of " +
          std::to_string(transfer.size()) + ".\n";
  }
  json tables = json::array();
  for (const auto& path : robustness) {
    json r;
    try {
      r = json::parse(read_text(path));
    } catch (const json::exception& e) {
      throw FormatError(path + ": " + e.what());
    }
    tables.push_back({{"source", path}, {"report", r}});
    if (r.contains("rows")) {
      md += "\n## " + path + "\n\n| model | tag | clean | PGD | MIG |\n|---|---|---|---|---|\n";
      for (const auto& row : r.at("rows")) {
        auto list = [](const json& v) {
          std::string s;
          for (const auto& x : v) s += (s.empty() ? "" : " ") + format_double(x.get<double>());
          return s;
        };
        md += "| " + row.at("model").get<std::string>() + " | " + row.at("tag").get<std::string>() + " | " +
              format_double(row.at("clean").get<double>()) + " | " + list(row.at("pgd")) + " | " +
              list(row.at("mig")) + " |\n";
      }
    }
  }
  if (!robustness.empty()) result["robustness"] = tables;
  ctx.write("report.md", md);
  ctx.write("report.json", result.dump(2) + "\n");
  write_manifest(ctx, {{"transfer_runs", transfer.size()}, {"robustness_tables", robustness.size()}});
}

// ---- dispatch --------------------------------------------------------------

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"train", "eval", "attack", "bench build", "bench run", "report"};
  return names;
}

/// Parses the config for `command`, runs it and writes every artifact under
/// the output directory. Throws advlab::Error subclasses on failure.
inline void run_command(const std::string& command, const json& config, const Overrides& overrides,
                        std::ostream& log = std::cerr) {
  Fields f(config, "");
  RunContext ctx;
  ctx.command = command;
  ctx.log = &log;
  ctx.seed = overrides.seed ? *overrides.seed : f.unsigned_int("seed", 0);
  if (overrides.seed) f.unsigned_int("seed", 0);
  ctx.threads = overrides.threads ? *overrides.threads : f.count("threads", 1);
  if (overrides.threads) f.count("threads", 1);
  if (ctx.threads == 0) throw ConfigError("threads: must be at least 1");
  const auto out_key = f.string("out", "");
  if (overrides.out) {
    ctx.out = *overrides.out;
  } else if (!out_key.empty()) {
    ctx.out = out_key;
  } else {
    throw ConfigError("out: no output directory (use --out or the 'out' key)");
  }
  ctx.config["seed"] = ctx.seed;
  ctx.config["threads"] = ctx.threads;
  if (command == "train") {
    run_train(f, ctx);
  } else if (command == "eval") {
    run_eval(f, ctx);
  } else if (command == "attack") {
    run_attack(f, ctx);
  } else if (command == "bench build") {
    run_bench_build(f, ctx);
  } else if (command == "bench run") {
    run_bench_run(f, ctx);
  } else if (command == "report") {
    run_report(f, ctx);
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
}

}  // namespace advlab::cli
