#include <gtest/gtest.h>

#include <filesystem>

#include "advlab/bench/export.hpp"
#include "advlab/datasets/sampling.hpp"
#include "advlab/datasets/synthetic.hpp"
#include "advlab/zoo/predict.hpp"
#include "test_util.hpp"

using namespace advlab;
using namespace advlab::testing;

namespace {

ModelMeta meta(std::string id, std::string tag) { return {std::move(id), "mlp", std::move(tag)}; }

TransferMatrix matrix(std::vector<ModelMeta> s, std::vector<ModelMeta> t, std::vector<std::vector<double>> acc) {
  TransferMatrix m;
  m.surrogates = std::move(s);
  m.targets = std::move(t);
  m.accuracy = std::move(acc);
  m.n.assign(m.surrogates.size(), std::vector<std::size_t>(m.targets.size(), 10));
  m.clean_accuracy.assign(m.targets.size(), 1.0);
  return m;
}

ModelConfig tiny_mlp() {
  ModelConfig c;
  c.family = Family::mlp;
  c.height = 6;
  c.width = 6;
  c.channels = 1;
  c.num_classes = 3;
  c.hidden = {8};
  return c;
}

Classifier<double> tagged(std::uint64_t seed, const std::string& id, TrainingTag tag) {
  auto m = build_classifier<double>(tiny_mlp(), seed, PreprocessSpec{128.0, 64.0}, id);
  m.set_tag(tag);
  return m;
}

}  // namespace

TEST(Aggregate, ConstantMatrixGivesConstantMeans) {
  const auto m = matrix({meta("a", "AT"), meta("b", "ST")}, {meta("a", "AT"), meta("b", "ST"), meta("c", "ST")},
                        {{0.4, 0.4, 0.4}, {0.4, 0.4, 0.4}});
  const auto a = aggregate_training_type(m);
  EXPECT_DOUBLE_EQ(a.mean[0][1], 0.4);
  EXPECT_DOUBLE_EQ(a.mean[1][0], 0.4);
  EXPECT_DOUBLE_EQ(a.mean[1][1], 0.4);
  EXPECT_TRUE(std::isnan(a.mean[0][0]));  // the only AT→AT cell is white-box
}

TEST(Aggregate, HandComputedFixtureExcludesWhiteBox) {
  // rows a(AT), b(ST); columns a(AT), b(ST), c(AT), d(ST)
  const auto m = matrix({meta("a", "AT"), meta("b", "ST")},
                        {meta("a", "AT"), meta("b", "ST"), meta("c", "AT"), meta("d", "ST")},
                        {{0.0, 0.2, 0.3, 0.6}, {0.5, 0.0, 0.9, 0.1}});
  const auto a = aggregate_training_type(m);
  EXPECT_DOUBLE_EQ(a.mean[0][0], 0.3);
  EXPECT_DOUBLE_EQ(a.mean[0][1], 0.4);
  EXPECT_DOUBLE_EQ(a.mean[1][0], 0.7);
  EXPECT_DOUBLE_EQ(a.mean[1][1], 0.1);
  EXPECT_EQ(a.count[0][1], 2u);
  EXPECT_EQ(a.count[1][1], 1u);
  EXPECT_DOUBLE_EQ(surrogate_mean(m, "AT"), (0.2 + 0.3 + 0.6) / 3);
  EXPECT_DOUBLE_EQ(surrogate_mean(m, "ST"), (0.5 + 0.9 + 0.1) / 3);
}

TEST(Aggregate, PermutingModelsLeavesMeansUnchanged) {
  const auto m = matrix({meta("a", "AT"), meta("b", "ST")}, {meta("a", "AT"), meta("b", "ST"), meta("c", "AT")},
                        {{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}});
  const auto p = matrix({meta("b", "ST"), meta("a", "AT")}, {meta("c", "AT"), meta("a", "AT"), meta("b", "ST")},
                        {{0.6, 0.4, 0.5}, {0.3, 0.1, 0.2}});
  const auto x = aggregate_training_type(m), y = aggregate_training_type(p);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      if (std::isnan(x.mean[i][j])) {
        EXPECT_TRUE(std::isnan(y.mean[i][j]));
      } else {
        EXPECT_DOUBLE_EQ(x.mean[i][j], y.mean[i][j]);
      }
    }
  }
}

TEST(Aggregate, UntaggedModelIsRejected) {
  const auto m = matrix({meta("a", "")}, {meta("b", "ST")}, {{0.5}});
  EXPECT_THROW(aggregate_training_type(m), ConfigError);
}

TEST(TransferCsv, OneSurrogateTwoTargetsIsThreeLines) {
  const auto m = matrix({meta("s", "ST")}, {meta("s", "ST"), meta("t", "AT")}, {{0.0, 0.25}});
  EXPECT_EQ(transfer_csv(m),
            "surrogate,target,surrogate_tag,target_tag,accuracy,n\n"
            "s,s,ST,ST,0,10\n"
            "s,t,ST,AT,0.25,10\n");
}

TEST(TransferCsv, RoundTripReproducesAggregates) {
  Rng rng(1);
  std::vector<ModelMeta> models{meta("a", "AT"), meta("b", "ST"), meta("c", "AT"), meta("d", "ST")};
  std::vector<std::vector<double>> acc(4, std::vector<double>(4));
  for (auto& row : acc) {
    for (auto& v : row) v = static_cast<double>(rng.below(41)) / 40.0;
  }
  const auto m = matrix(models, models, acc);
  const auto back = parse_transfer_csv(transfer_csv(m));
  EXPECT_EQ(back.accuracy, m.accuracy);
  EXPECT_EQ(back.n, m.n);
  const auto a = aggregate_training_type(m), b = aggregate_training_type(back);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_THROW(parse_transfer_csv("bad\n"), FormatError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  for (const double v : {0.0, 0.1, 1.0 / 3.0, 0.75, 1e-9}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Heatmap, ColourEndpointsAndUniformFill) {
  EXPECT_EQ(heat_colour(0.0), "#0000ff");
  EXPECT_EQ(heat_colour(1.0), "#ffffff");
  const auto m = matrix({meta("a", "AT"), meta("b", "ST")}, {meta("a", "AT"), meta("b", "ST")},
                        {{0.5, 0.5}, {0.5, 0.5}});
  const auto svg = transfer_heatmap_svg(m);
  std::size_t fills = 0;
  for (std::size_t pos = svg.find("fill=\""); pos != std::string::npos; pos = svg.find("fill=\"", pos + 1)) {
    EXPECT_EQ(svg.substr(pos + 6, 7), heat_colour(0.5));
    ++fills;
  }
  EXPECT_EQ(fills, 4u);
}

TEST(AttributionPgm, ZeroAttributionIsMidGray) {
  const auto pgm = attribution_pgm(Tensor<double>({2, 3, 3}));
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 6);
  EXPECT_EQ(pgm.substr(0, header.size()), header);
  for (std::size_t i = header.size(); i < pgm.size(); ++i) EXPECT_EQ(static_cast<unsigned char>(pgm[i]), 128);
}

TEST(AttributionPgm, ExtremesMapToEnds) {
  const auto pgm = attribution_pgm(Tensor<double>({1, 2, 1}, std::vector<double>{-2.0, 2.0}));
  EXPECT_EQ(static_cast<unsigned char>(pgm[pgm.size() - 2]), 1);
  EXPECT_EQ(static_cast<unsigned char>(pgm[pgm.size() - 1]), 255);
}

TEST(TransferBenchmark, TargetsAreNeverQueriedDuringConstruction) {
  const auto data = synth_blobs(3, 6, 6, 2);
  const auto sample = sample_benchmark(data, 2, 7);
  const auto s1 = tagged(1, "s1", TrainingTag::st), s2 = tagged(2, "s2", TrainingTag::at);
  const auto t1 = tagged(3, "t1", TrainingTag::st);
  AttackSpec spec;
  spec.epsilons = {16};
  spec.steps = 3;
  spec.ig_steps = 4;
  spec.update_sign = UpdateSign::descend;
  const auto bench = build_transfer_benchmark<double>({&s1, &s2}, sample, spec);
  EXPECT_EQ(t1.forward_calls(), 0u);
  EXPECT_GT(s1.forward_calls(), 0u);
  ASSERT_EQ(bench.adversarial.size(), 2u);
  for (const auto& adv : bench.adversarial) {
    for (std::size_t i = 0; i < adv.images.size(); ++i) EXPECT_LE(std::abs(adv.images[i] - sample.set.images[i]), 16.0f);
  }
}

TEST(TransferBenchmark, MatrixMatchesBruteForceAndSurvivesSaveLoad) {
  const auto data = synth_blobs(3, 6, 6, 3);
  const auto sample = sample_benchmark(data, 3, 8);
  const auto s1 = tagged(4, "s1", TrainingTag::st), s2 = tagged(5, "s2", TrainingTag::at);
  const auto t1 = tagged(6, "t1", TrainingTag::at);
  AttackSpec spec;
  spec.epsilons = {16};
  spec.steps = 3;
  spec.ig_steps = 4;
  const auto bench = build_transfer_benchmark<double>({&s1, &s2}, sample, spec);
  const auto dir = std::filesystem::temp_directory_path() / "advlab_bench_test";
  std::filesystem::remove_all(dir);
  save_benchmark(bench, dir);
  const auto loaded = load_benchmark(dir);
  EXPECT_EQ(loaded.clean, bench.clean);
  const std::vector<const Classifier<double>*> targets{&s1, &s2, &t1};
  const auto m = eval_transfer_matrix(loaded, targets);
  for (std::size_t s = 0; s < 2; ++s) {
    const auto x = bench.adversarial[s].images.cast<double>();
    for (std::size_t t = 0; t < 3; ++t) {
      std::size_t correct = 0;
      for (std::size_t i = 0; i < sample.set.size(); ++i) {
        correct += predict(*targets[t], x.rows(i, 1)).labels[0] == sample.set.labels[i];
      }
      EXPECT_DOUBLE_EQ(m.accuracy[s][t], static_cast<double>(correct) / static_cast<double>(sample.set.size()));
    }
  }
  EXPECT_TRUE(m.white_box(0, 0));
  EXPECT_FALSE(m.white_box(0, 2));
}

TEST(TransferBenchmark, ClassCountMismatchIsRejected) {
  const auto data = synth_blobs(3, 4, 6, 3);
  const auto sample = sample_benchmark(data, 1, 8);
  auto cfg = tiny_mlp();
  cfg.num_classes = 4;
  const auto wrong = build_classifier<double>(cfg, 1);
  AttackSpec spec;
  spec.epsilons = {4};
  spec.steps = 1;
  EXPECT_THROW(build_transfer_benchmark<double>({&wrong}, sample, spec), ShapeError);
}

TEST(Robustness, ZeroBudgetReportsCleanAccuracy) {
  const auto data = synth_blobs(3, 4, 6, 4);
  const auto model = tagged(7, "m", TrainingTag::st);
  AttackSpec pgd_spec;
  pgd_spec.steps = 2;
  pgd_spec.loss_selector = ScalarKind::loss;
  AttackSpec mig_spec;
  mig_spec.steps = 2;
  mig_spec.ig_steps = 3;
  mig_spec.update_sign = UpdateSign::descend;
  const auto row = eval_robustness_row(model, data, pgd_spec, mig_spec, {0, 4, 8});
  const double clean = success_rate(model, data.images.cast<double>(), data.labels).accuracy;
  EXPECT_EQ(row.clean_accuracy, clean);
  EXPECT_EQ(row.pgd_accuracy[0], clean);
  EXPECT_EQ(row.mig_accuracy[0], clean);
  EXPECT_EQ(row.pgd_accuracy.size(), 3u);
  EXPECT_THROW(eval_robustness_row(model, data, pgd_spec, mig_spec, {4, 2}), ConfigError);
}
