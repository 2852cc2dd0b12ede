#include <gtest/gtest.h>

#include <cmath>

#include "advlab/datasets/synthetic.hpp"
#include "advlab/train/trainer.hpp"
#include "test_util.hpp"

using namespace advlab;
using namespace advlab::testing;

namespace {

std::vector<NamedTensor<double>> one_param(std::vector<double> v) {
  const std::size_t n = v.size();
  return {{"p", Tensor<double>({n}, std::move(v))}};
}

GradientMap<double> one_grad(std::vector<double> v) {
  const std::size_t n = v.size();
  return {{"p", Tensor<double>({n}, std::move(v))}};
}

TrainConfig plain_sgd(double lr, double momentum) {
  TrainConfig c;
  c.optimizer = OptimizerKind::sgd_momentum;
  c.initial_lr = lr;
  c.momentum = momentum;
  c.weight_decay = 0;
  c.decay_rate = 1.0;
  return c;
}

ModelConfig blob_mlp() {
  ModelConfig c;
  c.family = Family::mlp;
  c.height = 8;
  c.width = 8;
  c.channels = 1;
  c.num_classes = 10;
  c.hidden = {32};
  return c;
}

TrainConfig quick_adam(std::size_t epochs) {
  TrainConfig c;
  c.optimizer = OptimizerKind::adam;
  c.initial_lr = 0.003;
  c.weight_decay = 0;
  c.decay_rate = 1.0;
  c.batch_size = 32;
  c.max_epochs = epochs;
  c.patience = 100;
  return c;
}

}  // namespace

TEST(Schedule, StaircaseDropsByRateEveryDecayPeriod) {
  TrainConfig c;
  c.initial_lr = 0.1;
  c.decay_rate = 0.1;
  c.decay_steps = 10;
  EXPECT_DOUBLE_EQ(lr_at_step(c, 0), 0.1);
  EXPECT_DOUBLE_EQ(lr_at_step(c, 9), 0.1);
  EXPECT_NEAR(lr_at_step(c, 10), 0.01, 1e-15);
  EXPECT_NEAR(lr_at_step(c, 25), 0.001, 1e-15);
}

TEST(Schedule, CosineRisesLinearlyThenDecaysToZero) {
  TrainConfig c;
  c.schedule = ScheduleKind::cosine_warmup;
  c.initial_lr = 0.0;
  c.warmup_target = 0.001;
  c.warmup_steps = 10;
  c.decay_steps = 100;
  EXPECT_DOUBLE_EQ(lr_at_step(c, 0), 0.0);
  EXPECT_NEAR(lr_at_step(c, 5), 0.0005, 1e-15);
  EXPECT_NEAR(lr_at_step(c, 10), 0.001, 1e-15);
  EXPECT_NEAR(lr_at_step(c, 60), 0.0005, 1e-15);
  EXPECT_NEAR(lr_at_step(c, 110), 0.0, 1e-15);
  EXPECT_NEAR(lr_at_step(c, 500), 0.0, 1e-15);
}

TEST(Schedule, EqualWarmupEndpointsHoldConstant) {
  TrainConfig c;
  c.schedule = ScheduleKind::cosine_warmup;
  c.initial_lr = 0.001;
  c.warmup_target = 0.001;
  c.warmup_steps = 240;
  c.decay_steps = 2160;
  for (std::size_t s : {0u, 100u, 239u, 240u}) EXPECT_DOUBLE_EQ(lr_at_step(c, s), 0.001);
  EXPECT_LT(lr_at_step(c, 241), 0.001);
}

TEST(Optimizer, ClipnormHalvesGradientOfNormTwo) {
  auto c = plain_sgd(1.0, 0.0);
  c.clipnorm = 1.0;
  auto p = one_param({0, 0});
  OptimizerState<double> s;
  optimizer_step(p, one_grad({std::sqrt(2.0), std::sqrt(2.0)}), c, s);
  EXPECT_NEAR(p[0].value[0], -std::sqrt(2.0) / 2, 1e-15);
  EXPECT_NEAR(p[0].value[1], -std::sqrt(2.0) / 2, 1e-15);
}

TEST(Optimizer, SgdMomentumTwoStepsByHand) {
  const auto c = plain_sgd(0.1, 0.9);
  auto p = one_param({1.0});
  OptimizerState<double> s;
  optimizer_step(p, one_grad({2.0}), c, s);
  // v1 = -0.2, θ1 = 0.8; v2 = 0.9·(-0.2) - 0.1·3 = -0.48, θ2 = 0.32
  EXPECT_NEAR(p[0].value[0], 0.8, 1e-15);
  optimizer_step(p, one_grad({3.0}), c, s);
  EXPECT_NEAR(p[0].value[0], 0.32, 1e-15);
  EXPECT_EQ(s.step, 2u);
}

TEST(Optimizer, AdamMatchesReferenceRecurrence) {
  TrainConfig c;
  c.optimizer = OptimizerKind::adam;
  c.initial_lr = 0.01;
  c.weight_decay = 0;
  c.decay_rate = 1.0;
  auto p = one_param({0.5, -1.0});
  OptimizerState<double> s;
  double theta[2] = {0.5, -1.0}, m[2] = {0, 0}, v[2] = {0, 0};
  const double grads[3][2] = {{0.3, -2.0}, {-0.1, 1.0}, {0.7, 0.0}};
  for (int t = 1; t <= 3; ++t) {
    optimizer_step(p, one_grad({grads[t - 1][0], grads[t - 1][1]}), c, s);
    for (int j = 0; j < 2; ++j) {
      const double g = grads[t - 1][j];
      m[j] = 0.9 * m[j] + 0.1 * g;
      v[j] = 0.999 * v[j] + 0.001 * g * g;
      const double mhat = m[j] / (1 - std::pow(0.9, t)), vhat = v[j] / (1 - std::pow(0.999, t));
      // Epsilon applied to sqrt(v) before bias correction, as in the Keras update.
      const double scale = std::sqrt(1 - std::pow(0.999, t));
      theta[j] -= 0.01 * mhat / (std::sqrt(vhat) + 1e-7 / scale);
      EXPECT_NEAR(p[0].value[static_cast<std::size_t>(j)], theta[j], 1e-12) << "t=" << t;
    }
  }
}

TEST(Optimizer, DecoupledWeightDecayShrinksWithZeroGradient) {
  auto c = plain_sgd(0.5, 0.0);
  c.weight_decay = 0.1;
  auto p = one_param({2.0});
  OptimizerState<double> s;
  optimizer_step(p, one_grad({0.0}), c, s);
  EXPECT_NEAR(p[0].value[0], 2.0 * (1 - 0.05), 1e-15);
}

TEST(Optimizer, NonFiniteUpdateThrows) {
  const auto c = plain_sgd(1.0, 0.0);
  auto p = one_param({1.0});
  OptimizerState<double> s;
  EXPECT_THROW(optimizer_step(p, one_grad({std::numeric_limits<double>::infinity()}), c, s), NumericError);
  EXPECT_THROW(optimizer_step(p, one_grad({1.0, 2.0}), c, s), ShapeError);
}

TEST(EarlyStop, StrictlyImprovingNeverStops) {
  const auto d = early_stop({5, 4, 3, 2, 1}, 2);
  EXPECT_FALSE(d.stop);
  EXPECT_EQ(d.best_epoch, 4u);
}

TEST(EarlyStop, FlatHistoryStopsAfterPatience) {
  std::vector<double> h{1.0};
  for (int e = 1; e <= 3; ++e) {
    h.push_back(1.0);
    EXPECT_EQ(early_stop(h, 3).stop, e == 3);
    EXPECT_EQ(early_stop(h, 3).best_epoch, 0u);
  }
}

TEST(EarlyStop, BestIsFirstArgmin) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> h(1 + rng.below(12));
    for (auto& v : h) v = static_cast<double>(rng.below(5));
    std::size_t best = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (h[i] < h[best]) best = i;
    }
    const auto d = early_stop(h, 3);
    EXPECT_EQ(d.best_epoch, best);
    EXPECT_EQ(d.stop, h.size() - 1 - best >= 3);
  }
  EXPECT_THROW(early_stop({}, 1), ConfigError);
}

TEST(TrainStandard, ZeroEpochsReturnsInitialModelTagged) {
  const auto data = synth_blobs(10, 4, 8, 1);
  const auto model = build_classifier<float>(blob_mlp(), 1);
  const auto r = train_standard(model, data, data, quick_adam(0), 1);
  EXPECT_EQ(r.model.tag(), TrainingTag::st);
  EXPECT_TRUE(r.history.empty());
  for (std::size_t i = 0; i < model.params().size(); ++i) EXPECT_EQ(r.model.params()[i].value, model.params()[i].value);
}

TEST(TrainStandard, BlobsMlpExceedsNinetyFivePercent) {
  const auto [train, val] = split_holdout(synth_blobs(10, 80, 8, 2), 200, 3);
  const auto r = train_standard(build_classifier<float>(blob_mlp(), 2), train, val, quick_adam(15), 2);
  EXPECT_GT(evaluate_clean(r.model, val).accuracy, 0.95);
}

TEST(TrainStandard, RepeatedRunsAreBitIdenticalAndKeepBestSnapshot) {
  const auto [train, val] = split_holdout(synth_blobs(10, 13, 8, 4), 30, 5);
  auto cfg = quick_adam(4);
  cfg.batch_size = 7;
  const auto a = train_standard(build_classifier<float>(blob_mlp(), 4), train, val, cfg, 9);
  const auto b = train_standard(build_classifier<float>(blob_mlp(), 4), train, val, cfg, 9);
  for (std::size_t i = 0; i < a.model.params().size(); ++i) EXPECT_EQ(a.model.params()[i].value, b.model.params()[i].value);
  ASSERT_EQ(a.history.size(), 4u);
  EXPECT_EQ(a.steps, 4u * 15u);
  double best = a.history[0].val_loss;
  for (const auto& e : a.history) best = std::min(best, e.val_loss);
  EXPECT_EQ(a.history[a.best_epoch].val_loss, best);
  EXPECT_NEAR(evaluate_clean(a.model, val).loss, best, 1e-6);
}

TEST(TrainStandard, MismatchedDataIsRejected) {
  const auto data = synth_blobs(10, 2, 6, 1);
  EXPECT_THROW(train_standard(build_classifier<float>(blob_mlp(), 1), data, data, quick_adam(1), 1), ShapeError);
}

TEST(TrainFreeAt, OneBackwardPassPerReplayAndDeltaStaysInBall) {
  const auto train = synth_blobs(10, 5, 8, 6);  // 50 images, final batch of 18
  auto cfg = quick_adam(1);
  cfg.free_at = FreeAtConfig{3, 2.0, 0.6};
  std::size_t replays = 0;
  bool contained = true;
  const auto before = Tape<float>::backward_passes();
  const std::function<void(const Tensor<float>&)> watch = [&](const Tensor<float>& delta) {
    ++replays;
    for (const float d : delta.data()) contained = contained && std::abs(d) <= 2.0f + 1e-5f;
  };
  const auto r = train_free_at(build_classifier<float>(blob_mlp(), 6), train, train, cfg, 6, {}, watch);
  EXPECT_EQ(Tape<float>::backward_passes() - before, 6u);
  EXPECT_EQ(replays, 6u);
  EXPECT_EQ(r.steps, 6u);
  EXPECT_TRUE(contained);
  EXPECT_EQ(r.model.tag(), TrainingTag::at);
}

TEST(TrainFreeAt, SingleReplayAndDeterminism) {
  const auto train = synth_blobs(10, 4, 8, 7);
  auto cfg = quick_adam(2);
  cfg.free_at = FreeAtConfig{1, 4.0, 1.0};
  const auto a = train_free_at(build_classifier<float>(blob_mlp(), 7), train, train, cfg, 7);
  const auto b = train_free_at(build_classifier<float>(blob_mlp(), 7), train, train, cfg, 7);
  EXPECT_EQ(a.steps, 4u);
  for (std::size_t i = 0; i < a.model.params().size(); ++i) EXPECT_EQ(a.model.params()[i].value, b.model.params()[i].value);
  cfg.free_at.reset();
  EXPECT_THROW(train_free_at(build_classifier<float>(blob_mlp(), 7), train, train, cfg, 7), ConfigError);
}
