#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "advlab/zoo/checkpoint.hpp"
#include "advlab/zoo/predict.hpp"
#include "test_util.hpp"

using namespace advlab;
using namespace advlab::testing;

namespace {

ModelConfig config_for(Family f) {
  ModelConfig c;
  c.family = f;
  c.height = 8;
  c.width = 8;
  c.channels = 3;
  c.num_classes = 4;
  c.hidden = {6};
  c.conv_channels = {4, 5};
  c.patch = 4;
  c.embed_dim = 8;
  c.depth = 1;
  c.heads = 2;
  c.mlp_dim = 12;
  return c;
}

const Family kFamilies[] = {Family::mlp, Family::small_cnn_a, Family::small_cnn_b_residual, Family::tiny_vit};

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "advlab_zoo_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(ModelConfig, FamilyNamesRoundTrip) {
  for (const auto f : kFamilies) EXPECT_EQ(family_from_string(to_string(f)), f);
  EXPECT_THROW(family_from_string("resnet50"), ConfigError);
}

TEST(ModelConfig, JsonRoundTrip) {
  for (const auto f : kFamilies) {
    const nlohmann::json j = config_for(f);
    EXPECT_EQ(j.get<ModelConfig>(), config_for(f));
  }
}

TEST(BuildClassifier, SeedDeterminesParameters) {
  for (const auto f : kFamilies) {
    const auto a = build_classifier<float>(config_for(f), 3);
    const auto b = build_classifier<float>(config_for(f), 3);
    const auto c = build_classifier<float>(config_for(f), 4);
    ASSERT_EQ(a.params().size(), b.params().size());
    bool differs = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
      EXPECT_EQ(a.params()[i].value, b.params()[i].value);
      differs = differs || a.params()[i].value != c.params()[i].value;
    }
    EXPECT_TRUE(differs);
    EXPECT_EQ(a.parameter_count(), parameter_count(config_for(f)));
  }
}

// GEMM blocking changes with the row count, so chunking may move the last bits.
TEST(Predict, OutputDoesNotDependOnChunking) {
  Rng rng(1);
  for (const auto f : kFamilies) {
    const auto m = build_classifier<float>(config_for(f), 1);
    const auto x = random_pixels<float>(rng, {9, 8, 8, 3}, 0.0);
    EXPECT_LE(max_abs_diff(logits(m, x, 128), logits(m, x, 2)), 1e-5f);
    EXPECT_EQ(predict(m, x).labels.size(), 9u);
  }
}

TEST(Predict, RejectsOutOfRangePixels) {
  const auto m = build_classifier<float>(config_for(Family::mlp), 1);
  EXPECT_THROW(predict(m, Tensor<float>({1, 8, 8, 3}, 256.0f)), RangeError);
  EXPECT_THROW(predict(m, Tensor<float>({1, 8, 8, 1})), ShapeError);
}

TEST(Checkpoint, RoundTripIsExact) {
  for (const auto f : kFamilies) {
    auto m = build_classifier<float>(config_for(f), 5, PreprocessSpec{120.0, 60.0}, "model-" + to_string(f));
    m.set_tag(TrainingTag::at);
    const auto path = scratch(to_string(f) + ".ckpt");
    save_checkpoint(m, path);
    const auto back = load_checkpoint(path);
    EXPECT_EQ(back.config(), m.config());
    EXPECT_EQ(back.preprocess(), m.preprocess());
    EXPECT_EQ(back.tag(), TrainingTag::at);
    EXPECT_EQ(back.id(), m.id());
    for (std::size_t i = 0; i < m.params().size(); ++i) EXPECT_EQ(back.params()[i].value, m.params()[i].value);
    save_checkpoint(back, scratch("again.ckpt"));
    EXPECT_EQ(slurp(scratch("again.ckpt")), slurp(path));
  }
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto m = build_classifier<float>(config_for(Family::small_cnn_a), 6);
  const auto path = scratch("good.ckpt");
  save_checkpoint(m, path);
  const auto bytes = slurp(path);
  auto write = [](const std::filesystem::path& p, const std::string& b) {
    std::ofstream os(p, std::ios::binary);
    os << b;
  };
  write(scratch("bad.ckpt"), bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(load_checkpoint(scratch("bad.ckpt")), FormatError);
  write(scratch("bad.ckpt"), bytes + "x");
  EXPECT_THROW(load_checkpoint(scratch("bad.ckpt")), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  write(scratch("bad.ckpt"), magic);
  EXPECT_THROW(load_checkpoint(scratch("bad.ckpt")), FormatError);
}

TEST(RescalePreprocess, CompensatedModelComputesTheSameFunction) {
  Rng rng(7);
  for (const auto f : kFamilies) {
    const auto m = build_classifier<double>(config_for(f), 7);
    const auto x = random_pixels(rng, {3, 8, 8, 3}, 0.0);
    for (const double lambda : {0.01, 3.0, 255.0}) {
      const auto r = rescale_preprocess(m, lambda);
      EXPECT_DOUBLE_EQ(r.preprocess().scale, m.preprocess().scale * lambda);
      EXPECT_LE(max_abs_diff(logits(r, x), logits(m, x)), 1e-9);
    }
  }
  EXPECT_THROW(rescale_preprocess(build_classifier<double>(config_for(Family::mlp), 1), 0.0), ConfigError);
}
