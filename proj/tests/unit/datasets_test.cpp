#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "advlab/datasets/loaders.hpp"
#include "advlab/datasets/sampling.hpp"
#include "advlab/datasets/synthetic.hpp"

using namespace advlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "advlab_datasets_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::vector<unsigned char> idx_images(std::uint32_t n, std::uint32_t h, std::uint32_t w) {
  std::vector<unsigned char> b{0, 0, 8, 3};
  for (const auto v : {n, h, w}) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
  }
  for (std::uint32_t i = 0; i < n * h * w; ++i) b.push_back(static_cast<unsigned char>(i % 251));
  return b;
}

std::vector<unsigned char> idx_labels(std::uint32_t n) {
  std::vector<unsigned char> b{0, 0, 8, 1};
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(n >> s));
  for (std::uint32_t i = 0; i < n; ++i) b.push_back(static_cast<unsigned char>(i % 10));
  return b;
}

}  // namespace

TEST(LoadIdx, ThreeImagesGiveNhwcShape) {
  write_bytes(scratch("a-img"), idx_images(3, 28, 28));
  write_bytes(scratch("a-lab"), idx_labels(3));
  const auto set = load_idx(scratch("a-img"), scratch("a-lab"));
  EXPECT_EQ(set.images.shape(), (Shape{3, 28, 28, 1}));
  EXPECT_EQ(set.labels, (std::vector<int>{0, 1, 2}));
}

TEST(LoadIdx, HandCraftedSingleImageRoundTripsExactly) {
  // 1 image of 2x3 with known bytes, label 7.
  write_bytes(scratch("b-img"), {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 1, 127, 128, 254, 255});
  write_bytes(scratch("b-lab"), {0, 0, 8, 1, 0, 0, 0, 1, 7});
  const auto set = load_idx(scratch("b-img"), scratch("b-lab"));
  const std::vector<float> expected{0, 1, 127, 128, 254, 255};
  EXPECT_EQ(set.images.storage(), expected);
  EXPECT_EQ(set.labels, std::vector<int>{7});
  write_idx(set, scratch("b2-img"), scratch("b2-lab"));
  EXPECT_EQ(detail::read_file(scratch("b2-img")), detail::read_file(scratch("b-img")));
  EXPECT_EQ(detail::read_file(scratch("b2-lab")), detail::read_file(scratch("b-lab")));
}

TEST(LoadIdx, LabelCountMismatchIsRejected) {
  write_bytes(scratch("c-img"), idx_images(3, 4, 4));
  write_bytes(scratch("c-lab"), idx_labels(2));
  EXPECT_THROW(load_idx(scratch("c-img"), scratch("c-lab")), FormatError);
}

TEST(LoadIdx, WrongMagicAndTruncationAreRejected) {
  auto img = idx_images(2, 4, 4);
  write_bytes(scratch("d-lab"), idx_labels(2));
  img[3] = 1;
  write_bytes(scratch("d-img"), img);
  EXPECT_THROW(load_idx(scratch("d-img"), scratch("d-lab")), FormatError);
  img = idx_images(2, 4, 4);
  img.pop_back();
  write_bytes(scratch("d-img"), img);
  EXPECT_THROW(load_idx(scratch("d-img"), scratch("d-lab")), FormatError);
  write_bytes(scratch("d-img"), {0, 0, 8});
  EXPECT_THROW(load_idx(scratch("d-img"), scratch("d-lab")), FormatError);
}

TEST(LoadCifar, SingleRecordAllSevens) {
  std::vector<unsigned char> rec(kCifarRecord, 7);
  rec[0] = 3;
  write_bytes(scratch("e.bin"), rec);
  const auto set = load_cifar_binary({scratch("e.bin")});
  EXPECT_EQ(set.images.shape(), (Shape{1, 32, 32, 3}));
  EXPECT_EQ(set.labels, std::vector<int>{3});
  for (const float v : set.images.data()) EXPECT_EQ(v, 7.0f);
}

TEST(LoadCifar, TwoRecordsAndMultipleFiles) {
  std::vector<unsigned char> recs(2 * kCifarRecord, 0);
  recs[kCifarRecord] = 9;
  write_bytes(scratch("f.bin"), recs);
  EXPECT_EQ(load_cifar_binary({scratch("f.bin")}).size(), 2u);
  EXPECT_EQ(load_cifar_binary({scratch("f.bin"), scratch("f.bin")}).size(), 4u);
}

TEST(LoadCifar, PlanarChannelsUnpackToInterleavedPixels) {
  // R plane = pixel index % 256, G = 100, B = 200; check against the hand layout.
  std::vector<unsigned char> rec(kCifarRecord);
  rec[0] = 1;
  for (std::size_t p = 0; p < 1024; ++p) {
    rec[1 + p] = static_cast<unsigned char>(p % 256);
    rec[1 + 1024 + p] = 100;
    rec[1 + 2048 + p] = 200;
  }
  write_bytes(scratch("g.bin"), rec);
  const auto set = load_cifar_binary({scratch("g.bin")});
  for (std::size_t y = 0; y < 32; ++y) {
    for (std::size_t x = 0; x < 32; ++x) {
      const std::size_t p = y * 32 + x;
      EXPECT_EQ(set.images[p * 3 + 0], static_cast<float>(p % 256));
      EXPECT_EQ(set.images[p * 3 + 1], 100.0f);
      EXPECT_EQ(set.images[p * 3 + 2], 200.0f);
    }
  }
  write_cifar_binary(set, scratch("g2.bin"));
  EXPECT_EQ(detail::read_file(scratch("g2.bin")), rec);
}

TEST(LoadCifar, BadSizeAndLabelAreRejected) {
  write_bytes(scratch("h.bin"), std::vector<unsigned char>(kCifarRecord + 1, 0));
  EXPECT_THROW(load_cifar_binary({scratch("h.bin")}), FormatError);
  std::vector<unsigned char> rec(kCifarRecord, 0);
  rec[0] = 10;
  write_bytes(scratch("h.bin"), rec);
  EXPECT_THROW(load_cifar_binary({scratch("h.bin")}), FormatError);
}

TEST(SynthBlobs, DeterministicAndSized) {
  const auto a = synth_blobs(10, 2, 8, 5);
  const auto b = synth_blobs(10, 2, 8, 5);
  EXPECT_EQ(a.size(), 20u);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, synth_blobs(10, 2, 8, 6));
  a.validate();
  for (const auto c : a.class_histogram()) EXPECT_EQ(c, 2u);
}

TEST(SynthShapeTexture, DeterministicIntegerPixelsAndCifarRoundTrip) {
  ShapeTextureSpec spec;
  const auto a = synth_shape_texture(spec, 3, 11);
  EXPECT_EQ(a, synth_shape_texture(spec, 3, 11));
  a.validate();
  EXPECT_EQ(a.images.shape(), (Shape{30, 32, 32, 3}));
  write_cifar_binary(a, scratch("st.bin"));
  EXPECT_EQ(load_cifar_binary({scratch("st.bin")}), a);
}

TEST(SampleBenchmark, TwoPerClassGivesTwentyImages) {
  const auto set = synth_blobs(10, 5, 6, 1);
  const auto s = sample_benchmark(set, 2, 42);
  EXPECT_EQ(s.set.size(), 20u);
  for (const auto c : s.set.class_histogram()) EXPECT_EQ(c, 2u);
  const auto again = sample_benchmark(set, 2, 42);
  EXPECT_EQ(s.source_index, again.source_index);
  EXPECT_EQ(s.set, again.set);
}

TEST(SampleBenchmark, ZeroAndDeficitAreErrors) {
  const auto set = synth_blobs(3, 2, 6, 1);
  EXPECT_THROW(sample_benchmark(set, 0, 1), ConfigError);
  try {
    auto uneven = set;
    uneven.labels[0] = uneven.labels[0] == 1 ? 2 : 1;  // leaves the original class one short
    (void)sample_benchmark(uneven, 2, 1);
    FAIL() << "expected a deficit error";
  } catch (const RangeError& e) {
    EXPECT_NE(std::string(e.what()).find("class"), std::string::npos);
  }
}

TEST(SampleBenchmark, LabelsTrackSourceAndAreGroupedByClass) {
  const auto set = synth_blobs(4, 6, 6, 9);
  const auto s = sample_benchmark(set, 3, 5);
  for (std::size_t i = 0; i < s.set.size(); ++i) {
    EXPECT_EQ(s.set.labels[i], set.labels[s.source_index[i]]);
  }
  for (std::size_t i = 1; i < s.set.size(); ++i) EXPECT_LE(s.set.labels[i - 1], s.set.labels[i]);
}
