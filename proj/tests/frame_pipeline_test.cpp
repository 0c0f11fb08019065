// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "t3kit/frame_pipeline.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "fixtures.hpp"

namespace t3kit {
namespace {

StitchConfig small_config(int crop = 8, double resize = 1.0) {
  StitchConfig cfg;
  cfg.crop = crop;
  cfg.resize = resize;
  return cfg;
}

TEST(SampleFrames, LongVideoGivesDistinctSortedIndices) {
  StitchConfig cfg;
  nn::Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto idx = sample_frame_indices(100, cfg, rng);
    ASSERT_EQ(idx.size(), 16u);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    EXPECT_EQ(std::set<int>(idx.begin(), idx.end()).size(), 16u);
    EXPECT_GE(idx.front(), 0);
    EXPECT_LT(idx.back(), 100);
  }
}

TEST(SampleFrames, ExactLengthTakesEveryFrame) {
  StitchConfig cfg;
  nn::Rng rng(2);
  const auto idx = sample_frame_indices(16, cfg, rng);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(idx[static_cast<std::size_t>(i)], i);
}

TEST(SampleFrames, ShortVideoRepeatsAndCoversEveryFrame) {
  StitchConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    nn::Rng rng(seed);
    const auto idx = sample_frame_indices(5, cfg, rng);
    ASSERT_EQ(idx.size(), 16u);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    for (int f = 0; f < 5; ++f) EXPECT_GE(std::count(idx.begin(), idx.end(), f), 1) << "frame " << f;
    EXPECT_LT(idx.back(), 5);
  }
}

TEST(SampleFrames, EmptyVideoIsRejected) {
  StitchConfig cfg;
  nn::Rng rng(0);
  EXPECT_THROW(sample_frame_indices(0, cfg, rng), std::invalid_argument);
}

TEST(StitchConfig, Validation) {
  StitchConfig cfg;
  EXPECT_EQ(cfg.grid(), 4);
  EXPECT_EQ(cfg.side(), 896);
  EXPECT_EQ(cfg.test_window(), 291);
  cfg.num_selected = 15;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = StitchConfig{};
  cfg.resize = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = StitchConfig{};
  cfg.test_scale = 0.9;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(AugmentTrain, QuarterResizeThenCrop) {
  nn::Rng rng(3);
  const FrameSequence seq = testing::random_video(rng, 1, 1280, 1280);
  StitchConfig cfg;
  AugmentTrace trace;
  const Image out = augment_train(seq.frames[0], cfg, rng, &trace);
  EXPECT_EQ(trace.resized_height, 320);
  EXPECT_EQ(trace.resized_width, 320);
  EXPECT_EQ(out.channels, 3);
  EXPECT_EQ(out.height, 224);
  EXPECT_EQ(out.width, 224);
  EXPECT_EQ(trace.ops.size(), 2u);
}

TEST(AugmentTrain, IdentityPolicyAtFullSizeIsIdentity) {
  nn::Rng rng(4);
  const FrameSequence seq = testing::random_video(rng, 1, 224, 224);
  StitchConfig cfg;
  cfg.resize = 1.0;
  cfg.policy = AugmentPolicy::identity();
  EXPECT_EQ(augment_train(seq.frames[0], cfg, rng), seq.frames[0]);
}

TEST(AugmentTrain, SmallFramesArePadded) {
  nn::Rng rng(5);
  const FrameSequence seq = testing::random_video(rng, 1, 40, 30);
  StitchConfig cfg = small_config(64);
  const Image out = augment_train(seq.frames[0], cfg, rng);
  EXPECT_EQ(out.height, 64);
  EXPECT_EQ(out.width, 64);
}

TEST(AugmentTrain, SeedDeterminism) {
  nn::Rng rng(6);
  const FrameSequence seq = testing::random_video(rng, 1, 200, 180);
  StitchConfig cfg = small_config(64, 0.5);
  nn::Rng a(0), b(0);
  EXPECT_EQ(augment_train(seq.frames[0], cfg, a), augment_train(seq.frames[0], cfg, b));
}

TEST(AugmentTest, CropsStayInsideCentreWindow) {
  // Coordinate-encoded frames at r=1 make each output pixel name its source.
  const FrameSequence seq = testing::coordinate_video(1, 320, 300);
  StitchConfig cfg;
  cfg.resize = 1.0;
  const int side = cfg.test_window();
  const int wy = (320 - side) / 2, wx = (300 - side) / 2;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    nn::Rng rng(seed);
    AugmentTrace trace;
    const Image out = augment_test(seq.frames[0], cfg, rng, &trace);
    ASSERT_EQ(out.height, 224);
    EXPECT_EQ(trace.window_y, wy);
    EXPECT_EQ(trace.window_x, wx);
    EXPECT_EQ(trace.window_side, 291);
    float min_y = 1e9f, max_y = -1, min_x = 1e9f, max_x = -1;
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        min_y = std::min(min_y, out.at(0, y, x));
        max_y = std::max(max_y, out.at(0, y, x));
        min_x = std::min(min_x, out.at(1, y, x));
        max_x = std::max(max_x, out.at(1, y, x));
      }
    EXPECT_GE(min_y, wy);
    EXPECT_LT(max_y, wy + side);
    EXPECT_GE(min_x, wx);
    EXPECT_LT(max_x, wx + side);
  }
}

TEST(AugmentTest, UnitScaleMakesCropDeterministic) {
  const FrameSequence seq = testing::coordinate_video(1, 250, 260);
  StitchConfig cfg;
  cfg.resize = 1.0;
  cfg.test_scale = 1.0;
  nn::Rng a(1), b(99);
  const Image x = augment_test(seq.frames[0], cfg, a), y = augment_test(seq.frames[0], cfg, b);
  EXPECT_EQ(x, y);
  EXPECT_EQ(x, crop(seq.frames[0], (250 - 224) / 2, (260 - 224) / 2, 224, 224));
}

TEST(AugmentTest, NoPhotometricChange) {
  nn::Rng rng(8);
  const FrameSequence seq = testing::random_video(rng, 1, 100, 100);
  StitchConfig cfg = small_config(32);
  AugmentTrace trace;
  const Image out = augment_test(seq.frames[0], cfg, rng, &trace);
  EXPECT_TRUE(trace.ops.empty());
  EXPECT_EQ(out, crop(seq.frames[0], trace.crop_y, trace.crop_x, 32, 32));
}

TEST(StitchGrid, SixteenTilesMakeNineHundredNinetySix) {
  nn::Rng rng(9);
  StitchConfig cfg;
  std::vector<Image> tiles;
  for (int t = 0; t < 16; ++t) tiles.push_back(testing::random_video(rng, 1, 224, 224).frames[0]);
  std::vector<int> idx(16);
  std::iota(idx.begin(), idx.end(), 0);
  const StitchedImage s = stitch_grid(tiles, idx, cfg);
  EXPECT_EQ(s.pixels.channels, 3);
  EXPECT_EQ(s.pixels.height, 896);
  EXPECT_EQ(s.pixels.width, 896);
  for (int t = 0; t < 16; ++t) EXPECT_EQ(s.tile_at(t), tiles[static_cast<std::size_t>(t)]) << "tile " << t;
  // Placement law checked pixel by pixel for one interior tile (i=2, j=1).
  for (int y = 0; y < 224; y += 37)
    for (int x = 0; x < 224; x += 41) EXPECT_EQ(s.pixels.at(1, 2 * 224 + y, 224 + x), tiles[9].at(1, y, x));
}

TEST(StitchGrid, SingleTileIsItself) {
  nn::Rng rng(10);
  StitchConfig cfg = small_config(16);
  cfg.num_selected = 1;
  const Image tile = testing::random_video(rng, 1, 16, 16).frames[0];
  const std::vector<Image> tiles{tile};
  EXPECT_EQ(stitch_grid(tiles, {0}, cfg).pixels, tile);
}

TEST(StitchGrid, RejectsBadTiles) {
  StitchConfig cfg = small_config(4);
  std::vector<Image> tiles(15, Image(3, 4, 4));
  EXPECT_THROW(stitch_grid(tiles, std::vector<int>(15), cfg), std::invalid_argument);
  tiles.emplace_back(3, 5, 4);
  EXPECT_THROW(stitch_grid(tiles, std::vector<int>(16), cfg), std::invalid_argument);
}

TEST(MakeStitched, ProvenanceOrderAndDeterminism) {
  nn::Rng rng(11);
  const FrameSequence seq = testing::random_video(rng, 23, 48, 56);
  StitchConfig cfg = small_config(16, 0.5);
  for (Mode mode : {Mode::kTrain, Mode::kTest}) {
    std::vector<Image> tiles;
    const StitchedImage s = make_stitched(seq, cfg, mode, 77, &tiles);
    EXPECT_EQ(s.pixels.height, 64);
    EXPECT_TRUE(std::is_sorted(s.source_indices.begin(), s.source_indices.end()));
    for (int t = 0; t < 16; ++t) EXPECT_EQ(s.tile_at(t), tiles[static_cast<std::size_t>(t)]);
    EXPECT_EQ(make_stitched(seq, cfg, mode, 77).pixels, s.pixels);
    EXPECT_NE(make_stitched(seq, cfg, mode, 78).pixels, s.pixels);
  }
}

TEST(TestTimeReplicas, CountShapeAndDiversity) {
  nn::Rng rng(12);
  const FrameSequence seq = testing::random_video(rng, 20, 40, 40);
  StitchConfig cfg = small_config(16, 0.5);
  cfg.test_replicas = 30;
  const auto reps = test_time_replicas(seq, cfg);
  ASSERT_EQ(reps.size(), 30u);
  for (const auto& r : reps) EXPECT_EQ(r.pixels.height, 64);
  EXPECT_NE(reps[0].pixels, reps[1].pixels);
  EXPECT_EQ(reps[3].pixels, make_stitched(seq, cfg, Mode::kTest, cfg.seed + 3).pixels);
  cfg.test_replicas = 1;
  EXPECT_EQ(test_time_replicas(seq, cfg).size(), 1u);
}

TEST(LoadFrameSequence, ReadsPngsInFilenameOrder) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "t3kit_frames_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (int f = 0; f < 3; ++f) {
    Image img(3, 4, 5, static_cast<float>(f) / 4.0f);
    char name[32];
    std::snprintf(name, sizeof name, "%05d.png", 2 - f);
    write_png(img, (dir / name).string());
  }
  const FrameSequence seq = load_frame_sequence(dir);
  ASSERT_EQ(seq.size(), 3);
  EXPECT_EQ(seq.frames[0].height, 4);
  EXPECT_NEAR(seq.frames[0].at(0, 0, 0), 0.5f, 1.0f / 255.0f);
  EXPECT_NEAR(seq.frames[2].at(2, 3, 4), 0.0f, 1e-6f);
  fs::remove_all(dir);
  EXPECT_THROW(load_frame_sequence(dir), std::runtime_error);
}

}  // namespace
}  // namespace t3kit
