// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/image.hpp"
#include "t3kit/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace t3kit {

struct FrameSequence {
  std::string video_id;
  std::vector<Image> frames;

  int size() const { return static_cast<int>(frames.size()); }

  void validate() const {
    if (frames.empty()) throw std::invalid_argument("video '" + video_id + "' has no frames");
    for (const Image& f : frames)
      if (!f.same_shape(frames.front()))
        throw std::invalid_argument("video '" + video_id + "': frames differ in size");
  }
};

enum class AugmentOp { kHorizontalFlip, kBrightness, kContrast, kRotate, kTranslate };

inline const char* to_string(AugmentOp op) {
  switch (op) {
    case AugmentOp::kHorizontalFlip: return "hflip";
    case AugmentOp::kBrightness: return "brightness";
    case AugmentOp::kContrast: return "contrast";
    case AugmentOp::kRotate: return "rotate";
    case AugmentOp::kTranslate: return "translate";
  }
  return "?";
}

inline AugmentOp parse_augment_op(const std::string& s) {
  for (AugmentOp op : {AugmentOp::kHorizontalFlip, AugmentOp::kBrightness, AugmentOp::kContrast, AugmentOp::kRotate,
                       AugmentOp::kTranslate})
    if (s == to_string(op)) return op;
  throw std::invalid_argument("unknown augmentation op '" + s + "'");
}

/// RandAugment-style policy: `num_ops` ops drawn with replacement from `ops`,
/// each applied at strength magnitude/10 with a random sign.
struct AugmentPolicy {
  std::vector<AugmentOp> ops{AugmentOp::kHorizontalFlip, AugmentOp::kBrightness, AugmentOp::kContrast,
                             AugmentOp::kRotate, AugmentOp::kTranslate};
  int num_ops = 2;
  double magnitude = 9.0;
  double max_rotation_deg = 15.0;
  double max_translation = 0.10;
  double max_brightness = 0.5;
  double max_contrast = 0.5;

  static AugmentPolicy identity() {
    AugmentPolicy p;
    p.ops.clear();
    p.num_ops = 0;
    return p;
  }
};

struct StitchConfig {
  int num_selected = 16;
  int crop = 224;
  double resize = 0.25;
  double test_scale = 1.3;
  int test_replicas = 30;
  bool stratified = true;
  AugmentPolicy policy;
  std::uint64_t seed = 0;

  int grid() const {
    const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(num_selected))));
    return g;
  }
  int side() const { return grid() * crop; }
  /// ⌊crop·test_scale⌋ with a guard against 224·1.3 landing on 291.19999….
  int test_window() const { return static_cast<int>(std::floor(crop * test_scale + 1e-9)); }

  void validate() const {
    const int g = grid();
    if (num_selected <= 0 || g * g != num_selected)
      throw std::invalid_argument("num_selected " + std::to_string(num_selected) + " is not a perfect square");
    if (crop <= 0) throw std::invalid_argument("crop size must be positive");
    if (!(resize > 0.0 && resize <= 1.0)) throw std::invalid_argument("resize factor must lie in (0, 1]");
    if (!(test_scale >= 1.0)) throw std::invalid_argument("test center-crop scale must be >= 1");
    if (test_replicas <= 0) throw std::invalid_argument("test replica count must be positive");
    if (policy.num_ops < 0) throw std::invalid_argument("augmentation num_ops must be >= 0");
    if (policy.num_ops > 0 && policy.ops.empty()) throw std::invalid_argument("augmentation policy has no ops");
  }
};

enum class Mode { kTrain, kTest };

struct StitchedImage {
  Image pixels;
  std::vector<int> source_indices;
  int grid = 0;
  int tile = 0;

  Image tile_at(int t) const { return crop(pixels, (t / grid) * tile, (t % grid) * tile, tile, tile); }
};

/// Where each augmentation stage placed its window, in resized-frame pixels.
struct AugmentTrace {
  int resized_height = 0;
  int resized_width = 0;
  int pad_top = 0;
  int pad_left = 0;
  int window_y = 0, window_x = 0, window_side = 0;
  int crop_y = 0, crop_x = 0;
  std::vector<std::string> ops;
};

/// Sorted frame indices. Uniform without replacement when the video is long
/// enough; otherwise with replacement, and with `stratified` every frame is
/// used at least once before random fill.
inline std::vector<int> sample_frame_indices(int num_frames, const StitchConfig& cfg, nn::Rng& rng) {
  if (num_frames <= 0) throw std::invalid_argument("cannot sample from an empty frame sequence");
  const int k = cfg.num_selected;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  if (num_frames >= k) {
    // Partial Fisher-Yates; deterministic across standard libraries.
    std::vector<int> pool(static_cast<std::size_t>(num_frames));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(num_frames - i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
      out.push_back(pool[static_cast<std::size_t>(i)]);
    }
  } else {
    if (cfg.stratified)
      for (int i = 0; i < num_frames; ++i) out.push_back(i);
    while (static_cast<int>(out.size()) < k) out.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(num_frames)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<Image> sample_frames(const FrameSequence& seq, const StitchConfig& cfg, nn::Rng& rng,
                                        std::vector<int>* indices = nullptr) {
  const std::vector<int> idx = sample_frame_indices(seq.size(), cfg, rng);
  std::vector<Image> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(seq.frames[static_cast<std::size_t>(i)]);
  if (indices != nullptr) *indices = idx;
  return out;
}

namespace detail {

inline int random_int(nn::Rng& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline Image resize_by(const Image& frame, double factor, AugmentTrace* trace) {
  const int h = std::max(1, static_cast<int>(std::lround(frame.height * factor)));
  const int w = std::max(1, static_cast<int>(std::lround(frame.width * factor)));
  if (trace != nullptr) {
    trace->resized_height = h;
    trace->resized_width = w;
  }
  return resize(frame, h, w);
}

inline Image pad_traced(const Image& img, int side, AugmentTrace* trace) {
  if (trace != nullptr) {
    trace->pad_top = std::max(0, side - img.height) / 2;
    trace->pad_left = std::max(0, side - img.width) / 2;
  }
  return pad_to_fit(img, side, side);
}

inline Image warp(const Image& img, const cv::Mat& affine) {
  cv::Mat out;
  cv::warpAffine(to_mat(img), out, affine, cv::Size(img.width, img.height), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
  return from_mat(out);
}

inline void apply_op(Image& img, AugmentOp op, const AugmentPolicy& p, nn::Rng& rng) {
  const double level = std::clamp(p.magnitude, 0.0, 10.0) / 10.0;
  const double sign = (rng() & 1U) != 0 ? 1.0 : -1.0;
  switch (op) {
    case AugmentOp::kHorizontalFlip: {
      for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y) std::reverse(img.ptr(c, y, 0), img.ptr(c, y, 0) + img.width);
      break;
    }
    case AugmentOp::kBrightness: {
      const float f = static_cast<float>(1.0 + sign * p.max_brightness * level);
      for (float& v : img.data) v = std::clamp(v * f, 0.0f, 1.0f);
      break;
    }
    case AugmentOp::kContrast: {
      const float f = static_cast<float>(1.0 + sign * p.max_contrast * level);
      double mean = 0.0;
      for (float v : img.data) mean += v;
      const float m = static_cast<float>(mean / static_cast<double>(img.data.size()));
      for (float& v : img.data) v = std::clamp(m + f * (v - m), 0.0f, 1.0f);
      break;
    }
    case AugmentOp::kRotate: {
      const double deg = sign * p.max_rotation_deg * level;
      cv::Mat m = cv::getRotationMatrix2D(cv::Point2f(0.5f * (img.width - 1), 0.5f * (img.height - 1)), deg, 1.0);
      img = warp(img, m);
      break;
    }
    case AugmentOp::kTranslate: {
      const bool horizontal = (rng() & 1U) != 0;
      const double shift = sign * p.max_translation * level * (horizontal ? img.width : img.height);
      cv::Mat m = (cv::Mat_<double>(2, 3) << 1, 0, horizontal ? std::round(shift) : 0.0, 0, 1,
                   horizontal ? 0.0 : std::round(shift));
      img = warp(img, m);
      break;
    }
  }
}

}  // namespace detail

/// Applies `policy.num_ops` randomly chosen ops in sequence.
inline Image rand_augment(Image img, const AugmentPolicy& policy, nn::Rng& rng, AugmentTrace* trace = nullptr) {
  for (int i = 0; i < policy.num_ops; ++i) {
    const AugmentOp op = policy.ops[static_cast<std::size_t>(rng() % policy.ops.size())];
    detail::apply_op(img, op, policy, rng);
    if (trace != nullptr) trace->ops.emplace_back(to_string(op));
  }
  return img;
}

/// Train path: resize by cfg.resize, random crop×crop window, then RandAugment.
inline Image augment_train(const Image& frame, const StitchConfig& cfg, nn::Rng& rng, AugmentTrace* trace = nullptr) {
  Image r = detail::pad_traced(detail::resize_by(frame, cfg.resize, trace), cfg.crop, trace);
  const int y = detail::random_int(rng, 0, r.height - cfg.crop);
  const int x = detail::random_int(rng, 0, r.width - cfg.crop);
  if (trace != nullptr) {
    trace->window_y = 0;
    trace->window_x = 0;
    trace->window_side = std::max(r.height, r.width);
    trace->crop_y = y;
    trace->crop_x = x;
  }
  return rand_augment(crop(r, y, x, cfg.crop, cfg.crop), cfg.policy, rng, trace);
}

/// Test path: resize by cfg.resize, centre window of side ⌊crop·test_scale⌋,
/// random crop×crop inside it. No photometric augmentation.
inline Image augment_test(const Image& frame, const StitchConfig& cfg, nn::Rng& rng, AugmentTrace* trace = nullptr) {
  const int side = cfg.test_window();
  Image r = detail::pad_traced(detail::resize_by(frame, cfg.resize, trace), side, trace);
  const int wy = (r.height - side) / 2;
  const int wx = (r.width - side) / 2;
  const int y = wy + detail::random_int(rng, 0, side - cfg.crop);
  const int x = wx + detail::random_int(rng, 0, side - cfg.crop);
  if (trace != nullptr) {
    trace->window_y = wy;
    trace->window_x = wx;
    trace->window_side = side;
    trace->crop_y = y;
    trace->crop_x = x;
  }
  return crop(r, y, x, cfg.crop, cfg.crop);
}

/// Row-major placement of g² tiles into one (g·c)×(g·c) image.
inline StitchedImage stitch_grid(std::span<const Image> tiles, std::vector<int> source_indices, const StitchConfig& cfg) {
  const int g = cfg.grid();
  const int c = cfg.crop;
  if (static_cast<int>(tiles.size()) != g * g)
    throw std::invalid_argument("stitch_grid: expected " + std::to_string(g * g) + " tiles, got " +
                                std::to_string(tiles.size()));
  if (source_indices.size() != tiles.size()) throw std::invalid_argument("stitch_grid: index count mismatch");
  StitchedImage out;
  out.grid = g;
  out.tile = c;
  out.source_indices = std::move(source_indices);
  out.pixels = Image(tiles.front().channels, g * c, g * c);
  for (int t = 0; t < g * g; ++t) {
    const Image& tile = tiles[static_cast<std::size_t>(t)];
    if (tile.height != c || tile.width != c || tile.channels != out.pixels.channels)
      throw std::invalid_argument("stitch_grid: tile " + std::to_string(t) + " is not " + std::to_string(c) + "x" +
                                  std::to_string(c));
    const int oy = (t / g) * c, ox = (t % g) * c;
    for (int ch = 0; ch < tile.channels; ++ch)
      for (int y = 0; y < c; ++y) std::copy_n(tile.ptr(ch, y, 0), c, out.pixels.ptr(ch, oy + y, ox));
  }
  return out;
}

/// sample → augment → stitch, a pure function of (seq, cfg, mode, seed).
/// `tiles`, when given, receives the augmented frames in tile order.
inline StitchedImage make_stitched(const FrameSequence& seq, const StitchConfig& cfg, Mode mode, std::uint64_t seed,
                                   std::vector<Image>* tiles = nullptr, std::vector<AugmentTrace>* traces = nullptr) {
  cfg.validate();
  seq.validate();
  nn::Rng rng(seed);
  std::vector<int> idx = sample_frame_indices(seq.size(), cfg, rng);
  std::vector<Image> aug;
  aug.reserve(idx.size());
  for (int i : idx) {
    AugmentTrace tr;
    AugmentTrace* tp = traces != nullptr ? &tr : nullptr;
    const Image& f = seq.frames[static_cast<std::size_t>(i)];
    aug.push_back(mode == Mode::kTrain ? augment_train(f, cfg, rng, tp) : augment_test(f, cfg, rng, tp));
    if (traces != nullptr) traces->push_back(std::move(tr));
  }
  StitchedImage out = stitch_grid(aug, std::move(idx), cfg);
  if (tiles != nullptr) *tiles = std::move(aug);
  return out;
}

/// n test-path draws; replica r uses seed cfg.seed + r and re-samples frames.
inline std::vector<StitchedImage> test_time_replicas(const FrameSequence& seq, const StitchConfig& cfg) {
  std::vector<StitchedImage> out;
  out.reserve(static_cast<std::size_t>(cfg.test_replicas));
  for (int r = 0; r < cfg.test_replicas; ++r)
    out.push_back(make_stitched(seq, cfg, Mode::kTest, cfg.seed + static_cast<std::uint64_t>(r)));
  return out;
}

/// Loads every PNG/JPEG in `dir`, ordered by filename.
inline FrameSequence load_frame_sequence(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("frame directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  FrameSequence seq;
  seq.video_id = dir.filename().string();
  for (const auto& f : files) seq.frames.push_back(read_image(f.string()));
  seq.validate();
  return seq;
}

}  // namespace t3kit
