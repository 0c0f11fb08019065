// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/action_dictionary.hpp"
#include "t3kit/harness/config.hpp"
#include "t3kit/image.hpp"
#include "t3kit/vqa_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace t3kit::harness {

// Recognition recipe. The verb is the texture of a frame (stripe orientation,
// checkerboard or flat) and the noun is its colour. Both survive resizing,
// cropping and the augmentation policy, and a global-average-pooled conv
// encoder can separate them.
inline constexpr std::array<const char*, 4> kVerbPatterns{"horizontal", "vertical", "checker", "flat"};
inline constexpr std::array<const char*, 6> kNounColours{"red", "green", "blue", "yellow", "cyan", "magenta"};
inline constexpr std::array<std::array<float, 3>, 6> kColourRgb{{{0.9f, 0.15f, 0.15f},
                                                                 {0.15f, 0.9f, 0.15f},
                                                                 {0.15f, 0.15f, 0.9f},
                                                                 {0.9f, 0.9f, 0.15f},
                                                                 {0.15f, 0.9f, 0.9f},
                                                                 {0.9f, 0.15f, 0.9f}}};
inline constexpr float kBackground = 0.08f;
inline constexpr float kNoise = 0.04f;

inline constexpr std::array<const char*, 8> kTools{"scissors", "forceps", "syringe", "scalpel",
                                                   "needle",   "clamp",   "gauze",   "retractor"};
inline constexpr std::array<const char*, 8> kSteps{"prep site",    "insert needle", "attach syringe", "draw blood",
                                                   "apply gauze",  "remove needle", "clean area",     "close wound"};
inline const std::string kToolQuestion = "what tool is in use";
inline const std::string kStepQuestion = "what is the current step";

struct ClipLabel {
  std::string video_id;
  int stream = 0;
  int position = 0;
  ActionTarget target;
  std::string split = "train";
};

inline std::string video_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "vid%04d", i);
  return buf;
}

inline std::string frame_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d.png", i);
  return buf;
}

/// Held-out assignment by a seeded draw per stream (or per video for vqa).
inline std::string draw_split(nn::Rng& rng, double val_fraction) {
  return nn::uniform01(rng) < val_fraction ? "val" : "train";
}

/// Every verb and noun appears: pairs (i mod k, i mod h) for i < max(k, h) are
/// distinct, the rest are drawn without replacement.
inline ActionDictionary synthetic_dictionary(int k, int h, int g, nn::Rng& rng) {
  std::vector<VerbNoun> pairs;
  std::vector<char> used(static_cast<std::size_t>(k * h), 0);
  for (int i = 0; i < std::max(k, h); ++i) {
    pairs.push_back({i % k, i % h});
    used[static_cast<std::size_t>((i % k) * h + i % h)] = 1;
  }
  std::vector<VerbNoun> rest;
  for (int v = 0; v < k; ++v)
    for (int n = 0; n < h; ++n)
      if (!used[static_cast<std::size_t>(v * h + n)]) rest.push_back({v, n});
  for (std::size_t i = rest.size(); i > 1; --i) std::swap(rest[i - 1], rest[rng() % i]);
  for (std::size_t i = 0; pairs.size() < static_cast<std::size_t>(g); ++i) pairs.push_back(rest[i]);
  std::vector<std::string> verbs(kVerbPatterns.begin(), kVerbPatterns.begin() + k);
  std::vector<std::string> nouns(kNounColours.begin(), kNounColours.begin() + h);
  return ActionDictionary::build(pairs, LabelSpace(verbs), LabelSpace(nouns), {});
}

/// Texture period in pixels; scales with the frame so the stripes survive the
/// configured resize.
inline int stripe_period(int height, int width) { return std::max(4, std::min(height, width) / 6); }

inline Image render_frame(int verb, int noun, int height, int width, int phase_y, int phase_x, nn::Rng& rng) {
  const int half = stripe_period(height, width) / 2;
  const auto& rgb = kColourRgb[static_cast<std::size_t>(noun)];
  Image img(3, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const bool row_on = ((y + phase_y) / half) % 2 == 0;
      const bool col_on = ((x + phase_x) / half) % 2 == 0;
      float on = 1.0f;
      switch (verb) {
        case 0: on = row_on ? 1.0f : 0.0f; break;
        case 1: on = col_on ? 1.0f : 0.0f; break;
        case 2: on = row_on != col_on ? 1.0f : 0.0f; break;
        default: on = 0.6f; break;
      }
      for (int c = 0; c < 3; ++c) {
        const float base = kBackground + on * (rgb[static_cast<std::size_t>(c)] - kBackground);
        const float noise = static_cast<float>(kNoise * (2.0 * nn::uniform01(rng) - 1.0));
        img.at(c, y, x) = std::clamp(base + noise, 0.0f, 1.0f);
      }
    }
  return img;
}

/// Rule-based decoder over the recipe, independent of any learned model.
inline VerbNoun decode_frame_pixels(const Image& img) {
  const int h = img.height, w = img.width;
  std::vector<double> lum(static_cast<std::size_t>(h * w));
  double mean = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = (img.at(0, y, x) + img.at(1, y, x) + img.at(2, y, x)) / 3.0;
      lum[static_cast<std::size_t>(y * w + x)] = v;
      mean += v;
    }
  mean /= static_cast<double>(h * w);
  double total = 0.0;
  std::vector<double> rows(static_cast<std::size_t>(h), 0.0), cols(static_cast<std::size_t>(w), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = lum[static_cast<std::size_t>(y * w + x)];
      total += (v - mean) * (v - mean);
      rows[static_cast<std::size_t>(y)] += v / w;
      cols[static_cast<std::size_t>(x)] += v / h;
    }
  total /= static_cast<double>(h * w);
  auto variance = [mean](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size());
  };
  int verb = 3;
  if (total > 0.01) {
    const double rv = variance(rows), cv = variance(cols);
    verb = rv > 0.5 * total ? 0 : cv > 0.5 * total ? 1 : 2;
  }
  // Noun: colour of the lit pixels, matched by direction.
  std::array<double, 3> lit{0, 0, 0};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (lum[static_cast<std::size_t>(y * w + x)] >= mean)
        for (int c = 0; c < 3; ++c) lit[static_cast<std::size_t>(c)] += img.at(c, y, x) - kBackground;
  int noun = 0;
  double best = -1e300;
  const double ln = std::sqrt(lit[0] * lit[0] + lit[1] * lit[1] + lit[2] * lit[2]) + 1e-12;
  for (std::size_t n = 0; n < kColourRgb.size(); ++n) {
    double dot = 0.0, pn = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double p = kColourRgb[n][static_cast<std::size_t>(c)] - kBackground;
      dot += p * lit[static_cast<std::size_t>(c)];
      pn += p * p;
    }
    const double cosine = dot / (std::sqrt(pn) * ln);
    if (cosine > best) {
      best = cosine;
      noun = static_cast<int>(n);
    }
  }
  return {verb, noun};
}

inline void check_recognition_limits(const DataConfig& d) {
  if (d.num_verbs > static_cast<int>(kVerbPatterns.size()))
    throw ConfigError("[data] the synthetic recipe supports at most " + std::to_string(kVerbPatterns.size()) + " verbs");
  if (d.num_nouns > static_cast<int>(kNounColours.size()))
    throw ConfigError("[data] the synthetic recipe supports at most " + std::to_string(kNounColours.size()) + " nouns");
}

inline void write_labels_csv(const std::filesystem::path& path, const std::vector<ClipLabel>& clips) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "video_id,stream,position,verb,noun,action,split\n";
  for (const auto& c : clips)
    out << c.video_id << ',' << c.stream << ',' << c.position << ',' << c.target.verb << ',' << c.target.noun << ','
        << c.target.action << ',' << c.split << '\n';
  if (!out) throw std::runtime_error("error writing " + path.string());
}

inline std::vector<ClipLabel> read_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open labels file " + path.string());
  const csv::Table t = csv::read(in, path.string());
  const std::vector<std::string> want{"video_id", "stream", "position", "verb", "noun", "action", "split"};
  if (t.header != want) throw std::runtime_error(path.string() + ": unexpected header");
  std::vector<ClipLabel> out;
  for (const auto& r : t.rows) {
    ClipLabel c;
    c.video_id = r[0];
    c.stream = static_cast<int>(csv::to_int(r[1], path.string()));
    c.position = static_cast<int>(csv::to_int(r[2], path.string()));
    c.target.verb = static_cast<int>(csv::to_int(r[3], path.string()));
    c.target.noun = static_cast<int>(csv::to_int(r[4], path.string()));
    c.target.action = static_cast<int>(csv::to_int(r[5], path.string()));
    c.split = r[6];
    out.push_back(std::move(c));
  }
  return out;
}

/// Streams of consecutive clips whose actions step a, a+1, … (mod g), so the
/// next clip's label is a function of the current one.
inline std::vector<ClipLabel> generate_recognition(const RunConfig& cfg, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const DataConfig& d = cfg.data;
  check_recognition_limits(d);
  nn::Rng rng(cfg.seed ^ 0x5eed0001ULL);
  const ActionDictionary dict = synthetic_dictionary(d.num_verbs, d.num_nouns, d.num_actions, rng);

  fs::create_directories(root / "videos");
  {
    std::ofstream out(root / "dictionary.csv");
    if (!out) throw std::runtime_error("cannot write " + (root / "dictionary.csv").string());
    write_dictionary_csv(out, dict);
  }
  const int total = d.videos_per_class * d.num_actions;
  const int streams = (total + d.stream_length - 1) / d.stream_length;
  std::vector<ClipLabel> clips;
  const int period = stripe_period(d.frame_height, d.frame_width);
  for (int s = 0; s < streams; ++s) {
    const std::string split = draw_split(rng, d.val_fraction);
    for (int p = 0; p < d.stream_length; ++p) {
      const int a = (s + p) % d.num_actions;
      const VerbNoun vn = dict.action_to_pair(a);
      ClipLabel c{video_name(static_cast<int>(clips.size())), s, p, {vn.verb, vn.noun, a}, split};
      const fs::path dir = root / "videos" / c.video_id;
      fs::create_directories(dir);
      const int py = static_cast<int>(rng() % static_cast<std::uint64_t>(period));
      const int px = static_cast<int>(rng() % static_cast<std::uint64_t>(period));
      for (int f = 0; f < d.frames_per_video; ++f)
        write_png(render_frame(vn.verb, vn.noun, d.frame_height, d.frame_width, py + f, px + f, rng),
                  (dir / frame_name(f)).string());
      clips.push_back(std::move(c));
    }
  }
  write_labels_csv(root / "labels.csv", clips);
  return clips;
}

struct VqaVideoSpec {
  std::string video_id;
  std::vector<int> tool_per_block;
  std::vector<int> step_per_block;
  std::string split = "train";
};

inline std::vector<std::string> synthetic_answers(int num_answers) {
  const int half = num_answers / 2;
  std::vector<std::string> out;
  for (int i = 0; i < half; ++i) out.emplace_back(kTools[static_cast<std::size_t>(i)]);
  for (int i = 0; i < half; ++i) out.emplace_back(kSteps[static_cast<std::size_t>(i)]);
  return out;
}

/// Writes features/<id>.bin, qa.jsonl, answers.txt and splits.csv. A frame
/// holds one object near the current tool's prototype, one near the current
/// step's prototype and low-energy distractors, in shuffled order.
inline std::vector<VqaVideoSpec> generate_vqa(const RunConfig& cfg, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const DataConfig& d = cfg.data;
  if (d.vqa_answers > static_cast<int>(kTools.size() + kSteps.size()))
    throw ConfigError("[data] the synthetic recipe supports at most 16 answers");
  const int dim = cfg.mcan.feature_dim;
  const int half = d.vqa_answers / 2;
  nn::Rng rng(cfg.seed ^ 0x5eed0002ULL);
  auto noise = [&](double amp) { return amp * (2.0 * nn::uniform01(rng) - 1.0); };

  ag::Matrix protos(d.vqa_answers, dim);
  for (Eigen::Index i = 0; i < protos.size(); ++i) protos.data()[i] = noise(1.0);

  fs::create_directories(root / "features");
  const std::vector<std::string> answers = synthetic_answers(d.vqa_answers);
  {
    std::ofstream out(root / "answers.txt");
    if (!out) throw std::runtime_error("cannot write " + (root / "answers.txt").string());
    for (const auto& a : answers) out << a << '\n';
  }
  std::vector<VqaVideoSpec> specs;
  std::vector<vqa::QaAnnotation> qa;
  const int blocks = static_cast<int>(vqa::inference_partition(d.vqa_frames).size());
  for (int v = 0; v < d.vqa_videos; ++v) {
    VqaVideoSpec s;
    s.video_id = video_name(v);
    s.split = draw_split(rng, d.val_fraction);
    for (int b = 0; b < blocks; ++b) {
      s.tool_per_block.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(half)));
      s.step_per_block.push_back(half + static_cast<int>(rng() % static_cast<std::uint64_t>(half)));
    }
    std::vector<ag::Matrix> frames;
    for (int f = 0; f < d.vqa_frames; ++f) {
      const int b = f / vqa::kFrameBlock;
      const int n = d.min_objects + static_cast<int>(rng() % static_cast<std::uint64_t>(d.max_objects - d.min_objects + 1));
      ag::Matrix m(n, dim);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = noise(0.3);
      std::vector<int> order(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
      m.row(order[0]) += protos.row(s.tool_per_block[static_cast<std::size_t>(b)]);
      m.row(order[1]) += protos.row(s.step_per_block[static_cast<std::size_t>(b)]);
      frames.push_back(std::move(m));
    }
    vqa::write_feature_file((root / "features" / (s.video_id + ".bin")).string(), frames, dim);
    for (int f : vqa::subsample_frames(d.vqa_frames)) {
      const std::size_t b = static_cast<std::size_t>(f / vqa::kFrameBlock);
      qa.push_back({s.video_id, f, kToolQuestion, answers[static_cast<std::size_t>(s.tool_per_block[b])]});
      qa.push_back({s.video_id, f, kStepQuestion, answers[static_cast<std::size_t>(s.step_per_block[b])]});
    }
    specs.push_back(std::move(s));
  }
  vqa::write_qa_jsonl((root / "qa.jsonl").string(), qa);
  std::ofstream out(root / "splits.csv");
  if (!out) throw std::runtime_error("cannot write " + (root / "splits.csv").string());
  out << "video_id,split\n";
  for (const auto& s : specs) out << s.video_id << ',' << s.split << '\n';
  return specs;
}

}  // namespace t3kit::harness
