// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/action_dictionary.hpp"
#include "t3kit/autograd.hpp"
#include "t3kit/frame_pipeline.hpp"
#include "t3kit/nn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <vector>

namespace t3kit::testing {

/// A 41-verb / 45-noun / 114-action dictionary whose listed rows match the
/// reference rows: 0=(4,36) attach syringe, 1=(26,28) prep site,
/// 2=(33,36) take kelly, 113=(4,0) attach ambubag. The rest is filled
/// deterministically so that every verb and noun is used.
inline ActionDictionary reference_dictionary() {
  constexpr int kVerbs = 41, kNouns = 45, kActions = 114;
  const std::vector<VerbNoun> fixed_head{{4, 36}, {26, 28}, {33, 36}};
  const VerbNoun fixed_tail{4, 0};
  std::set<std::pair<int, int>> used;
  for (const auto& p : fixed_head) used.insert({p.verb, p.noun});
  used.insert({fixed_tail.verb, fixed_tail.noun});

  std::vector<VerbNoun> fill;
  auto try_add = [&](int v, int n) {
    if (static_cast<int>(fill.size()) >= kActions - 4) return;
    if (used.insert({v, n}).second) fill.push_back({v, n});
  };
  for (int v = 0; v < kVerbs; ++v) try_add(v, (v * 7 + 1) % kNouns);
  for (int n = 0; n < kNouns; ++n) try_add((n * 5 + 2) % kVerbs, n);
  for (int i = 0; static_cast<int>(fill.size()) < kActions - 4; ++i) try_add((i * 13 + 3) % kVerbs, (i * 17 + 4) % kNouns);

  std::vector<VerbNoun> pairs = fixed_head;
  pairs.insert(pairs.end(), fill.begin(), fill.end());
  pairs.push_back(fixed_tail);

  std::vector<std::string> verbs, nouns;
  for (int v = 0; v < kVerbs; ++v) verbs.push_back("verb" + std::to_string(v));
  for (int n = 0; n < kNouns; ++n) nouns.push_back("noun" + std::to_string(n));
  verbs[4] = "attach";
  verbs[26] = "prep";
  verbs[33] = "take";
  nouns[36] = "syringe";
  nouns[28] = "site";
  nouns[0] = "ambubag";
  std::vector<std::string> actions;
  for (const auto& p : pairs) actions.push_back(verbs[p.verb] + " " + nouns[p.noun]);
  actions[2] = "take kelly";
  return ActionDictionary::build(pairs, LabelSpace(verbs), LabelSpace(nouns), actions);
}

/// Smooth colour gradients plus per-frame noise, so every frame and every
/// position is distinguishable.
inline FrameSequence random_video(nn::Rng& rng, int frames, int height, int width, const std::string& id = "v") {
  FrameSequence seq;
  seq.video_id = id;
  const double phase = nn::uniform01(rng) * 6.0;
  for (int f = 0; f < frames; ++f) {
    Image img(3, height, width);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
          img.at(c, y, x) = static_cast<float>(
              0.5 + 0.2 * std::sin(phase + 0.013 * (c + 1) * x + 0.007 * y + 0.3 * f) + 0.1 * (nn::uniform01(rng) - 0.5));
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

/// Channel 0 holds the row, channel 1 the column, channel 2 the frame index.
inline FrameSequence coordinate_video(int frames, int height, int width) {
  FrameSequence seq;
  seq.video_id = "coords";
  for (int f = 0; f < frames; ++f) {
    Image img(3, height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        img.at(0, y, x) = static_cast<float>(y);
        img.at(1, y, x) = static_cast<float>(x);
        img.at(2, y, x) = static_cast<float>(f);
      }
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

/// Central-difference derivative of `loss` w.r.t. one entry of `p`.
inline double numeric_grad(ag::Parameter& p, Eigen::Index index, const std::function<double()>& loss, double h = 1e-4) {
  const double saved = p.value.data()[index];
  p.value.data()[index] = saved + h;
  const double up = loss();
  p.value.data()[index] = saved - h;
  const double down = loss();
  p.value.data()[index] = saved;
  return (up - down) / (2.0 * h);
}

/// |a − n| / max(|a|, |n|), with an absolute floor for derivatives that are
/// numerically zero on both sides.
inline double relative_error(double analytic, double numeric, double abs_floor = 1e-8) {
  const double diff = std::abs(analytic - numeric);
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < abs_floor) return 0.0;
  return diff / scale;
}

}  // namespace t3kit::testing
