// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/harness/checkpoint.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace t3kit::harness {

namespace plot {

inline constexpr int kWidth = 800;
inline constexpr int kHeight = 480;
inline constexpr int kMargin = 60;

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline void axes(cv::Mat& img, const std::string& title, double y_lo, double y_hi) {
  const cv::Scalar black(0, 0, 0), grey(200, 200, 200);
  for (int i = 0; i <= 4; ++i) {
    const int y = kHeight - kMargin - i * (kHeight - 2 * kMargin) / 4;
    cv::line(img, {kMargin, y}, {kWidth - kMargin, y}, grey, 1);
    cv::putText(img, fmt(y_lo + (y_hi - y_lo) * i / 4.0), {4, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1,
                cv::LINE_AA);
  }
  cv::line(img, {kMargin, kMargin}, {kMargin, kHeight - kMargin}, black, 1);
  cv::line(img, {kMargin, kHeight - kMargin}, {kWidth - kMargin, kHeight - kMargin}, black, 1);
  cv::putText(img, title, {kMargin, kMargin - 20}, cv::FONT_HERSHEY_SIMPLEX, 0.6, black, 1, cv::LINE_AA);
}

}  // namespace plot

/// Line plot of the ce, infonce and total columns against the step.
inline void draw_loss_curve(const std::vector<LossRow>& log, const std::filesystem::path& path) {
  using namespace plot;
  if (log.empty()) throw std::runtime_error("training log is empty; nothing to plot");
  double hi = 0.0;
  for (const auto& r : log) hi = std::max({hi, r.ce, r.infonce, r.total});
  if (!(hi > 0.0) || !std::isfinite(hi)) hi = 1.0;
  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  axes(img, "training loss (ce blue, infonce green, total red)", 0.0, hi);
  const int first = log.front().step, last = std::max(log.back().step, first + 1);
  auto point = [&](int step, double v) {
    const double fx = static_cast<double>(step - first) / (last - first);
    const double fy = std::clamp(v / hi, 0.0, 1.0);
    return cv::Point(kMargin + static_cast<int>(fx * (kWidth - 2 * kMargin)),
                     kHeight - kMargin - static_cast<int>(fy * (kHeight - 2 * kMargin)));
  };
  const std::pair<double LossRow::*, cv::Scalar> series[] = {
      {&LossRow::ce, {200, 80, 0}}, {&LossRow::infonce, {0, 160, 0}}, {&LossRow::total, {0, 0, 220}}};
  for (const auto& [field, colour] : series)
    for (std::size_t i = 1; i < log.size(); ++i)
      cv::line(img, point(log[i - 1].step, log[i - 1].*field), point(log[i].step, log[i].*field), colour, 1,
               cv::LINE_AA);
  cv::putText(img, "step " + std::to_string(first) + " .. " + std::to_string(last), {kWidth / 2 - 60, kHeight - 20},
              cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0}, 1, cv::LINE_AA);
  if (!cv::imwrite(path.string(), img)) throw std::runtime_error("cannot write " + path.string());
}

/// Bar chart of named scores in [0, 1].
inline void draw_accuracy_bars(const std::vector<std::pair<std::string, double>>& bars,
                               const std::filesystem::path& path) {
  using namespace plot;
  if (bars.empty()) throw std::runtime_error("no scores to plot");
  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  axes(img, "evaluation scores", 0.0, 1.0);
  const int slot = (kWidth - 2 * kMargin) / static_cast<int>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = std::clamp(bars[i].second, 0.0, 1.0);
    const int x0 = kMargin + static_cast<int>(i) * slot + slot / 4;
    const int top = kHeight - kMargin - static_cast<int>(v * (kHeight - 2 * kMargin));
    cv::rectangle(img, {x0, top}, {x0 + slot / 2, kHeight - kMargin}, {180, 120, 40}, cv::FILLED);
    cv::putText(img, bars[i].first, {x0, kHeight - kMargin + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0}, 1,
                cv::LINE_AA);
    cv::putText(img, fmt(bars[i].second), {x0, top - 6}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0}, 1, cv::LINE_AA);
  }
  if (!cv::imwrite(path.string(), img)) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace t3kit::harness
