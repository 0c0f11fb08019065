// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace t3kit {

/// Planar float image, channels × height × width, values nominally in [0,1].
struct Image {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {
    if (c <= 0 || h <= 0 || w <= 0) throw std::invalid_argument("Image: non-positive dimension");
  }

  std::size_t plane() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  float* ptr(int c, int y, int x) { return &at(c, y, x); }
  const float* ptr(int c, int y, int x) const { return data.data() + (c * plane() + static_cast<std::size_t>(y) * width + x); }
  bool same_shape(const Image& o) const { return channels == o.channels && height == o.height && width == o.width; }

  friend bool operator==(const Image& a, const Image& b) { return a.same_shape(b) && a.data == b.data; }
};

/// Copies the h×w window at (y, x).
inline Image crop(const Image& src, int y, int x, int h, int w) {
  if (y < 0 || x < 0 || y + h > src.height || x + w > src.width) throw std::out_of_range("crop window outside image");
  Image out(src.channels, h, w);
  for (int c = 0; c < src.channels; ++c)
    for (int r = 0; r < h; ++r)
      std::copy_n(src.ptr(c, y + r, x), w, out.ptr(c, r, 0));
  return out;
}

inline cv::Mat to_mat(const Image& img) {
  std::vector<cv::Mat> planes;
  for (int c = 0; c < img.channels; ++c)
    planes.emplace_back(img.height, img.width, CV_32F, const_cast<float*>(img.data.data() + c * img.plane()));
  cv::Mat out;
  cv::merge(planes, out);
  return out;
}

inline Image from_mat(const cv::Mat& m) {
  cv::Mat f;
  if (m.depth() != CV_32F)
    m.convertTo(f, CV_32F);
  else
    f = m;
  Image out(f.channels(), f.rows, f.cols);
  std::vector<cv::Mat> planes;
  cv::split(f, planes);
  for (int c = 0; c < out.channels; ++c) {
    cv::Mat dst(out.height, out.width, CV_32F, out.data.data() + c * out.plane());
    planes[static_cast<std::size_t>(c)].copyTo(dst);
  }
  return out;
}

inline Image resize(const Image& src, int h, int w) {
  if (h == src.height && w == src.width) return src;
  // Plane by plane, straight into the output buffer; no interleaving copies.
  Image out(src.channels, h, w);
  const int interp = h < src.height ? cv::INTER_AREA : cv::INTER_LINEAR;
  for (int c = 0; c < src.channels; ++c) {
    const cv::Mat in(src.height, src.width, CV_32F, const_cast<float*>(src.data.data() + c * src.plane()));
    cv::Mat dst(h, w, CV_32F, out.data.data() + c * out.plane());
    cv::resize(in, dst, dst.size(), 0, 0, interp);
  }
  return out;
}

/// Reflection-pads so that both sides are at least `min_h`×`min_w`.
inline Image pad_to_fit(const Image& src, int min_h, int min_w) {
  const int dh = std::max(0, min_h - src.height);
  const int dw = std::max(0, min_w - src.width);
  if (dh == 0 && dw == 0) return src;
  cv::Mat out;
  cv::copyMakeBorder(to_mat(src), out, dh / 2, dh - dh / 2, dw / 2, dw - dw / 2, cv::BORDER_REFLECT_101);
  return from_mat(out);
}

/// Reads an 8-bit PNG/JPEG into RGB order scaled to [0,1].
inline Image read_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot read image " + path);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  cv::Mat f;
  rgb.convertTo(f, CV_32F, 1.0 / 255.0);
  return from_mat(f);
}

/// Quantizes to 8 bits (round half up, clamped) before encoding.
inline cv::Mat to_u8_bgr(const Image& img) {
  if (img.channels != 3) throw std::invalid_argument("to_u8_bgr: expected a 3-channel image");
  cv::Mat rgb(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        rgb.at<cv::Vec3b>(y, x)[2 - c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  return rgb;
}

inline void write_png(const Image& img, const std::string& path) {
  if (!cv::imwrite(path, to_u8_bgr(img))) throw std::runtime_error("cannot write image " + path);
}

}  // namespace t3kit
