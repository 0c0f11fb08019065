// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/vqa.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace t3kit::vqa {

inline constexpr int kFrameBlock = 15;

/// Training frames: the last frame of every 15-frame block (14, 29, …), plus
/// the final frame of a trailing partial block.
inline std::vector<int> subsample_frames(int num_frames, int block = kFrameBlock) {
  if (num_frames < 0) throw std::invalid_argument("negative frame count");
  std::vector<int> out;
  for (int start = 0; start < num_frames; start += block) out.push_back(std::min(start + block, num_frames) - 1);
  return out;
}

struct FrameBlock {
  int representative = 0;
  int first = 0;
  int last = 0;  // inclusive
};

/// Splits [0, N) into consecutive 15-frame blocks represented by their last frame.
inline std::vector<FrameBlock> inference_partition(int num_frames, int block = kFrameBlock) {
  if (num_frames < 1) throw std::invalid_argument("video must have at least one frame");
  std::vector<FrameBlock> out;
  for (int start = 0; start < num_frames; start += block) {
    const int last = std::min(start + block, num_frames) - 1;
    out.push_back({last, start, last});
  }
  return out;
}

/// Binary per-video feature file, little-endian:
///   uint32 frame_count; uint32 objects[frame_count];
///   then for each frame objects×feature_dim float32, row-major.
inline void write_feature_file(const std::string& path, const std::vector<Matrix>& frames, int feature_dim) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write feature file " + path);
  auto put_u32 = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(static_cast<std::uint32_t>(frames.size()));
  for (const Matrix& f : frames) {
    if (f.cols() != feature_dim) throw std::invalid_argument("feature row width differs from feature_dim");
    put_u32(static_cast<std::uint32_t>(f.rows()));
  }
  for (const Matrix& f : frames)
    for (Eigen::Index r = 0; r < f.rows(); ++r)
      for (Eigen::Index c = 0; c < f.cols(); ++c) {
        const float v = static_cast<float>(f(r, c));
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(bits);
      }
  if (!out) throw std::runtime_error("error writing feature file " + path);
}

inline std::vector<ObjectFeatureSet> read_feature_file(const std::string& path, int feature_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature file " + path);
  auto get_u32 = [&]() {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated feature file " + path);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  };
  const std::uint32_t frames = get_u32();
  std::vector<std::uint32_t> counts(frames);
  for (auto& c : counts) c = get_u32();
  std::vector<ObjectFeatureSet> out;
  out.reserve(frames);
  for (std::uint32_t f = 0; f < frames; ++f) {
    Matrix m(counts[f], feature_dim);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const std::uint32_t bits = get_u32();
      float v;
      std::memcpy(&v, &bits, 4);
      m.data()[i] = v;
    }
    out.push_back(ObjectFeatureSet::dense(std::move(m), static_cast<int>(f)));
  }
  return out;
}

struct QaAnnotation {
  std::string video_id;
  int frame_idx = 0;
  std::string question;
  std::string answer;
};

inline std::vector<QaAnnotation> read_qa_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open QA annotations " + path);
  std::vector<QaAnnotation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("video_id").get<std::string>(), j.at("frame_idx").get<int>(),
                     j.at("question").get<std::string>(), j.at("answer").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_qa_jsonl(const std::string& path, const std::vector<QaAnnotation>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : rows)
    out << nlohmann::json{{"video_id", r.video_id}, {"frame_idx", r.frame_idx}, {"question", r.question}, {"answer", r.answer}}
               .dump()
        << '\n';
}

struct AnswerRecord {
  std::string video_id;
  int frame_idx = 0;
  int question_id = 0;
  std::string answer_text;
};

inline void write_predictions_jsonl(std::ostream& out, const std::vector<AnswerRecord>& rows) {
  for (const auto& r : rows)
    out << nlohmann::json{{"video_id", r.video_id}, {"frame_idx", r.frame_idx}, {"question_id", r.question_id},
                          {"answer_text", r.answer_text}}
               .dump()
        << '\n';
}

/// Questions of one video grouped by frame, in file order.
using FrameQuestions = std::map<int, std::vector<QaAnnotation>>;

inline std::map<std::string, FrameQuestions> group_by_video(const std::vector<QaAnnotation>& rows) {
  std::map<std::string, FrameQuestions> out;
  for (const auto& r : rows) out[r.video_id][r.frame_idx].push_back(r);
  return out;
}

}  // namespace t3kit::vqa
