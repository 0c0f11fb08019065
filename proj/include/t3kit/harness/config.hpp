// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/frame_pipeline.hpp"
#include "t3kit/moma.hpp"
#include "t3kit/optim.hpp"
#include "t3kit/vqa.hpp"

#include <toml.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace t3kit::harness {

/// Raised for anything wrong with the configuration itself; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task { kRecognition, kAnticipation, kVqa };

/// `single` trains two independent single-task models (verb and noun).
enum class SystemHead { kSingle, kMulti, kAdg };

inline const char* to_string(Task t) {
  switch (t) {
    case Task::kRecognition: return "recognition";
    case Task::kAnticipation: return "anticipation";
    case Task::kVqa: return "vqa";
  }
  return "?";
}

inline const char* to_string(SystemHead h) {
  switch (h) {
    case SystemHead::kSingle: return "single";
    case SystemHead::kMulti: return "multi";
    case SystemHead::kAdg: return "adg";
  }
  return "?";
}

struct DataConfig {
  std::filesystem::path root = "data";
  std::string eval_split = "train";
  double val_fraction = 0.0;
  // Synthetic recognition videos.
  int num_verbs = 4;
  int num_nouns = 3;
  int num_actions = 8;
  int videos_per_class = 10;
  int frames_per_video = 24;
  int frame_height = 1280;
  int frame_width = 1280;
  int stream_length = 4;
  // Synthetic VQA videos.
  int vqa_videos = 8;
  int vqa_frames = 60;
  int vqa_answers = 16;
  int min_objects = 3;
  int max_objects = 8;
};

struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int steps = 500;
  int batch_size = 8;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  int log_every = 1;
};

struct RunConfig {
  Task task = Task::kRecognition;
  SystemHead head = SystemHead::kAdg;
  std::uint64_t seed = 0;

  StitchConfig stitch;
  moma::EncoderConfig encoder;
  moma::MomaConfig moma;
  std::filesystem::path teacher_checkpoint;
  vqa::MCANConfig mcan;

  DataConfig data;
  OptimConfig optim;

  std::filesystem::path source;  // the file this config was read from

  optim::AdamConfig adam() const { return {optim.lr, optim.beta1, optim.beta2, optim.eps}; }
  int embed_dim() const { return encoder.embed_dim(); }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    try {
      stitch.validate();
    } catch (const std::invalid_argument& e) {
      fail(std::string("[model] ") + e.what());
    }
    if (encoder.channels.empty()) fail("[model] encoder_channels must not be empty");
    for (int c : encoder.channels)
      if (c <= 0) fail("[model] encoder_channels entries must be positive");
    if (encoder.kernel <= 0 || encoder.kernel % 2 == 0) fail("[model] encoder_kernel must be a positive odd number");
    if (encoder.stride <= 0) fail("[model] encoder_stride must be positive");
    if (!(moma.tau > 0.0)) fail("[model] tau must be positive");
    if (moma.alpha < 0.0 || moma.beta < 0.0) fail("[model] alpha and beta must be non-negative");
    if (moma.queue_length <= 0) fail("[model] queue_length must be positive");
    if (moma.attention_heads <= 0 || embed_dim() % moma.attention_heads != 0)
      fail("[model] attention_heads must divide the embedding width " + std::to_string(embed_dim()));
    vqa::MCANConfig m = mcan;
    m.num_answers = std::max(2, data.vqa_answers);
    try {
      m.validate();
    } catch (const std::invalid_argument& e) {
      fail(std::string("[model] ") + e.what());
    }
    if (data.num_verbs < 1 || data.num_nouns < 1) fail("[data] num_verbs and num_nouns must be >= 1");
    if (data.num_actions < 1 || data.num_actions > data.num_verbs * data.num_nouns)
      fail("[data] num_actions must lie in [1, num_verbs * num_nouns]");
    if (data.num_actions < std::max(data.num_verbs, data.num_nouns))
      fail("[data] num_actions must be large enough to use every verb and noun");
    if (data.videos_per_class < 1 || data.frames_per_video < 1) fail("[data] video counts must be positive");
    if (data.frame_height < 8 || data.frame_width < 8) fail("[data] frames must be at least 8x8");
    if (data.stream_length < 1) fail("[data] stream_length must be >= 1");
    if (data.val_fraction < 0.0 || data.val_fraction >= 1.0) fail("[data] val_fraction must lie in [0, 1)");
    if (data.eval_split != "train" && data.eval_split != "val") fail("[data] eval_split must be 'train' or 'val'");
    if (data.vqa_videos < 1 || data.vqa_frames < 1) fail("[data] vqa video counts must be positive");
    if (data.vqa_answers < 4 || data.vqa_answers % 2 != 0) fail("[data] vqa_answers must be an even number >= 4");
    if (data.min_objects < 2 || data.max_objects < data.min_objects)
      fail("[data] need 2 <= min_objects <= max_objects");
    if (data.max_objects > mcan.max_objects) fail("[data] max_objects exceeds [model] mcan_max_objects");
    if (!(optim.lr > 0.0)) fail("[optim] lr must be positive");
    if (optim.beta1 < 0.0 || optim.beta1 >= 1.0 || optim.beta2 < 0.0 || optim.beta2 >= 1.0)
      fail("[optim] beta1 and beta2 must lie in [0, 1)");
    if (!(optim.eps > 0.0)) fail("[optim] eps must be positive");
    if (optim.steps < 0) fail("[optim] steps must be >= 0");
    if (optim.batch_size < 1) fail("[optim] batch_size must be >= 1");
    if (optim.checkpoint_every < 0 || optim.log_every < 1) fail("[optim] checkpoint_every >= 0 and log_every >= 1");
  }
};

namespace detail {

class TableReader {
 public:
  TableReader(const toml::table& root, const std::string& section) : section_(section) {
    if (const toml::node* n = root.get(section)) {
      table_ = n->as_table();
      if (table_ == nullptr) throw ConfigError("[" + section + "] must be a table");
    }
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (table_ == nullptr) return;
    const toml::node* n = table_->get(key);
    if (n == nullptr) return;
    if constexpr (std::is_same_v<T, bool>) {
      out = require(n->value<bool>(), key, "a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      const auto v = require(n->value_exact<std::int64_t>(), key, "an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v < 0) throw ConfigError(where(key) + " must be non-negative");
      }
      out = static_cast<T>(v);
    } else if constexpr (std::is_floating_point_v<T>) {
      out = static_cast<T>(require(n->value<double>(), key, "a number"));
    } else if constexpr (std::is_same_v<T, std::string>) {
      out = require(n->value<std::string>(), key, "a string");
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      const toml::array* arr = n->as_array();
      if (arr == nullptr) throw ConfigError(where(key) + " must be an array of integers");
      out.clear();
      for (const auto& e : *arr) out.push_back(static_cast<int>(require(e.value_exact<std::int64_t>(), key, "integers")));
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      const toml::array* arr = n->as_array();
      if (arr == nullptr) throw ConfigError(where(key) + " must be an array of strings");
      out.clear();
      for (const auto& e : *arr) out.push_back(require(e.value<std::string>(), key, "strings"));
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  /// Unknown keys are almost always typos; reject them.
  void finish() const {
    if (table_ == nullptr) return;
    for (const auto& [k, v] : *table_)
      if (!seen_.count(std::string(k.str()))) throw ConfigError("unknown key " + where(std::string(k.str())));
  }

 private:
  template <typename V>
  V require(std::optional<V> v, const std::string& key, const char* what) const {
    if (!v) throw ConfigError(where(key) + " must be " + what);
    return *v;
  }
  std::string where(const std::string& key) const { return "[" + section_ + "] " + key; }

  std::string section_;
  const toml::table* table_ = nullptr;
  std::set<std::string> seen_;
};

inline Task parse_task(const std::string& s) {
  if (s == "recognition") return Task::kRecognition;
  if (s == "anticipation") return Task::kAnticipation;
  if (s == "vqa") return Task::kVqa;
  throw ConfigError("[task] name must be recognition, anticipation or vqa (got '" + s + "')");
}

inline SystemHead parse_head(const std::string& s) {
  if (s == "single") return SystemHead::kSingle;
  if (s == "multi") return SystemHead::kMulti;
  if (s == "adg") return SystemHead::kAdg;
  throw ConfigError("[task] head must be single, multi or adg (got '" + s + "')");
}

}  // namespace detail

/// Parses TOML text; relative paths resolve against `base_dir`.
inline RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = ".") {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config parse error: " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(os.str());
  }
  for (const auto& [k, v] : root) {
    const std::string key(k.str());
    if (key != "task" && key != "model" && key != "data" && key != "optim")
      throw ConfigError("unknown config section [" + key + "]");
  }

  RunConfig c;
  {
    detail::TableReader t(root, "task");
    std::string name = to_string(c.task), head = to_string(c.head);
    t.read("name", name);
    t.read("head", head);
    t.read("seed", c.seed);
    t.finish();
    c.task = detail::parse_task(name);
    c.head = detail::parse_head(head);
  }
  {
    detail::TableReader m(root, "model");
    m.read("num_selected", c.stitch.num_selected);
    m.read("crop", c.stitch.crop);
    m.read("resize", c.stitch.resize);
    m.read("test_scale", c.stitch.test_scale);
    m.read("test_replicas", c.stitch.test_replicas);
    m.read("stratified", c.stitch.stratified);
    std::vector<std::string> ops;
    for (AugmentOp op : c.stitch.policy.ops) ops.emplace_back(to_string(op));
    m.read("augment_ops", ops);
    m.read("augment_num_ops", c.stitch.policy.num_ops);
    m.read("augment_magnitude", c.stitch.policy.magnitude);
    m.read("max_rotation_deg", c.stitch.policy.max_rotation_deg);
    m.read("max_translation", c.stitch.policy.max_translation);
    m.read("max_brightness", c.stitch.policy.max_brightness);
    m.read("max_contrast", c.stitch.policy.max_contrast);
    m.read("encoder_channels", c.encoder.channels);
    m.read("encoder_kernel", c.encoder.kernel);
    m.read("encoder_stride", c.encoder.stride);
    m.read("tau", c.moma.tau);
    m.read("alpha", c.moma.alpha);
    m.read("beta", c.moma.beta);
    m.read("queue_length", c.moma.queue_length);
    m.read("attention_heads", c.moma.attention_heads);
    std::string teacher;
    m.read("teacher_checkpoint", teacher);
    m.read("mcan_dim", c.mcan.dim);
    m.read("mcan_layers", c.mcan.layers);
    m.read("mcan_heads", c.mcan.heads);
    m.read("fqca", c.mcan.fqca);
    m.read("feature_dim", c.mcan.feature_dim);
    m.read("word_dim", c.mcan.word_dim);
    m.read("ffn_mult", c.mcan.ffn_mult);
    m.read("pool_hidden", c.mcan.pool_hidden);
    m.read("mcan_max_objects", c.mcan.max_objects);
    m.finish();
    c.stitch.policy.ops.clear();
    try {
      for (const auto& s : ops) c.stitch.policy.ops.push_back(parse_augment_op(s));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("[model] augment_ops: ") + e.what());
    }
    if (!teacher.empty()) c.teacher_checkpoint = base_dir / teacher;
  }
  {
    detail::TableReader d(root, "data");
    std::string data_root = c.data.root.string();
    d.read("root", data_root);
    d.read("eval_split", c.data.eval_split);
    d.read("val_fraction", c.data.val_fraction);
    d.read("num_verbs", c.data.num_verbs);
    d.read("num_nouns", c.data.num_nouns);
    d.read("num_actions", c.data.num_actions);
    d.read("videos_per_class", c.data.videos_per_class);
    d.read("frames_per_video", c.data.frames_per_video);
    d.read("frame_height", c.data.frame_height);
    d.read("frame_width", c.data.frame_width);
    d.read("stream_length", c.data.stream_length);
    d.read("vqa_videos", c.data.vqa_videos);
    d.read("vqa_frames", c.data.vqa_frames);
    d.read("vqa_answers", c.data.vqa_answers);
    d.read("min_objects", c.data.min_objects);
    d.read("max_objects", c.data.max_objects);
    d.finish();
    c.data.root = base_dir / data_root;
  }
  {
    detail::TableReader o(root, "optim");
    o.read("lr", c.optim.lr);
    o.read("beta1", c.optim.beta1);
    o.read("beta2", c.optim.beta2);
    o.read("eps", c.optim.eps);
    o.read("steps", c.optim.steps);
    o.read("batch_size", c.optim.batch_size);
    o.read("checkpoint_every", c.optim.checkpoint_every);
    o.read("log_every", c.optim.log_every);
    o.finish();
  }
  c.stitch.seed = c.seed;
  c.mcan.num_answers = c.data.vqa_answers;
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse_config(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  c.source = path;
  return c;
}

/// Applies a --seed override consistently.
inline void set_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.stitch.seed = seed;
}

/// FNV-1a over every field that shapes the model or its inputs. Seeds,
/// optimizer settings and paths are excluded so a checkpoint can be evaluated
/// under a different run setup.
inline std::uint64_t config_hash(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "task=" << to_string(c.task) << ";head=" << to_string(c.head) << ";";
  os << "stitch=" << c.stitch.num_selected << "," << c.stitch.crop << "," << c.stitch.resize << ","
     << c.stitch.test_scale << ";";
  os << "encoder=";
  for (int ch : c.encoder.channels) os << ch << ",";
  os << c.encoder.kernel << "," << c.encoder.stride << ";";
  os << "moma=" << c.moma.attention_heads << "," << c.moma.queue_length << ";";
  if (c.task == Task::kVqa) {
    const auto& m = c.mcan;
    os << "mcan=" << m.dim << "," << m.layers << "," << m.heads << "," << m.num_answers << "," << m.fqca << ","
       << m.feature_dim << "," << m.word_dim << "," << m.ffn_mult << "," << m.pool_hidden << "," << m.max_objects << ";";
  } else {
    os << "labels=" << c.data.num_verbs << "," << c.data.num_nouns << "," << c.data.num_actions << ";";
  }
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : os.str()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace t3kit::harness
