// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/frame_pipeline.hpp"
#include "t3kit/harness/checkpoint.hpp"
#include "t3kit/harness/config.hpp"
#include "t3kit/harness/synthetic.hpp"
#include "t3kit/metrics.hpp"
#include "t3kit/moma.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace t3kit::harness {

/// Mixes run seed, step and slot into an independent stream seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct RecognitionData {
  ActionDictionary dict;
  std::vector<ClipLabel> clips;
  std::map<std::string, FrameSequence> videos;
};

inline RecognitionData load_recognition_data(const std::filesystem::path& root) {
  RecognitionData d;
  d.dict = load_dictionary_csv((root / "dictionary.csv").string());
  d.clips = read_labels_csv(root / "labels.csv");
  for (const auto& c : d.clips) {
    if (c.target.verb < 0 || c.target.verb >= d.dict.num_verbs() || c.target.noun < 0 ||
        c.target.noun >= d.dict.num_nouns())
      throw std::runtime_error("labels.csv: clip " + c.video_id + " has labels outside the dictionary");
    if (!d.videos.count(c.video_id)) d.videos.emplace(c.video_id, load_frame_sequence(root / "videos" / c.video_id));
  }
  return d;
}

/// One training or evaluation example: the frames of one clip and the label
/// it is supervised with.
struct Sample {
  const FrameSequence* frames = nullptr;
  ActionTarget target;
};

/// Recognition pairs (F_i, y_i); anticipation pairs (F_i, y_{i+1}) within a
/// stream, so the final clip of every stream has no sample.
inline std::vector<Sample> make_samples(const RecognitionData& d, Task task, const std::string& split) {
  std::map<int, std::vector<const ClipLabel*>> streams;
  for (const auto& c : d.clips)
    if (c.split == split) streams[c.stream].push_back(&c);
  std::vector<Sample> out;
  for (auto& [id, clips] : streams) {
    std::sort(clips.begin(), clips.end(), [](const ClipLabel* a, const ClipLabel* b) { return a->position < b->position; });
    std::vector<ActionTarget> labels;
    for (const ClipLabel* c : clips) labels.push_back(c->target);
    const std::vector<ActionTarget> targets =
        task == Task::kAnticipation ? anticipation_targets<ActionTarget>(labels) : labels;
    for (std::size_t i = 0; i < targets.size(); ++i) out.push_back({&d.videos.at(clips[i]->video_id), targets[i]});
  }
  return out;
}

/// The models behind one run: one MomaModel for adg or multi, two (verb and
/// noun) for single, each with its own queue and optimizer.
class RecognitionSystem {
 public:
  RecognitionSystem(const RunConfig& cfg, const ActionDictionary& dict) : cfg_(cfg), dict_(dict) {
    nn::Rng rng(derive_seed(cfg.seed, 0xA11));
    std::vector<std::pair<std::string, HeadMode>> parts;
    switch (cfg.head) {
      case SystemHead::kAdg: parts = {{"adg", HeadMode::kAdg}}; break;
      case SystemHead::kMulti: parts = {{"multi", HeadMode::kMulti}}; break;
      case SystemHead::kSingle: parts = {{"verb", HeadMode::kSingleVerb}, {"noun", HeadMode::kSingleNoun}}; break;
    }
    for (const auto& [name, mode] : parts) {
      Part p;
      p.head = HeadConfig::from_dictionary(mode, cfg.embed_dim(), dict);
      p.model = std::make_unique<moma::MomaModel>(name, cfg.encoder, p.head, cfg.moma, rng);
      p.queue = moma::NegativeQueue(cfg.moma.queue_length, cfg.embed_dim());
      p.opt = optim::Adam(p.model->trainable_parameters(), cfg.adam());
      parts_.push_back(std::move(p));
    }
  }

  /// Initializes every teacher (and the student copy) from the student
  /// encoder stored in an earlier checkpoint.
  void load_teacher(const Checkpoint& ck) {
    for (Part& p : parts_) {
      const std::string prefix = p.model->head().parameters().front()->name;
      const std::string model = prefix.substr(0, prefix.find('.'));
      nn::ParameterList teacher = p.model->teacher().parameters();
      nn::ParameterList student = p.model->student().parameters();
      for (std::size_t i = 0; i < teacher.size(); ++i) {
        std::string src = student[i]->name;
        // Accept a checkpoint trained under a different head name.
        const std::string suffix = src.substr(src.find(".student.encoder"));
        const ag::Matrix* found = nullptr;
        for (const auto& [name, m] : ck.params)
          if (name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0 &&
              (found == nullptr || name.rfind(model + ".", 0) == 0))
            found = &m;
        if (found == nullptr || found->rows() != teacher[i]->value.rows() || found->cols() != teacher[i]->value.cols())
          throw std::runtime_error("teacher checkpoint lacks a compatible " + suffix + " tensor");
        teacher[i]->value = *found;
        student[i]->value = *found;
      }
    }
  }

  moma::DistillLossReport train_step(std::span<const Image> images, std::span<const ActionTarget> targets) {
    moma::DistillLossReport sum;
    sum.alpha = cfg_.moma.alpha;
    sum.beta = cfg_.moma.beta;
    for (Part& p : parts_) {
      const auto r = moma::train_step(*p.model, images, targets, p.queue, p.opt, cfg_.moma);
      sum.ce_loss += r.ce_loss;
      sum.infonce_loss += r.infonce_loss;
      sum.total_loss += r.total_loss;
    }
    return sum;
  }

  /// Per part, one probability vector per image.
  std::vector<std::vector<std::vector<double>>> probabilities(std::span<const Image> images) {
    std::vector<std::vector<std::vector<double>>> out;
    for (Part& p : parts_) {
      const ag::Matrix logits = p.model->logits(images);
      std::vector<std::vector<double>> rows;
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const std::vector<double> row(logits.row(r).data(), logits.row(r).data() + logits.cols());
        rows.push_back(head_probabilities(p.head, row));
      }
      out.push_back(std::move(rows));
    }
    return out;
  }

  /// Argmax of mean probabilities per part; single-task parts are merged.
  ActionPrediction decode_aggregated(const std::vector<std::vector<std::vector<double>>>& per_part_sets) const {
    std::vector<ActionPrediction> preds;
    for (std::size_t i = 0; i < parts_.size(); ++i)
      preds.push_back(decode(parts_[i].head, metrics::aggregate(per_part_sets[i]), dict_));
    return preds.size() == 1 ? preds.front() : merge_single_task(preds[0], preds[1], dict_);
  }

  nn::ParameterList all_parameters() {
    nn::ParameterList out;
    for (Part& p : parts_) {
      nn::append(out, p.model->teacher_parameters());
      nn::append(out, p.model->trainable_parameters());
    }
    return out;
  }

  nn::ParameterList teacher_parameters() {
    nn::ParameterList out;
    for (Part& p : parts_) nn::append(out, p.model->teacher_parameters());
    return out;
  }

  void save_state(Checkpoint& ck) {
    store_params(ck, all_parameters());
    for (Part& p : parts_) {
      ck.optimizers.push_back(adam_to_json(p.opt));
      ck.queues.push_back(queue_to_json(p.queue));
    }
  }

  void load_state(const Checkpoint& ck) {
    load_params(ck, all_parameters());
    if (ck.optimizers.size() != parts_.size() || ck.queues.size() != parts_.size())
      throw std::runtime_error("checkpoint optimizer/queue count does not match the head mode");
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      adam_from_json(parts_[i].opt, ck.optimizers[i]);
      queue_from_json(parts_[i].queue, ck.queues[i]);
    }
  }

  std::size_t num_parts() const { return parts_.size(); }
  moma::MomaModel& model(std::size_t i) { return *parts_[i].model; }
  const ActionDictionary& dictionary() const { return dict_; }

 private:
  struct Part {
    HeadConfig head;
    std::unique_ptr<moma::MomaModel> model;
    moma::NegativeQueue queue;
    optim::Adam opt;
  };

  RunConfig cfg_;
  ActionDictionary dict_;
  std::vector<Part> parts_;
};

/// Batch for one step: indices drawn without replacement (with replacement
/// when the set is smaller than the batch) from a stream seeded by the step.
inline std::vector<std::size_t> batch_indices(std::size_t n, int batch_size, std::uint64_t seed, int step) {
  nn::Rng rng(derive_seed(seed, 0xBA7C, static_cast<std::uint64_t>(step)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::vector<std::size_t> out;
  const std::size_t b = static_cast<std::size_t>(batch_size);
  if (b <= n) {
    for (std::size_t i = 0; i < b; ++i) {
      std::swap(idx[i], idx[i + rng() % (n - i)]);
      out.push_back(idx[i]);
    }
  } else {
    for (std::size_t i = 0; i < b; ++i) out.push_back(rng() % n);
  }
  return out;
}

/// Builds the stitched train-path images of one step.
inline void make_train_batch(const std::vector<Sample>& samples, const RunConfig& cfg, int step,
                             std::vector<Image>& images, std::vector<ActionTarget>& targets) {
  images.clear();
  targets.clear();
  const auto idx = batch_indices(samples.size(), cfg.optim.batch_size, cfg.seed, step);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const Sample& s = samples[idx[j]];
    images.push_back(make_stitched(*s.frames, cfg.stitch, Mode::kTrain,
                                   derive_seed(cfg.seed, 0x57E9 + static_cast<std::uint64_t>(step), j))
                         .pixels);
    targets.push_back(s.target);
  }
}

/// Test-time prediction for one clip: n replicas per checkpoint, mean of the
/// softmax probabilities over all of them. Each probability set is logged.
inline ActionPrediction predict_clip(const std::vector<RecognitionSystem*>& systems, const FrameSequence& frames,
                                     const StitchConfig& stitch, std::ostream* log) {
  const std::vector<StitchedImage> replicas = test_time_replicas(frames, stitch);
  std::vector<Image> images;
  for (const auto& r : replicas) images.push_back(r.pixels);
  std::vector<std::vector<std::vector<double>>> sets(systems.front()->num_parts());
  for (std::size_t c = 0; c < systems.size(); ++c) {
    const auto probs = systems[c]->probabilities(images);
    for (std::size_t p = 0; p < probs.size(); ++p)
      for (std::size_t r = 0; r < probs[p].size(); ++r) {
        sets[p].push_back(probs[p][r]);
        if (log != nullptr && p == 0)
          *log << "clip=" << frames.video_id << " checkpoint=" << c << " replica=" << r << " probability_set\n";
      }
  }
  return systems.front()->decode_aggregated(sets);
}

}  // namespace t3kit::harness
