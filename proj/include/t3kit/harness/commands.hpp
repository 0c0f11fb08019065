// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/harness/checkpoint.hpp"
#include "t3kit/harness/config.hpp"
#include "t3kit/harness/recognition.hpp"
#include "t3kit/harness/report.hpp"
#include "t3kit/harness/synthetic.hpp"
#include "t3kit/harness/vqa_runner.hpp"
#include "t3kit/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace t3kit::harness {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct CommandOptions {
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::vector<fs::path> checkpoints;
  std::optional<fs::path> out;
  std::ostream* console = &std::cerr;
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"generate", "train", "eval", "predict", "report"};
  return names;
}

namespace detail {

inline fs::path out_dir(const CommandOptions& o) { return o.out.value_or(fs::path("runs")); }

inline void require_data_root(const RunConfig& cfg) {
  if (!fs::is_directory(cfg.data.root))
    throw ConfigError("[data] root " + cfg.data.root.string() + " does not exist (run `t3kit generate` first)");
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_train_log(const std::vector<LossRow>& log, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,ce,infonce,total\n";
  for (const auto& r : log) out << r.step << ',' << fmt17(r.ce) << ',' << fmt17(r.infonce) << ',' << fmt17(r.total) << '\n';
}

inline std::vector<LossRow> read_train_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const csv::Table t = csv::read(in, path.string());
  std::vector<LossRow> out;
  for (const auto& r : t.rows) out.push_back({std::stoi(r.at(0)), std::stod(r.at(1)), std::stod(r.at(2)), std::stod(r.at(3))});
  return out;
}

inline Checkpoint base_checkpoint(const RunConfig& cfg, int step, const std::vector<LossRow>& log) {
  Checkpoint ck;
  ck.config_hash = hash_hex(config_hash(cfg));
  ck.task = to_string(cfg.task);
  ck.head = to_string(cfg.head);
  ck.step = step;
  ck.log = log;
  return ck;
}

inline std::vector<fs::path> checkpoint_paths(const CommandOptions& o) {
  if (!o.checkpoints.empty()) return o.checkpoints;
  return {out_dir(o) / "checkpoint.cbor"};
}

inline void check_dictionary(const RunConfig& cfg, const ActionDictionary& d) {
  if (d.num_verbs() != cfg.data.num_verbs || d.num_nouns() != cfg.data.num_nouns ||
      d.num_actions() != cfg.data.num_actions)
    throw std::runtime_error("dataset dictionary has " + std::to_string(d.num_verbs()) + " verbs, " +
                             std::to_string(d.num_nouns()) + " nouns, " + std::to_string(d.num_actions()) +
                             " actions; the config declares " + std::to_string(cfg.data.num_verbs) + "/" +
                             std::to_string(cfg.data.num_nouns) + "/" + std::to_string(cfg.data.num_actions));
}

/// Shared training loop: `step_fn(step)` returns one log row.
template <typename StepFn, typename SaveFn>
void training_loop(const RunConfig& cfg, int start, std::vector<LossRow>& log, const fs::path& out, std::ostream& con,
                   StepFn step_fn, SaveFn save_fn) {
  for (int step = start; step < cfg.optim.steps; ++step) {
    log.push_back(step_fn(step));
    const LossRow& r = log.back();
    if ((step + 1) % cfg.optim.log_every == 0 || step + 1 == cfg.optim.steps)
      con << "step " << step << " ce " << r.ce << " infonce " << r.infonce << " total " << r.total << '\n';
    if (cfg.optim.checkpoint_every > 0 && (step + 1) % cfg.optim.checkpoint_every == 0)
      save_fn(step + 1, out / ("checkpoint_step" + std::to_string(step + 1) + ".cbor"));
  }
  save_fn(std::max(start, cfg.optim.steps), out / "checkpoint.cbor");
  write_train_log(log, out / "train_log.csv");
}

inline void train_recognition(const RunConfig& cfg, const CommandOptions& o) {
  const fs::path out = out_dir(o);
  std::ostream& con = *o.console;
  const RecognitionData data = load_recognition_data(cfg.data.root);
  check_dictionary(cfg, data.dict);
  const std::vector<Sample> samples = make_samples(data, cfg.task, "train");
  if (samples.empty()) throw std::runtime_error("no training samples in split 'train'");
  RecognitionSystem sys(cfg, data.dict);
  int start = 0;
  std::vector<LossRow> log;
  if (!o.checkpoints.empty()) {
    const Checkpoint ck = read_checkpoint(o.checkpoints.front());
    require_hash(ck, config_hash(cfg), o.checkpoints.front());
    sys.load_state(ck);
    start = ck.step;
    log = ck.log;
    con << "resumed from " << o.checkpoints.front().string() << " at step " << start << '\n';
  } else if (!cfg.teacher_checkpoint.empty()) {
    sys.load_teacher(read_checkpoint(cfg.teacher_checkpoint));
  }
  std::vector<Image> images;
  std::vector<ActionTarget> targets;
  training_loop(
      cfg, start, log, out, con,
      [&](int step) {
        make_train_batch(samples, cfg, step, images, targets);
        const auto r = sys.train_step(images, targets);
        return LossRow{step, r.ce_loss, r.infonce_loss, r.total_loss};
      },
      [&](int step, const fs::path& path) {
        Checkpoint ck = base_checkpoint(cfg, step, log);
        sys.save_state(ck);
        write_checkpoint(ck, path);
      });
}

inline void train_vqa(const RunConfig& cfg, const CommandOptions& o) {
  const fs::path out = out_dir(o);
  std::ostream& con = *o.console;
  const VqaData data = load_vqa_data(cfg.data.root, cfg.mcan.feature_dim);
  std::vector<const vqa::QaAnnotation*> train;
  for (const auto& q : data.qa)
    if (data.split.at(q.video_id) == "train") train.push_back(&q);
  if (train.empty()) throw std::runtime_error("no training questions in split 'train'");

  std::optional<Checkpoint> resume;
  if (!o.checkpoints.empty()) {
    resume = read_checkpoint(o.checkpoints.front());
    require_hash(*resume, config_hash(cfg), o.checkpoints.front());
  }
  const std::vector<std::string> words = resume ? resume->extra.at("vocabulary").get<std::vector<std::string>>()
                                                : vocabulary_words(build_vocabulary(data.qa));
  VqaSystem sys(cfg, words, data.answers);
  int start = 0;
  std::vector<LossRow> log;
  if (resume) {
    sys.load_state(*resume);
    start = resume->step;
    log = resume->log;
    con << "resumed from " << o.checkpoints.front().string() << " at step " << start << '\n';
  }
  training_loop(
      cfg, start, log, out, con,
      [&](int step) {
        std::vector<const vqa::ObjectFeatureSet*> objects;
        std::vector<std::vector<int>> tokens;
        std::vector<int> answers;
        for (std::size_t i : batch_indices(train.size(), cfg.optim.batch_size, cfg.seed, step)) {
          const vqa::QaAnnotation& q = *train[i];
          objects.push_back(&data.features.at(q.video_id).at(static_cast<std::size_t>(q.frame_idx)));
          tokens.push_back(sys.encode(q.question));
          answers.push_back(sys.answer_id(q.answer));
        }
        const double loss = sys.train_step(objects, tokens, answers);
        return LossRow{step, loss, 0.0, loss};
      },
      [&](int step, const fs::path& path) {
        Checkpoint ck = base_checkpoint(cfg, step, log);
        sys.save_state(ck);
        write_checkpoint(ck, path);
      });
}

/// Loaded checkpoints for evaluation, all hash-checked against the config.
template <typename System>
struct LoadedSystems {
  std::vector<std::unique_ptr<System>> owned;
  std::vector<System*> view() const {
    std::vector<System*> v;
    for (const auto& s : owned) v.push_back(s.get());
    return v;
  }
};

inline LoadedSystems<RecognitionSystem> load_recognition_systems(const RunConfig& cfg, const CommandOptions& o,
                                                                 const ActionDictionary& dict) {
  LoadedSystems<RecognitionSystem> out;
  for (const fs::path& p : checkpoint_paths(o)) {
    const Checkpoint ck = read_checkpoint(p);
    require_hash(ck, config_hash(cfg), p);
    out.owned.push_back(std::make_unique<RecognitionSystem>(cfg, dict));
    out.owned.back()->load_state(ck);
  }
  return out;
}

inline LoadedSystems<VqaSystem> load_vqa_systems(const RunConfig& cfg, const CommandOptions& o,
                                                 const std::vector<std::string>& answers) {
  LoadedSystems<VqaSystem> out;
  for (const fs::path& p : checkpoint_paths(o)) {
    const Checkpoint ck = read_checkpoint(p);
    require_hash(ck, config_hash(cfg), p);
    if (ck.extra.at("answers").get<std::vector<std::string>>() != answers)
      throw std::runtime_error("checkpoint " + p.string() + " was trained on a different answer list");
    out.owned.push_back(std::make_unique<VqaSystem>(cfg, ck.extra.at("vocabulary").get<std::vector<std::string>>(), answers));
    out.owned.back()->load_state(ck);
  }
  return out;
}

inline json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline void write_metrics(const json& m, const fs::path& out) {
  {
    std::ofstream f(out / "metrics.json");
    if (!f) throw std::runtime_error("cannot write " + (out / "metrics.json").string());
    f << m.dump(2) << '\n';
  }
  std::ofstream t(out / "metrics.txt");
  if (!t) throw std::runtime_error("cannot write " + (out / "metrics.txt").string());
  t << "metric        value\n";
  for (const char* k : {"acc_action", "acc_verb", "acc_noun", "accuracy", "b1", "b4"}) {
    if (!m.contains(k)) continue;
    char buf[64];
    if (m[k].is_null())
      std::snprintf(buf, sizeof buf, "%-12s  n/a\n", k);
    else
      std::snprintf(buf, sizeof buf, "%-12s  %.2f\n", k, 100.0 * m[k].get<double>());
    t << buf;
  }
  t << "split         " << m.value("split", "") << "\nexamples      " << m.value("examples", 0) << '\n';
}

inline json eval_recognition(const RunConfig& cfg, const CommandOptions& o) {
  const RecognitionData data = load_recognition_data(cfg.data.root);
  check_dictionary(cfg, data.dict);
  const std::vector<Sample> samples = make_samples(data, cfg.task, cfg.data.eval_split);
  if (samples.empty()) throw std::runtime_error("no samples in split '" + cfg.data.eval_split + "'");
  auto systems = load_recognition_systems(cfg, o, data.dict);
  std::vector<ActionPrediction> preds;
  std::vector<ActionTarget> targets;
  for (const Sample& s : samples) {
    preds.push_back(predict_clip(systems.view(), *s.frames, cfg.stitch, nullptr));
    targets.push_back(s.target);
  }
  const auto score = metrics::recognition_accuracy(preds, targets);
  return json{{"task", to_string(cfg.task)},
              {"head", to_string(cfg.head)},
              {"split", cfg.data.eval_split},
              {"examples", samples.size()},
              {"replicas", cfg.stitch.test_replicas},
              {"checkpoints", systems.owned.size()},
              {"acc_action", score.acc_action},
              {"acc_verb", score.acc_verb},
              {"acc_noun", score.acc_noun},
              {"b1", nullptr},
              {"b4", nullptr}};
}

inline json eval_vqa(const RunConfig& cfg, const CommandOptions& o) {
  const VqaData data = load_vqa_data(cfg.data.root, cfg.mcan.feature_dim);
  auto systems = load_vqa_systems(cfg, o, data.answers);
  std::vector<std::string> cands, refs;
  std::size_t correct = 0;
  for (const auto& q : data.qa) {
    if (data.split.at(q.video_id) != cfg.data.eval_split) continue;
    const auto& frames = data.features.at(q.video_id);
    const int rep = representative_frame(q.frame_idx, static_cast<int>(frames.size()));
    const std::string& a =
        systems.owned.front()->answer(answer_question(systems.view(), frames[static_cast<std::size_t>(rep)], q.question));
    correct += a == q.answer;
    cands.push_back(a);
    refs.push_back(q.answer);
  }
  if (cands.empty()) throw std::runtime_error("no questions in split '" + cfg.data.eval_split + "'");
  const auto bleu = metrics::answer_bleu(cands, refs);
  return json{{"task", "vqa"},
              {"split", cfg.data.eval_split},
              {"examples", cands.size()},
              {"checkpoints", systems.owned.size()},
              {"accuracy", static_cast<double>(correct) / static_cast<double>(cands.size())},
              {"acc_action", nullptr},
              {"acc_verb", nullptr},
              {"acc_noun", nullptr},
              {"b1", bleu.b1},
              {"b4", bleu.b4}};
}

inline void predict_recognition(const RunConfig& cfg, const CommandOptions& o) {
  const fs::path out = out_dir(o);
  const RecognitionData data = load_recognition_data(cfg.data.root);
  check_dictionary(cfg, data.dict);
  auto systems = load_recognition_systems(cfg, o, data.dict);
  std::ofstream csv_out(out / "predictions.csv");
  std::ofstream log(out / "predict_log.txt");
  if (!csv_out || !log) throw std::runtime_error("cannot write predictions under " + out.string());
  csv_out << "video_id,verb_id,noun_id,action_id\n";
  for (const auto& [id, frames] : data.videos) {
    const ActionPrediction p = predict_clip(systems.view(), frames, cfg.stitch, &log);
    csv_out << id << ',' << p.verb << ',' << p.noun << ',' << (p.action ? std::to_string(*p.action) : "") << '\n';
  }
}

inline void predict_vqa(const RunConfig& cfg, const CommandOptions& o) {
  const fs::path out = out_dir(o);
  const VqaData data = load_vqa_data(cfg.data.root, cfg.mcan.feature_dim);
  auto systems = load_vqa_systems(cfg, o, data.answers);
  std::ofstream pred(out / "predictions.jsonl");
  std::ofstream log(out / "predict_log.txt");
  if (!pred || !log) throw std::runtime_error("cannot write predictions under " + out.string());
  for (const auto& [id, frames] : data.features) {
    std::vector<std::string> questions;
    for (const auto& q : data.qa)
      if (q.video_id == id && std::find(questions.begin(), questions.end(), q.question) == questions.end())
        questions.push_back(q.question);
    std::vector<vqa::AnswerRecord> rows;
    for (const auto& block : vqa::inference_partition(static_cast<int>(frames.size()))) {
      for (std::size_t qi = 0; qi < questions.size(); ++qi) {
        const int a = answer_question(systems.view(), frames[static_cast<std::size_t>(block.representative)], questions[qi]);
        log << "video=" << id << " block=" << block.first << "-" << block.last << " representative=" << block.representative
            << " question_id=" << qi << " checkpoints=" << systems.owned.size() << '\n';
        for (int f = block.first; f <= block.last; ++f)
          rows.push_back({id, f, static_cast<int>(qi), systems.owned.front()->answer(a)});
      }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.frame_idx < b.frame_idx; });
    vqa::write_predictions_jsonl(pred, rows);
  }
}

inline void report(const CommandOptions& o) {
  const fs::path out = out_dir(o);
  bool drew = false;
  if (fs::exists(out / "train_log.csv")) {
    draw_loss_curve(read_train_log(out / "train_log.csv"), out / "loss_curve.png");
    drew = true;
  }
  if (fs::exists(out / "metrics.json")) {
    std::ifstream in(out / "metrics.json");
    const json m = json::parse(in);
    std::vector<std::pair<std::string, double>> bars;
    for (const char* k : {"acc_action", "acc_verb", "acc_noun", "accuracy", "b1", "b4"})
      if (m.contains(k) && m[k].is_number()) bars.emplace_back(k, m[k].get<double>());
    draw_accuracy_bars(bars, out / "accuracy.png");
    drew = true;
  }
  if (!drew) throw std::runtime_error("nothing to report: " + out.string() + " has neither train_log.csv nor metrics.json");
}

}  // namespace detail

/// Runs one CLI command and maps failures to exit codes: 2 for invalid
/// configuration, 1 for anything that goes wrong at run time.
inline int run_command(const std::string& command, const CommandOptions& o) {
  std::ostream& con = *o.console;
  try {
    RunConfig cfg = load_config(o.config);
    if (o.seed) set_seed(cfg, *o.seed);
    if (command == "generate") {
      const fs::path root = o.out.value_or(cfg.data.root);
      fs::create_directories(root);
      if (cfg.task == Task::kVqa) {
        const auto specs = generate_vqa(cfg, root);
        con << "wrote " << specs.size() << " vqa videos to " << root.string() << '\n';
      } else {
        const auto clips = generate_recognition(cfg, root);
        con << "wrote " << clips.size() << " videos to " << root.string() << '\n';
      }
      return kExitOk;
    }
    if (command == "report") {
      detail::report(o);
      return kExitOk;
    }
    if (command != "train" && command != "eval" && command != "predict")
      throw ConfigError("unknown command '" + command + "'");
    detail::require_data_root(cfg);
    if (!cfg.teacher_checkpoint.empty() && !fs::exists(cfg.teacher_checkpoint))
      throw ConfigError("[model] teacher_checkpoint " + cfg.teacher_checkpoint.string() + " does not exist");
    const fs::path out = detail::out_dir(o);
    fs::create_directories(out);
    const bool vqa = cfg.task == Task::kVqa;
    if (command == "train") {
      vqa ? detail::train_vqa(cfg, o) : detail::train_recognition(cfg, o);
    } else if (command == "eval") {
      const json m = vqa ? detail::eval_vqa(cfg, o) : detail::eval_recognition(cfg, o);
      detail::write_metrics(m, out);
      con << m.dump() << '\n';
    } else {
      vqa ? detail::predict_vqa(cfg, o) : detail::predict_recognition(cfg, o);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    con << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    con << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace t3kit::harness
