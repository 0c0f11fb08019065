// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/moma.hpp"
#include "t3kit/optim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace t3kit::harness {

using nlohmann::json;

inline constexpr const char* kCheckpointFormat = "t3kit-checkpoint/1";

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline json matrix_to_json(const ag::Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline ag::Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw std::runtime_error("checkpoint matrix size mismatch");
  ag::Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

/// One row of the training log.
struct LossRow {
  int step = 0;
  double ce = 0.0;
  double infonce = 0.0;
  double total = 0.0;
};

/// Everything needed to resume or evaluate: parameters by name, optimizer
/// moments, queue contents, config hash, step and free-form extras (vocabulary,
/// answer list).
struct Checkpoint {
  std::string config_hash;
  std::string task;
  std::string head;
  int step = 0;
  std::map<std::string, ag::Matrix> params;
  std::vector<json> optimizers;
  std::vector<json> queues;
  std::vector<LossRow> log;
  json extra = json::object();
};

inline json adam_to_json(const optim::Adam& opt) {
  json m = json::array(), v = json::array();
  for (const auto& x : opt.first_moments()) m.push_back(matrix_to_json(x));
  for (const auto& x : opt.second_moments()) v.push_back(matrix_to_json(x));
  return json{{"t", opt.steps()}, {"m", m}, {"v", v}};
}

inline void adam_from_json(optim::Adam& opt, const json& j) {
  std::vector<ag::Matrix> m, v;
  for (const auto& x : j.at("m")) m.push_back(matrix_from_json(x));
  for (const auto& x : j.at("v")) v.push_back(matrix_from_json(x));
  for (std::size_t i = 0; i < m.size() && i < opt.parameters().size(); ++i) {
    const ag::Parameter& p = *opt.parameters()[i];
    if (m[i].rows() != p.value.rows() || m[i].cols() != p.value.cols())
      throw std::runtime_error("checkpoint optimizer state does not match parameter " + p.name);
  }
  opt.restore(j.at("t").get<long>(), std::move(m), std::move(v));
}

inline json queue_to_json(const moma::NegativeQueue& q) {
  return json{{"raw", matrix_to_json(q.raw())}, {"head", q.head()}, {"fill", q.fill()}};
}

inline void queue_from_json(moma::NegativeQueue& q, const json& j) {
  ag::Matrix raw = matrix_from_json(j.at("raw"));
  if (raw.rows() != q.capacity() || raw.cols() != q.width()) throw std::runtime_error("checkpoint queue shape mismatch");
  q.restore(std::move(raw), j.at("head").get<int>(), j.at("fill").get<int>());
}

inline void store_params(Checkpoint& ck, const nn::ParameterList& params) {
  for (const ag::Parameter* p : params) {
    if (!ck.params.emplace(p->name, p->value).second)
      throw std::logic_error("duplicate parameter name " + p->name);
  }
}

/// Every parameter must be present with the right shape; extras are an error too.
inline void load_params(const Checkpoint& ck, const nn::ParameterList& params) {
  if (ck.params.size() != params.size())
    throw std::runtime_error("checkpoint holds " + std::to_string(ck.params.size()) + " tensors, model has " +
                             std::to_string(params.size()));
  for (ag::Parameter* p : params) {
    auto it = ck.params.find(p->name);
    if (it == ck.params.end()) throw std::runtime_error("checkpoint is missing parameter " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw std::runtime_error("checkpoint parameter " + p->name + " has the wrong shape");
    p->value = it->second;
  }
}

inline void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  json j;
  j["format"] = kCheckpointFormat;
  j["config_hash"] = ck.config_hash;
  j["task"] = ck.task;
  j["head"] = ck.head;
  j["step"] = ck.step;
  json params = json::object();
  for (const auto& [name, m] : ck.params) params[name] = matrix_to_json(m);
  j["params"] = std::move(params);
  j["optimizers"] = ck.optimizers;
  j["queues"] = ck.queues;
  json log = json::array();
  for (const auto& r : ck.log) log.push_back({r.step, r.ce, r.infonce, r.total});
  j["log"] = std::move(log);
  j["extra"] = ck.extra;
  const std::vector<std::uint8_t> bytes = json::to_cbor(j);
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("error writing checkpoint " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::from_cbor(bytes);
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + " is not valid CBOR: " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat)
      throw std::runtime_error("checkpoint " + path.string() + " has an unknown format");
    Checkpoint ck;
    ck.config_hash = j.at("config_hash").get<std::string>();
    ck.task = j.at("task").get<std::string>();
    ck.head = j.at("head").get<std::string>();
    ck.step = j.at("step").get<int>();
    for (const auto& [name, m] : j.at("params").items()) ck.params.emplace(name, matrix_from_json(m));
    for (const auto& o : j.at("optimizers")) ck.optimizers.push_back(o);
    for (const auto& q : j.at("queues")) ck.queues.push_back(q);
    for (const auto& r : j.at("log"))
      ck.log.push_back({r.at(0).get<int>(), r.at(1).get<double>(), r.at(2).get<double>(), r.at(3).get<double>()});
    ck.extra = j.at("extra");
    return ck;
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + " is malformed: " + e.what());
  }
}

/// Refuses checkpoints produced under a different model configuration.
inline void require_hash(const Checkpoint& ck, std::uint64_t expected, const std::filesystem::path& path) {
  if (ck.config_hash != hash_hex(expected))
    throw std::runtime_error("checkpoint " + path.string() + " has config hash " + ck.config_hash +
                             " but the run config hashes to " + hash_hex(expected) +
                             "; it was trained with a different model configuration");
}

}  // namespace t3kit::harness
