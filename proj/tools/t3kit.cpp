// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "t3kit/harness/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  namespace h = t3kit::harness;
  CLI::App app{"t3kit: action recognition, anticipation and video question answering at desk scale"};
  app.require_subcommand(1, 1);

  h::CommandOptions opts;
  std::string config;
  std::uint64_t seed = 0;
  std::vector<std::string> checkpoints;
  std::string out;
  for (const std::string& name : h::command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "TOML run configuration")->required();
    sub->add_option("--seed", seed, "override [task] seed");
    sub->add_option("--checkpoint", checkpoints,
                    "checkpoint to resume (train) or evaluate; repeat to average several (eval, predict)");
    sub->add_option("--out", out, "artifact directory (default: runs; generate defaults to [data] root)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return h::kExitConfig;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  opts.config = config;
  if (chosen->count("--seed") > 0) opts.seed = seed;
  for (const auto& c : checkpoints) opts.checkpoints.emplace_back(c);
  if (chosen->count("--out") > 0) opts.out = out;
  return h::run_command(chosen->get_name(), opts);
}
