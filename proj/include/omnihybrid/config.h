// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration as a flat `section.key = value` file.
//
//   # comment
//   train.recipe = hybrid_dynamic
//   train.steps = 500
//
// Unknown keys and duplicate keys are rejected. emit() writes every key, so
// parse(emit(c)) == c.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "omnihybrid/gate.h"
#include "omnihybrid/judge.h"
#include "omnihybrid/model.h"
#include "omnihybrid/objectives.h"
#include "omnihybrid/trainer.h"

namespace omnihybrid {

struct ExperimentConfig {
  ModelConfig model;
  GRPOConfig grpo;
  DPOConfig dpo;
  GateConfig gate;
  JudgeConfig judge;
  TrainConfig train;
  TaskConfig task;

  void validate() const;
  bool operator==(const ExperimentConfig& other) const;
};

// Thrown for malformed files, unknown keys and bad values; the message
// names the line and/or key path.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string help;
};

// Every key in emit order, with its default.
std::vector<ConfigKey> config_keys();

// (key, value) for every key in emit order.
std::vector<std::pair<std::string, std::string>> config_items(const ExperimentConfig& cfg);

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string emit_config(const ExperimentConfig& cfg);

// Applies one `key=value` assignment.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

}  // namespace omnihybrid
