// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

// Wires an ExperimentConfig into task, judge and trainer objects, and
// writes the run directory produced by `omnihybrid train`.

#pragma once

#include <memory>
#include <string>

#include "omnihybrid/config.h"
#include "omnihybrid/judge.h"
#include "omnihybrid/trainer.h"

namespace omnihybrid {

struct Experiment {
  ExperimentConfig config;
  std::shared_ptr<const TaskSpec> task;
  std::shared_ptr<const SyntheticJudge> judge;

  TrainContext context() const;
  // Fresh initialization followed by base pretraining.
  PolicyParams base_params() const;
  std::vector<size_t> all_prompts() const;
};

// Validates the config and builds the task and judge.
Experiment make_experiment(const ExperimentConfig& cfg);

struct RunOutputs {
  std::string dir;
  RunResult result;
  std::string final_sha1;  // git blob hash of checkpoints/final.ckpt
};

// Trains and writes into `dir`:
//   config.cfg, metrics.jsonl, lambda.csv, checkpoints/{base,final}.ckpt,
//   pairs.jsonl (DPO recipes), manifest.json (written last, atomically).
// On a non-finite step the offending record goes to failure.json and the
// NonFiniteError is rethrown.
RunOutputs run_training(const Experiment& exp, const std::string& dir);

}  // namespace omnihybrid
