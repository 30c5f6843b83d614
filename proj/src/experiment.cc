// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include "omnihybrid/experiment.h"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>

#include "omnihybrid/io.h"

namespace omnihybrid {

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json config_json(const ExperimentConfig& cfg) {
  Json out = Json::object();
  for (const auto& [key, value] : config_items(cfg)) out[key] = value;
  return out;
}

}  // namespace

TrainContext Experiment::context() const {
  TrainContext ctx;
  ctx.task = task;
  ctx.judge = judge;
  ctx.judge_config = config.judge;
  ctx.grpo = config.grpo;
  ctx.dpo = config.dpo;
  ctx.gate = config.gate;
  ctx.train = config.train;
  return ctx;
}

PolicyParams Experiment::base_params() const {
  return pretrain_base(PolicyParams::initialize(config.model), *task, config.train.pretrain_steps,
                       config.train.pretrain_learning_rate, config.train.seed);
}

std::vector<size_t> Experiment::all_prompts() const {
  std::vector<size_t> out(task->prompts().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

Experiment make_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  Experiment exp;
  exp.config = cfg;
  exp.task = std::make_shared<const TaskSpec>(TaskSpec::synthetic(cfg.model, cfg.task));
  exp.judge = std::make_shared<const SyntheticJudge>(exp.task, cfg.judge);
  return exp;
}

RunOutputs run_training(const Experiment& exp, const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string started = utc_now();
  fs::create_directories(fs::path(dir) / "checkpoints");
  write_file_atomic((fs::path(dir) / "config.cfg").string(), emit_config(exp.config));

  const PolicyParams base = exp.base_params();
  save_checkpoint((fs::path(dir) / "checkpoints" / "base.ckpt").string(), base);

  std::ofstream metrics(fs::path(dir) / "metrics.jsonl", std::ios::trunc);
  std::ofstream lambda(fs::path(dir) / "lambda.csv", std::ios::trunc);
  if (!metrics || !lambda) throw std::runtime_error("cannot create log files in " + dir);
  lambda << "step,v,g,lambda_raw,lambda\n";
  auto on_step = [&](const StepRecord& r) {
    metrics << to_json(r).dump() << "\n";
    if (r.gate) {
      lambda << r.step << "," << Json(r.gate->normalized_variance).dump() << ","
             << Json(r.gate->direction_gate).dump() << "," << Json(r.gate->lambda_raw).dump()
             << "," << Json(r.gate->lambda).dump() << "\n";
    }
  };

  std::optional<RunResult> result;
  try {
    result = train_loop(exp.config.model, exp.context(), on_step, base);
  } catch (const NonFiniteError& e) {
    Json failure{{"error", e.what()}, {"record", to_json(e.record())}};
    write_file_atomic((fs::path(dir) / "failure.json").string(), failure.dump(2) + "\n");
    throw;
  }
  metrics.close();
  lambda.close();
  RunOutputs out{dir, std::move(*result), ""};

  Json artifacts{{"config", "config.cfg"},
                 {"metrics", "metrics.jsonl"},
                 {"lambda", "lambda.csv"},
                 {"base_checkpoint", "checkpoints/base.ckpt"},
                 {"final_checkpoint", "checkpoints/final.ckpt"}};
  if (!out.result.pairs.empty()) {
    std::string pairs;
    for (const auto& p : out.result.pairs) pairs += to_json(p).dump() + "\n";
    write_file_atomic((fs::path(dir) / "pairs.jsonl").string(), pairs);
    artifacts["pairs"] = "pairs.jsonl";
  }
  const std::string final_bytes = checkpoint_bytes(out.result.final_params);
  write_file_atomic((fs::path(dir) / "checkpoints" / "final.ckpt").string(), final_bytes);
  out.final_sha1 = git_blob_sha1(final_bytes);

  Json manifest{{"tool", "omnihybrid"},
                {"version", "0.1.0"},
                {"manifest_version", 1},
                {"seed", exp.config.train.seed},
                {"recipe", recipe_name(exp.config.train.recipe)},
                {"config", config_json(exp.config)},
                {"started_at", started},
                {"finished_at", utc_now()},
                {"steps", out.result.log.size()},
                {"final_eval", to_json(out.result.final_eval)},
                {"base_params_sha1", git_blob_sha1(checkpoint_bytes(base))},
                {"final_params_sha1", out.final_sha1},
                {"artifacts", artifacts}};
  write_file_atomic((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  return out;
}

}  // namespace omnihybrid
