// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include "omnihybrid/gate.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace omnihybrid {

void GateConfig::validate() const {
  if (!(k > 0.0)) throw std::invalid_argument("gate.k must be > 0");
  if (!(lambda_max > 0.0 && lambda_max <= 1.0)) {
    throw std::invalid_argument("gate.lambda_max must be in (0, 1]");
  }
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("gate.alpha must be in [0, 1)");
  if (!(likert_max_var > 0.0)) throw std::invalid_argument("gate.likert_max_var must be > 0");
}

namespace {

void require_rewards(const std::vector<double>& rewards) {
  if (rewards.empty()) throw std::invalid_argument("gate: empty reward list");
}

}  // namespace

double normalized_variance(const std::vector<double>& rewards, const GateConfig& cfg) {
  require_rewards(rewards);
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  return std::clamp(var / cfg.likert_max_var, 0.0, 1.0);
}

double direction_gate(const std::vector<double>& rewards, const GateConfig& cfg) {
  require_rewards(rewards);
  const double best = *std::max_element(rewards.begin(), rewards.end());
  const double x = cfg.k * (best - cfg.neutral);
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double raw_lambda(const std::vector<double>& rewards, const GateConfig& cfg) {
  return cfg.lambda_max * direction_gate(rewards, cfg) * normalized_variance(rewards, cfg);
}

EmaResult ema_update(const GateState& state, double lambda_raw, const GateConfig& cfg) {
  if (!(lambda_raw >= 0.0 && lambda_raw <= cfg.lambda_max)) {
    throw std::invalid_argument("ema_update: lambda_raw outside [0, lambda_max]");
  }
  EmaResult out;
  out.lambda = (1.0 - cfg.alpha) * lambda_raw + cfg.alpha * state.lambda_prev;
  // A convex combination can round a hair past its endpoints.
  out.lambda = std::clamp(out.lambda, 0.0, cfg.lambda_max);
  out.state.lambda_prev = out.lambda;
  out.state.step_index = state.step_index + 1;
  return out;
}

GateStepResult gate_step(const GateState& state, const std::vector<double>& rewards,
                         const GateConfig& cfg) {
  cfg.validate();
  require_rewards(rewards);
  GateStepResult out;
  out.diagnostics.normalized_variance = normalized_variance(rewards, cfg);
  out.diagnostics.direction_gate = direction_gate(rewards, cfg);
  out.diagnostics.lambda_raw =
      cfg.lambda_max * out.diagnostics.direction_gate * out.diagnostics.normalized_variance;
  const EmaResult ema = ema_update(state, out.diagnostics.lambda_raw, cfg);
  out.lambda = ema.lambda;
  out.state = ema.state;
  out.diagnostics.lambda = ema.lambda;
  return out;
}

}  // namespace omnihybrid
