// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

// Dynamic SFT/GRPO mixing weight. Each step the group rewards give
//   v_t   = clip(Var(R) / 4, 0, 1)           (population variance)
//   g_t   = sigmoid(k (max R - 3))
//   raw   = lambda_max * g_t * v_t
//   lam_t = (1 - alpha) raw + alpha lam_{t-1}
// so the SFT weight 1 - lam_t never falls below 1 - lambda_max.

#pragma once

#include <vector>

namespace omnihybrid {

struct GateConfig {
  double k = 2.0;
  double lambda_max = 0.8;
  double alpha = 0.9;
  double neutral = 3.0;
  double likert_max_var = 4.0;

  void validate() const;
};

struct GateState {
  double lambda_prev = 0.0;
  long step_index = 0;
};

struct GateDiagnostics {
  double normalized_variance = 0.0;
  double direction_gate = 0.0;
  double lambda_raw = 0.0;
  double lambda = 0.0;
};

double normalized_variance(const std::vector<double>& rewards, const GateConfig& cfg);
double direction_gate(const std::vector<double>& rewards, const GateConfig& cfg);
double raw_lambda(const std::vector<double>& rewards, const GateConfig& cfg);

struct EmaResult {
  double lambda = 0.0;
  GateState state;
};
EmaResult ema_update(const GateState& state, double lambda_raw, const GateConfig& cfg);

struct GateStepResult {
  double lambda = 0.0;
  GateState state;
  GateDiagnostics diagnostics;
};

// Throws std::invalid_argument on an empty reward list; `state` is taken by
// const reference and never modified.
GateStepResult gate_step(const GateState& state, const std::vector<double>& rewards,
                         const GateConfig& cfg);

}  // namespace omnihybrid
