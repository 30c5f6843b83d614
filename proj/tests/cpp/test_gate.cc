// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "omnihybrid/gate.h"
#include "omnihybrid/rng.h"

namespace omnihybrid {
namespace {

const GateConfig kDefault{};

TEST(Variance, Examples) {
  EXPECT_EQ(normalized_variance({3, 3, 3, 3}, kDefault), 0.0);
  EXPECT_EQ(normalized_variance({1, 5, 1, 5}, kDefault), 1.0);
  EXPECT_EQ(normalized_variance({2, 4}, kDefault), 0.25);
  EXPECT_THROW(normalized_variance({}, kDefault), std::invalid_argument);
}

TEST(Direction, Examples) {
  EXPECT_EQ(direction_gate({1, 3}, kDefault), 0.5);
  GateConfig steep;
  steep.k = 50.0;
  EXPECT_EQ(direction_gate({3}, steep), 0.5);
  EXPECT_NEAR(direction_gate({2, 4}, kDefault), 0.8807970779778823, 1e-15);
  EXPECT_GT(direction_gate({5}, steep), 1.0 - 1e-15);
  EXPECT_GT(direction_gate({1}, kDefault), 0.0);
}

TEST(RawLambda, Examples) {
  EXPECT_EQ(raw_lambda({4, 4, 4}, kDefault), 0.0);
  GateConfig steep;
  steep.k = 60.0;
  EXPECT_NEAR(raw_lambda({1, 5, 1, 5}, steep), 0.8, 1e-15);
}

TEST(RawLambda, MonotoneInMaxAndVariance) {
  // Raising the max with the variance held fixed: shift the whole group.
  double prev = -1.0;
  for (double shift = 0.0; shift <= 2.0; shift += 0.25) {
    const double lam = raw_lambda({1.5 + shift, 2.5 + shift}, kDefault);
    EXPECT_GE(lam, prev);
    prev = lam;
  }
  // Raising the variance with the max held fixed at 5.
  prev = -1.0;
  for (double low = 5.0; low >= 1.0; low -= 0.5) {
    const double lam = raw_lambda({low, 5.0}, kDefault);
    EXPECT_GE(lam, prev);
    prev = lam;
  }
}

TEST(Ema, Examples) {
  const auto r = ema_update({0.0, 0}, 0.8, kDefault);
  EXPECT_NEAR(r.lambda, 0.08, 1e-15);
  EXPECT_EQ(r.state.lambda_prev, r.lambda);
  EXPECT_EQ(r.state.step_index, 1);
  EXPECT_EQ(ema_update({0.3, 4}, 0.3, kDefault).lambda, 0.3);
  EXPECT_THROW(ema_update({0.0, 0}, 0.9, kDefault), std::invalid_argument);
}

TEST(Ema, GeometricSeries) {
  const double c = 0.37;
  GateState s;
  for (int t = 1; t <= 50; ++t) {
    s = ema_update(s, c, kDefault).state;
    EXPECT_NEAR(s.lambda_prev, c * (1.0 - std::pow(0.9, t)), 1e-12);
  }
}

TEST(Ema, Contraction) {
  const double c = 0.2;
  GateState s{0.75, 0};
  for (int t = 1; t <= 50; ++t) {
    const double before = std::abs(s.lambda_prev - c);
    s = ema_update(s, c, kDefault).state;
    EXPECT_NEAR(std::abs(s.lambda_prev - c), 0.9 * before, 1e-15);
  }
}

TEST(Step, MatchesManualComposition) {
  Rng rng(5);
  GateState s;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> r(4);
    for (double& x : r) x = 1.0 + 4.0 * uniform01(rng);
    const double v = normalized_variance(r, kDefault);
    const double g = direction_gate(r, kDefault);
    const double raw = 0.8 * g * v;
    const double want = 0.1 * raw + 0.9 * s.lambda_prev;
    const auto out = gate_step(s, r, kDefault);
    EXPECT_EQ(out.diagnostics.normalized_variance, v);
    EXPECT_EQ(out.diagnostics.direction_gate, g);
    EXPECT_EQ(out.diagnostics.lambda_raw, raw);
    EXPECT_NEAR(out.lambda, want, 1e-15);
    EXPECT_GE(out.lambda, 0.0);
    EXPECT_LE(out.lambda, kDefault.lambda_max);
    EXPECT_GE(1.0 - out.lambda, 0.2 - 1e-12);
    s = out.state;
  }
}

TEST(Step, EmptyRewardsLeaveStateAlone) {
  const GateState s{0.4, 7};
  EXPECT_THROW(gate_step(s, {}, kDefault), std::invalid_argument);
  EXPECT_EQ(s.lambda_prev, 0.4);
  EXPECT_EQ(s.step_index, 7);
}

TEST(Step, ImprovingRewardsGiveNondecreasingLambda) {
  GateState s;
  std::vector<double> lam;
  for (int t = 0; t < 60; ++t) {
    const double spread = std::min(2.0, 0.04 * t);
    const double center = 2.0 + std::min(1.0, 0.02 * t);
    s = gate_step(s, {center - spread, center + spread}, kDefault).state;
    lam.push_back(s.lambda_prev);
  }
  for (size_t t = 10; t < lam.size(); ++t) EXPECT_GE(lam[t], lam[t - 1]);
}

TEST(Config, Validation) {
  GateConfig c;
  c.lambda_max = 1.2;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = GateConfig{};
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = GateConfig{};
  c.k = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace omnihybrid
