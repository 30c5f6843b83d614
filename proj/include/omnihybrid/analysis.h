// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

// Diagnostics over checkpoints and score files: text/speech gradient
// geometry, teacher-forcing log-probability shifts, repeated-sampling
// variance, judge/human agreement, and side-by-side vote aggregation with
// an exact two-sided sign test.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "omnihybrid/model.h"

namespace omnihybrid {

// ---- gradient geometry ----

struct ModalityGrads {
  std::vector<double> text;
  std::vector<double> speech;
};

// Gradients of the text-position and speech-position cross-entropies, each
// from its own backward pass into a cleared buffer.
ModalityGrads grad_decompose(const PolicyParams& params, const TokenSequence& seq);

struct GeometryEntry {
  std::string layer;  // "global" for the all-parameter entry
  double norm_text = 0.0;
  double norm_speech = 0.0;
  std::optional<double> cosine;  // undefined when either norm is 0
  std::optional<double> ratio;   // undefined when norm_speech is 0
};

struct GradReport {
  std::vector<GeometryEntry> layers;
  GeometryEntry global;
};

GradReport grad_geometry(const std::vector<double>& g_text, const std::vector<double>& g_speech,
                         const std::vector<LayerSegment>& layout);

// ---- teacher-forcing shift ----

struct DeltaLogp {
  std::vector<double> delta;  // log p_tuned - log p_base per position
  std::vector<Modality> modality;
  std::optional<double> mean_text;
  std::optional<double> mean_speech;
  double mean_all = 0.0;
};

// Throws std::invalid_argument when the checkpoints differ in shape.
DeltaLogp delta_logp(const PolicyParams& base, const PolicyParams& tuned,
                     const TokenSequence& seq);

// ---- statistics ----

double mean(const std::vector<double>& x);
double population_variance(const std::vector<double>& x);
// nullopt when either input has zero variance.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);
// Ranks 1..n with ties sharing the average rank.
std::vector<double> average_ranks(const std::vector<double>& x);
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

struct IdScore {
  std::string id;
  double score = 0.0;
};

struct VarianceReport {
  std::vector<std::pair<std::string, double>> per_id;  // in first-seen id order
  double dataset = 0.0;
};

VarianceReport per_id_variance(const std::vector<IdScore>& scores);

struct AxisAgreement {
  std::optional<double> pearson;
  std::optional<double> intra_id_spearman;
  double mae = 0.0;
  double pass_rate_le1 = 0.0;
  double bias = 0.0;  // mean(judge - human)
  int spearman_ids_used = 0;
  int spearman_ids_skipped = 0;  // fewer than 2 samples or zero rank variance
};

struct AgreementReport {
  AxisAgreement semantic;
  AxisAgreement acoustic;
};

struct AgreementSample {
  std::string id;
  double judge_semantic = 0.0;
  double judge_acoustic = 0.0;
  double human_semantic = 0.0;  // already averaged across raters
  double human_acoustic = 0.0;
};

// Agreement on one axis from aligned lists; throws on length mismatch.
AxisAgreement axis_agreement(const std::vector<std::string>& ids,
                             const std::vector<double>& judge,
                             const std::vector<double>& human);

AgreementReport agreement(const std::vector<AgreementSample>& samples);

// ---- side-by-side votes ----

enum class Vote { kA, kB, kTie };
enum class Outcome { kWin, kLoss, kTie };  // from A's point of view

const char* outcome_name(Outcome o);
Vote parse_vote(const std::string& s);

// Strict majority of the votes, otherwise a tie. Throws on an empty list.
Outcome majority_vote(const std::vector<Vote>& votes);

// Pr[Bin(n, 1/2) >= k], summed exactly in log space.
double binomial_upper_tail(int n, int k);

// p = min(1, 2 * min(Pr[Bin(N,.5) >= W], Pr[Bin(N,.5) >= L])), N = W + L.
// Throws std::invalid_argument when N = 0 or a count is negative.
double sign_test(int wins, int losses);

}  // namespace omnihybrid
