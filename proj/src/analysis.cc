// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include "omnihybrid/analysis.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>


namespace omnihybrid {

ModalityGrads grad_decompose(const PolicyParams& params, const TokenSequence& seq) {
  ModalityGrads out;
  const SequenceForward f = forward(params, seq);
  std::vector<double> dz(f.positions * f.vocab, 0.0);
  for (size_t t = 0; t < f.positions; ++t) {
    double* row = dz.data() + t * f.vocab;
    const auto lp = f.logprob_row(t);
    for (size_t k = 0; k < f.vocab; ++k) row[k] = std::exp(lp[k]);
    row[static_cast<size_t>(seq.response[t])] -= 1.0;
  }
  for (Modality m : {Modality::kText, Modality::kSpeech}) {
    std::vector<bool> keep(seq.length());
    for (size_t t = 0; t < keep.size(); ++t) keep[t] = seq.modality[t] == m;
    std::vector<double> g(params.size(), 0.0);
    backprop(params, f, dz, g, keep);
    (m == Modality::kText ? out.text : out.speech) = std::move(g);
  }
  return out;
}

namespace {

GeometryEntry geometry_entry(std::string name, std::span<const double> a,
                             std::span<const double> b) {
  double aa = 0.0, bb = 0.0, ab = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    aa += a[i] * a[i];
    bb += b[i] * b[i];
    ab += a[i] * b[i];
  }
  GeometryEntry e;
  e.layer = std::move(name);
  e.norm_text = std::sqrt(aa);
  e.norm_speech = std::sqrt(bb);
  if (e.norm_text > 0.0 && e.norm_speech > 0.0) {
    e.cosine = std::clamp(ab / (e.norm_text * e.norm_speech), -1.0, 1.0);
  }
  if (e.norm_speech > 0.0) e.ratio = e.norm_text / e.norm_speech;
  return e;
}

}  // namespace

GradReport grad_geometry(const std::vector<double>& g_text, const std::vector<double>& g_speech,
                         const std::vector<LayerSegment>& layout) {
  if (g_text.size() != g_speech.size()) {
    throw std::invalid_argument("grad_geometry: gradient sizes differ");
  }
  GradReport report;
  for (const auto& seg : layout) {
    if (seg.offset + seg.size() > g_text.size()) {
      throw std::invalid_argument("grad_geometry: layout exceeds gradient size");
    }
    report.layers.push_back(
        geometry_entry(seg.name, std::span<const double>(g_text).subspan(seg.offset, seg.size()),
                       std::span<const double>(g_speech).subspan(seg.offset, seg.size())));
  }
  report.global = geometry_entry("global", g_text, g_speech);
  return report;
}

DeltaLogp delta_logp(const PolicyParams& base, const PolicyParams& tuned,
                     const TokenSequence& seq) {
  if (!base.same_shape(tuned)) {
    throw std::invalid_argument("delta_logp: base and tuned checkpoints differ in shape");
  }
  const auto lb = token_logprobs(base, seq);
  const auto lt = token_logprobs(tuned, seq);
  DeltaLogp out;
  out.modality = seq.modality;
  out.delta.resize(lb.size());
  double st = 0.0, ss = 0.0;
  size_t nt = 0, ns = 0;
  for (size_t t = 0; t < lb.size(); ++t) {
    out.delta[t] = lt[t] - lb[t];
    if (seq.modality[t] == Modality::kText) {
      st += out.delta[t];
      ++nt;
    } else {
      ss += out.delta[t];
      ++ns;
    }
  }
  if (nt) out.mean_text = st / static_cast<double>(nt);
  if (ns) out.mean_speech = ss / static_cast<double>(ns);
  out.mean_all = out.delta.empty() ? 0.0 : (st + ss) / static_cast<double>(out.delta.size());
  return out;
}

double mean(const std::vector<double>& x) {
  if (x.empty()) throw std::invalid_argument("mean of empty list");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double population_variance(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  return pearson(average_ranks(x), average_ranks(y));
}

VarianceReport per_id_variance(const std::vector<IdScore>& scores) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> groups;
  for (const auto& s : scores) {
    auto [it, inserted] = groups.try_emplace(s.id);
    if (inserted) order.push_back(s.id);
    it->second.push_back(s.score);
  }
  if (order.empty()) throw std::invalid_argument("per_id_variance: no scores");
  VarianceReport out;
  double sum = 0.0;
  for (const auto& id : order) {
    const double v = population_variance(groups[id]);
    out.per_id.emplace_back(id, v);
    sum += v;
  }
  out.dataset = sum / static_cast<double>(order.size());
  return out;
}

AxisAgreement axis_agreement(const std::vector<std::string>& ids,
                             const std::vector<double>& judge,
                             const std::vector<double>& human) {
  if (ids.size() != judge.size() || judge.size() != human.size()) {
    throw std::invalid_argument("agreement: judge/human/id lists differ in length");
  }
  if (judge.empty()) throw std::invalid_argument("agreement: no samples");
  AxisAgreement out;
  out.pearson = pearson(judge, human);
  double abs_sum = 0.0, diff_sum = 0.0;
  size_t pass = 0;
  for (size_t i = 0; i < judge.size(); ++i) {
    const double d = judge[i] - human[i];
    abs_sum += std::abs(d);
    diff_sum += d;
    if (std::abs(d) <= 1.0) ++pass;
  }
  const double n = static_cast<double>(judge.size());
  out.mae = abs_sum / n;
  out.bias = diff_sum / n;
  out.pass_rate_le1 = static_cast<double>(pass) / n;

  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (size_t i = 0; i < ids.size(); ++i) {
    auto [it, inserted] = groups.try_emplace(ids[i]);
    if (inserted) order.push_back(ids[i]);
    it->second.first.push_back(judge[i]);
    it->second.second.push_back(human[i]);
  }
  double rho_sum = 0.0;
  for (const auto& id : order) {
    const auto& [j, h] = groups[id];
    const auto rho = j.size() >= 2 ? spearman(j, h) : std::nullopt;
    if (rho) {
      rho_sum += *rho;
      ++out.spearman_ids_used;
    } else {
      ++out.spearman_ids_skipped;
    }
  }
  if (out.spearman_ids_used > 0) out.intra_id_spearman = rho_sum / out.spearman_ids_used;
  return out;
}

AgreementReport agreement(const std::vector<AgreementSample>& samples) {
  std::vector<std::string> ids;
  std::vector<double> js, hs, ja, ha;
  for (const auto& s : samples) {
    ids.push_back(s.id);
    js.push_back(s.judge_semantic);
    hs.push_back(s.human_semantic);
    ja.push_back(s.judge_acoustic);
    ha.push_back(s.human_acoustic);
  }
  return {axis_agreement(ids, js, hs), axis_agreement(ids, ja, ha)};
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kWin: return "win";
    case Outcome::kLoss: return "loss";
    case Outcome::kTie: return "tie";
  }
  return "tie";
}

Vote parse_vote(const std::string& s) {
  if (s == "A" || s == "a") return Vote::kA;
  if (s == "B" || s == "b") return Vote::kB;
  if (s == "TIE" || s == "Tie" || s == "tie") return Vote::kTie;
  throw std::invalid_argument("unknown vote '" + s + "' (expected A, B or TIE)");
}

Outcome majority_vote(const std::vector<Vote>& votes) {
  if (votes.empty()) throw std::invalid_argument("majority_vote: no votes");
  const auto a = std::count(votes.begin(), votes.end(), Vote::kA);
  const auto b = std::count(votes.begin(), votes.end(), Vote::kB);
  const auto n = static_cast<long>(votes.size());
  if (2 * a > n) return Outcome::kWin;
  if (2 * b > n) return Outcome::kLoss;
  return Outcome::kTie;
}

double binomial_upper_tail(int n, int k) {
  if (n < 0) throw std::invalid_argument("binomial_upper_tail: n < 0");
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  if (n <= 52) {
    // Integer coefficients stay below 2^53, so the sum and scaling are exact.
    uint64_t c = 1, sum = 0;
    for (int i = 0; i <= n; ++i) {
      if (i >= k) sum += c;
      c = c * static_cast<uint64_t>(n - i) / static_cast<uint64_t>(i + 1);
    }
    return std::ldexp(static_cast<double>(sum), -n);
  }
  std::vector<double> logs;
  for (int i = k; i <= n; ++i) {
    logs.push_back(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) -
                   n * std::log(2.0));
  }
  const double m = *std::max_element(logs.begin(), logs.end());
  double s = 0.0;
  for (double l : logs) s += std::exp(l - m);
  return std::min(1.0, std::exp(m) * s);
}

double sign_test(int wins, int losses) {
  if (wins < 0 || losses < 0) throw std::invalid_argument("sign_test: negative count");
  const int n = wins + losses;
  if (n == 0) throw std::invalid_argument("sign_test: no decided items (W + L = 0)");
  return std::min(1.0, 2.0 * std::min(binomial_upper_tail(n, wins), binomial_upper_tail(n, losses)));
}

}  // namespace omnihybrid
