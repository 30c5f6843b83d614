// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include "omnihybrid/model.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "omnihybrid/rng.h"

namespace omnihybrid {

const char* modality_name(Modality m) {
  return m == Modality::kText ? "text" : "speech";
}

void Vocabulary::validate() const {
  if (text_size < 2) throw std::invalid_argument("model.text_size must be >= 2");
  if (speech_size < 2) throw std::invalid_argument("model.speech_size must be >= 2");
}

std::vector<size_t> TokenSequence::positions_of(Modality m) const {
  std::vector<size_t> out;
  for (size_t t = 0; t < modality.size(); ++t) {
    if (modality[t] == m) out.push_back(t);
  }
  return out;
}

void TokenSequence::validate(const Vocabulary& vocab) const {
  if (modality.size() != response.size()) {
    throw std::invalid_argument("sequence: modality length " +
                                std::to_string(modality.size()) +
                                " != response length " +
                                std::to_string(response.size()));
  }
  for (size_t i = 0; i < prompt.size(); ++i) {
    if (!vocab.contains(prompt[i])) {
      throw std::domain_error("sequence: prompt token " + std::to_string(prompt[i]) +
                              " at " + std::to_string(i) + " out of vocabulary");
    }
  }
  for (size_t t = 0; t < response.size(); ++t) {
    const TokenId y = response[t];
    if (!vocab.contains(y)) {
      throw std::domain_error("sequence: response token " + std::to_string(y) +
                              " at " + std::to_string(t) + " out of vocabulary");
    }
    if (vocab.is_special(y)) continue;
    const bool ok = modality[t] == Modality::kText ? vocab.is_text(y) : vocab.is_speech(y);
    if (!ok) {
      throw std::invalid_argument("sequence: token " + std::to_string(y) + " at " +
                                  std::to_string(t) + " does not match its " +
                                  modality_name(modality[t]) + " tag");
    }
  }
}

void ModelConfig::validate() const {
  vocab.validate();
  if (window < 1) throw std::invalid_argument("model.window must be >= 1");
  if (embed_dim < 1) throw std::invalid_argument("model.embed_dim must be >= 1");
  if (hidden < 1) throw std::invalid_argument("model.hidden must be >= 1");
  if (text_per_cycle < 1) throw std::invalid_argument("model.text_per_cycle must be >= 1");
  if (speech_per_cycle < 0) throw std::invalid_argument("model.speech_per_cycle must be >= 0");
  if (max_response_length < 1) {
    throw std::invalid_argument("model.max_response_length must be >= 1");
  }
}

Modality ModelConfig::slot_modality(size_t position) const {
  const size_t cycle = static_cast<size_t>(text_per_cycle + speech_per_cycle);
  return position % cycle < static_cast<size_t>(text_per_cycle) ? Modality::kText
                                                                : Modality::kSpeech;
}

size_t LayerSegment::size() const {
  size_t n = 1;
  for (size_t s : shape) n *= s;
  return n;
}

PolicyParams::PolicyParams(const ModelConfig& config) : config_(config) {
  config_.validate();
  const size_t v = static_cast<size_t>(config_.vocab.size());
  const size_t d = static_cast<size_t>(config_.embed_dim);
  const size_t h = static_cast<size_t>(config_.hidden);
  const size_t in = static_cast<size_t>(config_.window) * d;
  size_t offset = 0;
  for (auto [name, shape] : {std::pair<const char*, std::vector<size_t>>{"embedding", {v, d}},
                             {"hidden", {h, in + 1}},
                             {"output", {v, h + 1}}}) {
    LayerSegment seg{name, offset, shape};
    offset += seg.size();
    layout_.push_back(std::move(seg));
  }
  values_.assign(offset, 0.0);
}

PolicyParams PolicyParams::zeros(const ModelConfig& config) { return PolicyParams(config); }

PolicyParams PolicyParams::initialize(const ModelConfig& config) {
  PolicyParams p(config);
  Rng rng(derive_seed(config.init_seed, {0x1417}));
  for (size_t i = 0; i < 2; ++i) {
    const double scale = i == 0 ? config.embed_init_scale : config.hidden_init_scale;
    const LayerSegment& seg = p.layout_[i];
    for (size_t k = 0; k < seg.size(); ++k) p.values_[seg.offset + k] = scale * standard_normal(rng);
  }
  return p;
}

const LayerSegment& PolicyParams::layer(const std::string& name) const {
  for (const auto& seg : layout_) {
    if (seg.name == name) return seg;
  }
  throw std::out_of_range("no layer segment named " + name);
}

bool PolicyParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

bool PolicyParams::same_shape(const PolicyParams& other) const {
  if (layout_.size() != other.layout_.size()) return false;
  for (size_t i = 0; i < layout_.size(); ++i) {
    if (layout_[i].name != other.layout_[i].name ||
        layout_[i].shape != other.layout_[i].shape) {
      return false;
    }
  }
  return config_.window == other.config_.window &&
         config_.vocab.text_size == other.config_.vocab.text_size &&
         config_.vocab.speech_size == other.config_.vocab.speech_size;
}

std::vector<TokenId> context_window(const ModelConfig& config, const TokenSequence& seq,
                                    size_t t) {
  const size_t w = static_cast<size_t>(config.window);
  std::vector<TokenId> ctx(w, config.vocab.bos());
  // Stream is [BOS, prompt..., response[0..t)]; fill from the right.
  const size_t stream_len = 1 + seq.prompt.size() + t;
  for (size_t k = 0; k < w && k < stream_len; ++k) {
    const size_t idx = stream_len - 1 - k;  // index into the stream
    TokenId tok;
    if (idx == 0) {
      tok = config.vocab.bos();
    } else if (idx <= seq.prompt.size()) {
      tok = seq.prompt[idx - 1];
    } else {
      tok = seq.response[idx - 1 - seq.prompt.size()];
    }
    ctx[w - 1 - k] = tok;
  }
  return ctx;
}

namespace {

void check_context(const Vocabulary& vocab, std::span<const TokenId> context) {
  for (TokenId t : context) {
    if (!vocab.contains(t)) {
      throw std::domain_error("token " + std::to_string(t) + " out of vocabulary");
    }
  }
}

// Fills input, activation and logits for one context window.
void forward_one(const PolicyParams& p, std::span<const TokenId> context, double* input,
                 double* act, double* logits) {
  const auto& cfg = p.config();
  const size_t d = static_cast<size_t>(cfg.embed_dim);
  const size_t h = static_cast<size_t>(cfg.hidden);
  const size_t v = static_cast<size_t>(cfg.vocab.size());
  const size_t in = static_cast<size_t>(cfg.window) * d;
  const double* emb = p.embedding();
  for (size_t k = 0; k < context.size(); ++k) {
    std::copy_n(emb + static_cast<size_t>(context[k]) * d, d, input + k * d);
  }
  const double* w1 = p.hidden();
  for (size_t j = 0; j < h; ++j) {
    const double* row = w1 + j * (in + 1);
    double a = row[in];
    for (size_t i = 0; i < in; ++i) a += row[i] * input[i];
    act[j] = std::tanh(a);
  }
  const double* w2 = p.output();
  for (size_t k = 0; k < v; ++k) {
    const double* row = w2 + k * (h + 1);
    double z = row[h];
    for (size_t j = 0; j < h; ++j) z += row[j] * act[j];
    logits[k] = z;
  }
}

void log_softmax_inplace(double* z, size_t n) {
  const double m = *std::max_element(z, z + n);
  double s = 0.0;
  for (size_t k = 0; k < n; ++k) s += std::exp(z[k] - m);
  const double lse = m + std::log(s);
  for (size_t k = 0; k < n; ++k) z[k] -= lse;
}

}  // namespace

std::vector<double> next_token_logits(const PolicyParams& params,
                                      std::span<const TokenId> context) {
  const auto& cfg = params.config();
  if (context.size() != static_cast<size_t>(cfg.window)) {
    throw std::invalid_argument("context size must equal the model window");
  }
  check_context(cfg.vocab, context);
  std::vector<double> input(static_cast<size_t>(cfg.window * cfg.embed_dim));
  std::vector<double> act(static_cast<size_t>(cfg.hidden));
  std::vector<double> logits(static_cast<size_t>(cfg.vocab.size()));
  forward_one(params, context, input.data(), act.data(), logits.data());
  return logits;
}

std::vector<double> next_token_logprobs(const PolicyParams& params,
                                        std::span<const TokenId> context) {
  std::vector<double> z = next_token_logits(params, context);
  log_softmax_inplace(z.data(), z.size());
  return z;
}

SequenceForward forward(const PolicyParams& params, const TokenSequence& seq) {
  const auto& cfg = params.config();
  seq.validate(cfg.vocab);
  SequenceForward f;
  f.positions = seq.length();
  f.vocab = static_cast<size_t>(cfg.vocab.size());
  f.input_dim = static_cast<size_t>(cfg.window * cfg.embed_dim);
  f.hidden_dim = static_cast<size_t>(cfg.hidden);
  const size_t w = static_cast<size_t>(cfg.window);
  f.contexts.resize(f.positions * w);
  f.inputs.resize(f.positions * f.input_dim);
  f.activations.resize(f.positions * f.hidden_dim);
  f.logprobs.resize(f.positions * f.vocab);
  for (size_t t = 0; t < f.positions; ++t) {
    const auto ctx = context_window(cfg, seq, t);
    std::copy(ctx.begin(), ctx.end(), f.contexts.begin() + static_cast<long>(t * w));
    double* lp = f.logprobs.data() + t * f.vocab;
    forward_one(params, ctx, f.inputs.data() + t * f.input_dim,
                f.activations.data() + t * f.hidden_dim, lp);
    log_softmax_inplace(lp, f.vocab);
  }
  return f;
}

std::vector<double> token_logprobs(const PolicyParams& params, const TokenSequence& seq) {
  const SequenceForward f = forward(params, seq);
  std::vector<double> out(f.positions);
  for (size_t t = 0; t < f.positions; ++t) {
    out[t] = f.logprobs[t * f.vocab + static_cast<size_t>(seq.response[t])];
  }
  return out;
}

PartitionedLogprob logprob_partitioned(const PolicyParams& params, const TokenSequence& seq) {
  const auto lp = token_logprobs(params, seq);
  PartitionedLogprob out;
  for (size_t t = 0; t < lp.size(); ++t) {
    (seq.modality[t] == Modality::kText ? out.text : out.speech) += lp[t];
  }
  return out;
}

void backprop(const PolicyParams& params, const SequenceForward& fwd,
              std::span<const double> logit_grads, std::span<double> grad,
              const std::vector<bool>& keep) {
  const auto& cfg = params.config();
  const size_t d = static_cast<size_t>(cfg.embed_dim);
  const size_t w = static_cast<size_t>(cfg.window);
  const size_t h = fwd.hidden_dim;
  const size_t v = fwd.vocab;
  const size_t in = fwd.input_dim;
  if (logit_grads.size() != fwd.positions * v) {
    throw std::invalid_argument("backprop: logit gradient shape mismatch");
  }
  if (grad.size() != params.size()) {
    throw std::invalid_argument("backprop: gradient buffer does not match parameters");
  }
  double* g_emb = grad.data() + params.layout()[0].offset;
  double* g_w1 = grad.data() + params.layout()[1].offset;
  double* g_w2 = grad.data() + params.layout()[2].offset;
  const double* w1 = params.hidden();
  const double* w2 = params.output();
  std::vector<double> dh(h), da(h), dx(in);

  for (size_t t = 0; t < fwd.positions; ++t) {
    if (!keep.empty() && !keep[t]) continue;
    const double* dz = logit_grads.data() + t * v;
    const double* act = fwd.activations.data() + t * h;
    const double* x = fwd.inputs.data() + t * in;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (size_t k = 0; k < v; ++k) {
      const double g = dz[k];
      if (g == 0.0) continue;
      double* grow = g_w2 + k * (h + 1);
      const double* row = w2 + k * (h + 1);
      for (size_t j = 0; j < h; ++j) {
        grow[j] += g * act[j];
        dh[j] += g * row[j];
      }
      grow[h] += g;
    }
    for (size_t j = 0; j < h; ++j) da[j] = dh[j] * (1.0 - act[j] * act[j]);
    std::fill(dx.begin(), dx.end(), 0.0);
    for (size_t j = 0; j < h; ++j) {
      const double g = da[j];
      if (g == 0.0) continue;
      double* grow = g_w1 + j * (in + 1);
      const double* row = w1 + j * (in + 1);
      for (size_t i = 0; i < in; ++i) {
        grow[i] += g * x[i];
        dx[i] += g * row[i];
      }
      grow[in] += g;
    }
    const TokenId* ctx = fwd.contexts.data() + t * w;
    for (size_t k = 0; k < w; ++k) {
      double* erow = g_emb + static_cast<size_t>(ctx[k]) * d;
      for (size_t e = 0; e < d; ++e) erow[e] += dx[k * d + e];
    }
  }
}

}  // namespace omnihybrid
