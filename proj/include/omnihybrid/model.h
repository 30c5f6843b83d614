// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

// Mixed text/speech token space and a small fixed-window autoregressive
// policy with hand-derived gradients.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace omnihybrid {

using TokenId = int32_t;

enum class Modality : uint8_t { kText = 0, kSpeech = 1 };

const char* modality_name(Modality m);

// Token ids are laid out as [text | speech | BOS, EOS].
struct Vocabulary {
  int text_size = 12;
  int speech_size = 16;

  int size() const { return text_size + speech_size + 2; }
  TokenId bos() const { return text_size + speech_size; }
  TokenId eos() const { return text_size + speech_size + 1; }
  TokenId text_token(int k) const { return k; }
  TokenId speech_token(int k) const { return text_size + k; }

  bool contains(TokenId t) const { return t >= 0 && t < size(); }
  bool is_text(TokenId t) const { return t >= 0 && t < text_size; }
  bool is_speech(TokenId t) const {
    return t >= text_size && t < text_size + speech_size;
  }
  bool is_special(TokenId t) const { return t == bos() || t == eos(); }

  // Throws std::invalid_argument when V_T < 2 or V_S < 2.
  void validate() const;
};

// A prompt plus a generated (or demonstrated) response. `modality[t]` tags
// response position t; the tags partition positions into I_T and I_S.
struct TokenSequence {
  std::vector<TokenId> prompt;
  std::vector<TokenId> response;
  std::vector<Modality> modality;
  bool truncated = false;

  size_t length() const { return response.size(); }
  std::vector<size_t> positions_of(Modality m) const;
  std::vector<size_t> text_positions() const {
    return positions_of(Modality::kText);
  }
  std::vector<size_t> speech_positions() const {
    return positions_of(Modality::kSpeech);
  }

  // Throws std::domain_error on out-of-vocabulary ids and
  // std::invalid_argument on tag/length/range violations.
  void validate(const Vocabulary& vocab) const;

  bool operator==(const TokenSequence&) const = default;
};

struct ModelConfig {
  Vocabulary vocab;
  int window = 4;
  int embed_dim = 8;
  int hidden = 32;
  uint64_t init_seed = 0;
  double embed_init_scale = 1.0;
  double hidden_init_scale = 0.1;
  // Generation schema: cycles of `text_per_cycle` text slots followed by
  // `speech_per_cycle` speech slots. EOS is only emitted at text slots.
  int text_per_cycle = 1;
  int speech_per_cycle = 2;
  int max_response_length = 48;

  void validate() const;
  Modality slot_modality(size_t position) const;
};

struct LayerSegment {
  std::string name;
  size_t offset = 0;
  std::vector<size_t> shape;

  size_t size() const;
};

// Flat parameter vector with three named segments:
//   embedding [V, d], hidden [H, W*d + 1], output [V, H + 1]
// where the trailing column of the last two holds the bias.
class PolicyParams {
 public:
  // Seeded random embedding and hidden layer, zero output layer.
  static PolicyParams initialize(const ModelConfig& config);
  static PolicyParams zeros(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return config_.vocab; }
  const std::vector<LayerSegment>& layout() const { return layout_; }
  const LayerSegment& layer(const std::string& name) const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  size_t size() const { return values_.size(); }

  std::span<const double> segment(const LayerSegment& seg) const {
    return std::span<const double>(values_).subspan(seg.offset, seg.size());
  }

  const double* embedding() const { return values_.data() + layout_[0].offset; }
  const double* hidden() const { return values_.data() + layout_[1].offset; }
  const double* output() const { return values_.data() + layout_[2].offset; }

  bool all_finite() const;
  bool same_shape(const PolicyParams& other) const;

  bool operator==(const PolicyParams& other) const {
    return values_ == other.values_ && same_shape(other);
  }

 private:
  explicit PolicyParams(const ModelConfig& config);

  ModelConfig config_;
  std::vector<LayerSegment> layout_;
  std::vector<double> values_;
};

// Frozen parameter copy used for pi_ref and pi_old. Copies share storage.
class ReferenceSnapshot {
 public:
  ReferenceSnapshot() = default;
  explicit ReferenceSnapshot(PolicyParams params)
      : params_(std::make_shared<const PolicyParams>(std::move(params))) {}

  bool empty() const { return params_ == nullptr; }
  const PolicyParams& params() const { return *params_; }

 private:
  std::shared_ptr<const PolicyParams> params_;
};

// Teacher-forced activations for every response position. Arrays are
// row-major with one row per position.
struct SequenceForward {
  size_t positions = 0;
  size_t vocab = 0;
  size_t input_dim = 0;
  size_t hidden_dim = 0;
  std::vector<TokenId> contexts;   // [T, W]
  std::vector<double> inputs;      // [T, W*d]
  std::vector<double> activations; // [T, H], post-tanh
  std::vector<double> logprobs;    // [T, V]

  std::span<const double> logprob_row(size_t t) const {
    return std::span<const double>(logprobs).subspan(t * vocab, vocab);
  }
};

// Context window preceding response position t: the last W tokens of
// [BOS, prompt..., response[0..t)], left-padded with BOS.
std::vector<TokenId> context_window(const ModelConfig& config,
                                    const TokenSequence& seq, size_t t);

// Log-softmax over the full vocabulary for an arbitrary context window.
std::vector<double> next_token_logprobs(const PolicyParams& params,
                                        std::span<const TokenId> context);
std::vector<double> next_token_logits(const PolicyParams& params,
                                      std::span<const TokenId> context);

SequenceForward forward(const PolicyParams& params, const TokenSequence& seq);

// log pi(y_t | x, y_<t) for every response position.
std::vector<double> token_logprobs(const PolicyParams& params,
                                   const TokenSequence& seq);

struct PartitionedLogprob {
  double text = 0.0;
  double speech = 0.0;
  double total() const { return text + speech; }
};

PartitionedLogprob logprob_partitioned(const PolicyParams& params,
                                       const TokenSequence& seq);

// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logits) for
// every position ([T, V] row-major). Positions whose `keep` entry is false
// are skipped; an empty `keep` keeps everything.
void backprop(const PolicyParams& params, const SequenceForward& fwd,
              std::span<const double> logit_grads, std::span<double> grad,
              const std::vector<bool>& keep = {});

}  // namespace omnihybrid
