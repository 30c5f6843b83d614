// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

// File formats: checkpoints (one JSON header line followed by raw
// little-endian float64 values), JSONL records for sequences, pairs, metric
// rows and analysis inputs, and git-style SHA-1 content hashes.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnihybrid/analysis.h"
#include "omnihybrid/judge.h"
#include "omnihybrid/model.h"
#include "omnihybrid/trainer.h"

namespace omnihybrid {

using Json = nlohmann::json;

// Malformed input; `line` is 1-based, 0 when not tied to a line.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& file, size_t line, const std::string& what);
  size_t line() const { return line_; }

 private:
  size_t line_;
};

// ---- checkpoints ----

std::string checkpoint_bytes(const PolicyParams& params);
PolicyParams checkpoint_from_bytes(const std::string& bytes, const std::string& name = "<memory>");
void save_checkpoint(const std::string& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::string& path);

// SHA-1 over "blob <size>\0" + content, as printed by `git hash-object`.
std::string git_blob_sha1(const std::string& content);

// ---- records ----

Json model_config_to_json(const ModelConfig& m);
ModelConfig model_config_from_json(const Json& j);

Json to_json(const TokenSequence& seq);
TokenSequence sequence_from_json(const Json& j);
Json to_json(const JudgeScore& s);
Json to_json(const PreferencePair& p);
PreferencePair pair_from_json(const Json& j);
Json to_json(const EvalMetrics& m);
Json to_json(const StepRecord& r);
Json to_json(const GeometryEntry& e);
Json to_json(const GradReport& r);
Json to_json(const DeltaLogp& d);
Json to_json(const VarianceReport& v);
Json to_json(const AxisAgreement& a);
Json to_json(const AgreementReport& a);

// ---- JSONL ----

// Calls `fn(json, line_number)` for every non-blank line; parse failures and
// exceptions thrown by `fn` are rethrown as FormatError with the line number.
void read_jsonl(const std::string& path, const std::function<void(const Json&, size_t)>& fn);

std::vector<TokenSequence> read_sequences(const std::string& path);
std::vector<PreferencePair> read_pairs(const std::string& path);

// {"id", "judge_semantic", "judge_acoustic", "human_semantic",
// "human_acoustic"}; human fields may be a number or a list of rater scores,
// which is averaged.
std::vector<AgreementSample> read_agreement_samples(const std::string& path);

// {"id", "<axis>": score, ...}; returns scores for `axis`, skipping lines
// without it.
std::vector<IdScore> read_axis_scores(const std::string& path, const std::string& axis);

struct VoteItem {
  std::string id;
  std::vector<Vote> semantic;
  std::vector<Vote> acoustic;
};
// {"id", "semantic": ["A", "B", "TIE", ...], "acoustic": [...]}
std::vector<VoteItem> read_votes(const std::string& path);

// Writes `content` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace omnihybrid
