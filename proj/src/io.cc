// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include "omnihybrid/io.h"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace omnihybrid {

namespace {

constexpr const char* kCheckpointFormat = "omnihybrid-checkpoint";
constexpr int kCheckpointVersion = 1;

uint64_t to_little_endian(uint64_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    uint64_t y = 0;
    for (int i = 0; i < 8; ++i) y |= ((x >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return y;
  }
  return x;
}

Json modality_json(const std::vector<Modality>& m) {
  Json out = Json::array();
  for (Modality x : m) out.push_back(modality_name(x));
  return out;
}

Modality parse_modality(const std::string& s) {
  if (s == "text") return Modality::kText;
  if (s == "speech") return Modality::kSpeech;
  throw std::invalid_argument("unknown modality '" + s + "'");
}

JudgeScore score_from_json(const Json& j) {
  return {j.at("semantic").get<double>(), j.at("acoustic").get<double>()};
}

std::vector<Vote> votes_from_json(const Json& j) {
  std::vector<Vote> out;
  for (const auto& v : j) out.push_back(parse_vote(v.get<std::string>()));
  return out;
}

double rater_mean(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_array() || j.empty()) throw std::invalid_argument("human score must be a number or a non-empty list");
  double s = 0.0;
  for (const auto& v : j) s += v.get<double>();
  return s / static_cast<double>(j.size());
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

FormatError::FormatError(const std::string& file, size_t line, const std::string& what)
    : std::runtime_error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
      line_(line) {}

// ---- checkpoints ----

Json model_config_to_json(const ModelConfig& m) {
  return Json{{"text_size", m.vocab.text_size},
              {"speech_size", m.vocab.speech_size},
              {"window", m.window},
              {"embed_dim", m.embed_dim},
              {"hidden", m.hidden},
              {"init_seed", m.init_seed},
              {"embed_init_scale", m.embed_init_scale},
              {"hidden_init_scale", m.hidden_init_scale},
              {"text_per_cycle", m.text_per_cycle},
              {"speech_per_cycle", m.speech_per_cycle},
              {"max_response_length", m.max_response_length}};
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig m;
  m.vocab.text_size = j.at("text_size").get<int>();
  m.vocab.speech_size = j.at("speech_size").get<int>();
  m.window = j.at("window").get<int>();
  m.embed_dim = j.at("embed_dim").get<int>();
  m.hidden = j.at("hidden").get<int>();
  m.init_seed = j.at("init_seed").get<uint64_t>();
  m.embed_init_scale = j.at("embed_init_scale").get<double>();
  m.hidden_init_scale = j.at("hidden_init_scale").get<double>();
  m.text_per_cycle = j.at("text_per_cycle").get<int>();
  m.speech_per_cycle = j.at("speech_per_cycle").get<int>();
  m.max_response_length = j.at("max_response_length").get<int>();
  m.validate();
  return m;
}

std::string checkpoint_bytes(const PolicyParams& params) {
  Json layers = Json::array();
  for (const auto& seg : params.layout()) {
    layers.push_back({{"name", seg.name}, {"offset", seg.offset}, {"shape", seg.shape}});
  }
  const Json header{{"format", kCheckpointFormat},
                    {"version", kCheckpointVersion},
                    {"dtype", "float64-le"},
                    {"count", params.size()},
                    {"model", model_config_to_json(params.config())},
                    {"layers", layers}};
  std::string out = header.dump() + "\n";
  const size_t start = out.size();
  out.resize(start + 8 * params.size());
  const auto values = params.values();
  for (size_t i = 0; i < values.size(); ++i) {
    const uint64_t bits = to_little_endian(std::bit_cast<uint64_t>(values[i]));
    std::memcpy(out.data() + start + 8 * i, &bits, 8);
  }
  return out;
}

PolicyParams checkpoint_from_bytes(const std::string& bytes, const std::string& name) {
  const size_t nl = bytes.find('\n');
  if (nl == std::string::npos) throw FormatError(name, 1, "missing checkpoint header line");
  Json header;
  try {
    header = Json::parse(bytes.substr(0, nl));
  } catch (const Json::exception& e) {
    throw FormatError(name, 1, std::string("bad checkpoint header: ") + e.what());
  }
  try {
    if (header.at("format") != kCheckpointFormat) throw std::invalid_argument("not a checkpoint");
    if (header.at("version") != kCheckpointVersion) throw std::invalid_argument("unsupported version");
    if (header.at("dtype") != "float64-le") throw std::invalid_argument("unsupported dtype");
    PolicyParams params = PolicyParams::zeros(model_config_from_json(header.at("model")));
    const size_t count = header.at("count").get<size_t>();
    if (count != params.size()) throw std::invalid_argument("value count does not match model shape");
    const auto& layers = header.at("layers");
    if (layers.size() != params.layout().size()) throw std::invalid_argument("layer list mismatch");
    for (size_t i = 0; i < layers.size(); ++i) {
      const auto& seg = params.layout()[i];
      if (layers[i].at("name") != seg.name || layers[i].at("offset").get<size_t>() != seg.offset ||
          layers[i].at("shape").get<std::vector<size_t>>() != seg.shape) {
        throw std::invalid_argument("layer " + seg.name + " does not match the model layout");
      }
    }
    if (bytes.size() - nl - 1 != 8 * count) {
      throw std::invalid_argument("payload holds " + std::to_string(bytes.size() - nl - 1) +
                                  " bytes, expected " + std::to_string(8 * count));
    }
    auto values = params.values();
    for (size_t i = 0; i < count; ++i) {
      uint64_t bits;
      std::memcpy(&bits, bytes.data() + nl + 1 + 8 * i, 8);
      values[i] = std::bit_cast<double>(to_little_endian(bits));
    }
    if (!params.all_finite()) throw std::invalid_argument("non-finite parameter values");
    return params;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(name, 0, e.what());
  }
}

void save_checkpoint(const std::string& path, const PolicyParams& params) {
  write_file_atomic(path, checkpoint_bytes(params));
}

PolicyParams load_checkpoint(const std::string& path) {
  return checkpoint_from_bytes(read_file(path), path);
}

std::string git_blob_sha1(const std::string& content) {
  const std::string head = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, head.data(), head.size()) != 1 ||
      EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha1 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

// ---- records ----

Json to_json(const TokenSequence& seq) {
  return Json{{"prompt", seq.prompt},
              {"response", seq.response},
              {"modality", modality_json(seq.modality)},
              {"truncated", seq.truncated}};
}

TokenSequence sequence_from_json(const Json& j) {
  TokenSequence seq;
  seq.prompt = j.at("prompt").get<std::vector<TokenId>>();
  seq.response = j.at("response").get<std::vector<TokenId>>();
  for (const auto& m : j.at("modality")) seq.modality.push_back(parse_modality(m.get<std::string>()));
  seq.truncated = j.value("truncated", false);
  return seq;
}

Json to_json(const JudgeScore& s) {
  return Json{{"semantic", s.semantic}, {"acoustic", s.acoustic}};
}

Json to_json(const PreferencePair& p) {
  return Json{{"prompt", p.prompt},
              {"chosen", to_json(p.chosen)},
              {"rejected", to_json(p.rejected)},
              {"chosen_score", to_json(p.chosen_score)},
              {"rejected_score", to_json(p.rejected_score)},
              {"utility_gap", p.utility_gap}};
}

PreferencePair pair_from_json(const Json& j) {
  PreferencePair p;
  p.prompt = j.at("prompt").get<std::vector<TokenId>>();
  p.chosen = sequence_from_json(j.at("chosen"));
  p.rejected = sequence_from_json(j.at("rejected"));
  p.chosen_score = score_from_json(j.at("chosen_score"));
  p.rejected_score = score_from_json(j.at("rejected_score"));
  p.utility_gap = j.at("utility_gap").get<double>();
  if (p.chosen.prompt != p.prompt || p.rejected.prompt != p.prompt) {
    throw std::invalid_argument("pair prompt differs from its responses' prompts");
  }
  return p;
}

Json to_json(const EvalMetrics& m) {
  return Json{{"mean_reward", m.mean_reward},
              {"mean_semantic", m.mean_semantic},
              {"mean_acoustic", m.mean_acoustic},
              {"speech_style_tv", m.speech_style_tv}};
}

Json to_json(const StepRecord& r) {
  Json j{{"step", r.step},
         {"prompt_id", r.prompt_id},
         {"rewards", r.rewards},
         {"losses", r.losses},
         {"grad_norm", r.grad_norm},
         {"grad_norm_text", r.grad_norm_text},
         {"grad_norm_speech", r.grad_norm_speech}};
  if (r.gate) {
    j["v"] = r.gate->normalized_variance;
    j["g"] = r.gate->direction_gate;
    j["lambda_raw"] = r.gate->lambda_raw;
    j["lambda"] = r.gate->lambda;
  }
  if (r.sft_weight) j["sft_weight"] = *r.sft_weight;
  if (r.eval) j["eval"] = to_json(*r.eval);
  return j;
}

Json to_json(const GeometryEntry& e) {
  return Json{{"layer", e.layer},
              {"norm_text", e.norm_text},
              {"norm_speech", e.norm_speech},
              {"cosine", optional_json(e.cosine)},
              {"ratio", optional_json(e.ratio)}};
}

Json to_json(const GradReport& r) {
  Json layers = Json::array();
  for (const auto& e : r.layers) layers.push_back(to_json(e));
  return Json{{"layers", layers}, {"global", to_json(r.global)}};
}

Json to_json(const DeltaLogp& d) {
  return Json{{"delta", d.delta},
              {"modality", modality_json(d.modality)},
              {"mean_text", optional_json(d.mean_text)},
              {"mean_speech", optional_json(d.mean_speech)},
              {"mean_all", d.mean_all}};
}

Json to_json(const VarianceReport& v) {
  Json per = Json::array();
  for (const auto& [id, var] : v.per_id) per.push_back({{"id", id}, {"variance", var}});
  return Json{{"per_id", per}, {"dataset", v.dataset}};
}

Json to_json(const AxisAgreement& a) {
  return Json{{"pearson", optional_json(a.pearson)},
              {"intra_id_spearman", optional_json(a.intra_id_spearman)},
              {"mae", a.mae},
              {"pass_rate_le1", a.pass_rate_le1},
              {"bias", a.bias},
              {"spearman_ids_used", a.spearman_ids_used},
              {"spearman_ids_skipped", a.spearman_ids_skipped}};
}

Json to_json(const AgreementReport& a) {
  return Json{{"semantic", to_json(a.semantic)}, {"acoustic", to_json(a.acoustic)}};
}

// ---- JSONL ----

void read_jsonl(const std::string& path, const std::function<void(const Json&, size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw FormatError(path, 0, "cannot open file");
  std::string line;
  size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(Json::parse(line), n);
    } catch (const std::exception& e) {
      throw FormatError(path, n, e.what());
    }
  }
}

std::vector<TokenSequence> read_sequences(const std::string& path) {
  std::vector<TokenSequence> out;
  read_jsonl(path, [&](const Json& j, size_t) { out.push_back(sequence_from_json(j)); });
  return out;
}

std::vector<PreferencePair> read_pairs(const std::string& path) {
  std::vector<PreferencePair> out;
  read_jsonl(path, [&](const Json& j, size_t) { out.push_back(pair_from_json(j)); });
  return out;
}

std::vector<AgreementSample> read_agreement_samples(const std::string& path) {
  std::vector<AgreementSample> out;
  read_jsonl(path, [&](const Json& j, size_t) {
    AgreementSample s;
    s.id = j.at("id").get<std::string>();
    s.judge_semantic = j.at("judge_semantic").get<double>();
    s.judge_acoustic = j.at("judge_acoustic").get<double>();
    s.human_semantic = rater_mean(j.at("human_semantic"));
    s.human_acoustic = rater_mean(j.at("human_acoustic"));
    out.push_back(std::move(s));
  });
  return out;
}

std::vector<IdScore> read_axis_scores(const std::string& path, const std::string& axis) {
  std::vector<IdScore> out;
  read_jsonl(path, [&](const Json& j, size_t) {
    if (!j.contains(axis)) return;
    out.push_back({j.at("id").get<std::string>(), j.at(axis).get<double>()});
  });
  return out;
}

std::vector<VoteItem> read_votes(const std::string& path) {
  std::vector<VoteItem> out;
  read_jsonl(path, [&](const Json& j, size_t) {
    VoteItem v;
    v.id = j.at("id").get<std::string>();
    v.semantic = votes_from_json(j.at("semantic"));
    v.acoustic = votes_from_json(j.at("acoustic"));
    if (v.semantic.empty() || v.acoustic.empty()) {
      throw std::invalid_argument("each axis needs at least one vote");
    }
    out.push_back(std::move(v));
  });
  return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path, 0, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace omnihybrid
