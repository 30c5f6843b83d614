// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

// omnihybrid: train | build-pairs | eval | analyze {grads,dlogp,diversity,agreement,signtest}
//
// Exit codes: 0 success, 1 runtime failure (including malformed input
// lines), 2 usage or configuration error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "omnihybrid/analysis.h"
#include "omnihybrid/config.h"
#include "omnihybrid/experiment.h"
#include "omnihybrid/io.h"
#include "omnihybrid/rng.h"
#include "omnihybrid/sampling.h"

namespace fs = std::filesystem;
using namespace omnihybrid;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr const char* kRunRootEnv = "OMNIHYBRID_RUN_ROOT";

// Usage/config problems detected after CLI parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", path, "experiment config file (defaults apply when omitted)");
    cmd->add_option("-o,--override", overrides, "key=value assignment, repeatable");
    cmd->footer(defaults_footer);
  }

  ExperimentConfig load() const {
    ExperimentConfig cfg;
    if (!path.empty()) {
      if (!fs::exists(path)) throw UsageError("config file not found: " + path);
      cfg = load_config(path);
    }
    for (const auto& o : overrides) apply_override(cfg, o);
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    return cfg;
  }

  static std::string defaults_footer() {
    std::string s = "\nConfig keys (default):\n";
    for (const auto& k : config_keys()) {
      s += "  " + k.key + " = " + k.default_value + "    " + k.help + "\n";
    }
    s += std::string("\nRun directories default to $") + kRunRootEnv + "/<recipe>-seed<seed> (root: ./runs).\n";
    return s;
  }
};

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
}

void print_json(const Json& j) { std::cout << j.dump(2) << "\n"; }

std::string csv_value(const std::optional<double>& v) { return v ? Json(*v).dump() : ""; }

void write_csv(const std::string& path, const std::string& content) {
  if (!path.empty()) write_file_atomic(path, content);
}

// Loads a checkpoint and builds the experiment around its model shape.
Experiment experiment_for(const ConfigArgs& args, const PolicyParams& params) {
  ExperimentConfig cfg = args.load();
  cfg.model = params.config();
  return make_experiment(cfg);
}

std::vector<TokenSequence> sequences_or_demos(const std::string& path, const Experiment& exp) {
  if (!path.empty()) {
    require_file(path, "sequence file");
    return read_sequences(path);
  }
  std::vector<TokenSequence> out;
  for (size_t i = 0; i < exp.task->prompts().size(); ++i) out.push_back(exp.task->demonstration(i));
  return out;
}

// ---- train ----

struct TrainArgs {
  ConfigArgs config;
  std::string run_dir;
  std::string name;
  bool print_config = false;
};

int cmd_train(const TrainArgs& a) {
  const ExperimentConfig cfg = a.config.load();
  if (a.print_config) {
    std::cout << emit_config(cfg);
    return 0;
  }
  const Experiment exp = make_experiment(cfg);
  std::string dir = a.run_dir;
  if (dir.empty()) {
    const char* root = std::getenv(kRunRootEnv);
    const std::string name = a.name.empty() ? std::string(recipe_name(cfg.train.recipe)) + "-seed" +
                                                  std::to_string(cfg.train.seed)
                                            : a.name;
    dir = (fs::path(root && *root ? root : "runs") / name).string();
  }
  const RunOutputs out = run_training(exp, dir);
  print_json({{"run_dir", out.dir},
              {"steps", out.result.log.size()},
              {"final_eval", to_json(out.result.final_eval)},
              {"final_params_sha1", out.final_sha1}});
  return 0;
}

// ---- build-pairs ----

struct PairArgs {
  ConfigArgs config;
  std::string checkpoint;
  std::string out;
  int samples = 0;
};

int cmd_build_pairs(const PairArgs& a) {
  std::optional<PolicyParams> params;
  if (!a.checkpoint.empty()) {
    require_file(a.checkpoint, "checkpoint");
    params = load_checkpoint(a.checkpoint);
  }
  Experiment exp = params ? experiment_for(a.config, *params) : make_experiment(a.config.load());
  if (!params) params = exp.base_params();
  const int n = a.samples > 0 ? a.samples : exp.config.train.pair_samples;
  PairBuildSummary summary;
  const auto pairs = build_pairs(*params, *exp.task, *exp.judge, exp.config.judge, n,
                                 exp.config.train.temperature, exp.config.train.top_p,
                                 exp.config.train.seed, &summary);
  std::string body;
  for (const auto& p : pairs) body += to_json(p).dump() + "\n";
  write_file_atomic(a.out, body);
  print_json({{"pairs_file", a.out},
              {"samples_per_prompt", n},
              {"total_prompts", exp.task->prompts().size()},
              {"kept", summary.kept},
              {"dropped_by_margin", summary.dropped_by_margin},
              {"skipped", summary.skipped}});
  return 0;
}

// ---- eval ----

struct EvalArgs {
  ConfigArgs config;
  std::string checkpoint;
};

int cmd_eval(const EvalArgs& a) {
  std::optional<PolicyParams> params;
  if (!a.checkpoint.empty()) {
    require_file(a.checkpoint, "checkpoint");
    params = load_checkpoint(a.checkpoint);
  }
  Experiment exp = params ? experiment_for(a.config, *params) : make_experiment(a.config.load());
  if (!params) params = exp.base_params();
  print_json(to_json(evaluate_policy(*params, *exp.task, exp.all_prompts(), exp.config.judge)));
  return 0;
}

// ---- analyze ----

struct AnalyzeArgs {
  ConfigArgs config;
  std::string checkpoint;
  std::string base;
  std::string tuned;
  std::string sequences;
  std::string scores;
  std::string votes;
  std::string csv;
  int samples = 8;
  int wins = -1;
  int losses = -1;
};

int cmd_grads(const AnalyzeArgs& a) {
  require_file(a.checkpoint, "checkpoint");
  const PolicyParams params = load_checkpoint(a.checkpoint);
  const Experiment exp = experiment_for(a.config, params);
  const auto seqs = sequences_or_demos(a.sequences, exp);
  std::vector<double> sum_text(params.size(), 0.0), sum_speech(params.size(), 0.0);
  Json per = Json::array();
  std::string csv = "sequence,layer,norm_text,norm_speech,cosine,ratio\n";
  for (size_t i = 0; i < seqs.size(); ++i) {
    seqs[i].validate(params.vocab());
    const ModalityGrads g = grad_decompose(params, seqs[i]);
    for (size_t k = 0; k < params.size(); ++k) {
      sum_text[k] += g.text[k];
      sum_speech[k] += g.speech[k];
    }
    const GradReport r = grad_geometry(g.text, g.speech, params.layout());
    per.push_back({{"sequence", i}, {"report", to_json(r)}});
    auto entries = r.layers;
    entries.push_back(r.global);
    for (const auto& e : entries) {
      csv += std::to_string(i) + "," + e.layer + "," + Json(e.norm_text).dump() + "," +
             Json(e.norm_speech).dump() + "," + csv_value(e.cosine) + "," + csv_value(e.ratio) + "\n";
    }
  }
  write_csv(a.csv, csv);
  print_json({{"checkpoint", a.checkpoint},
              {"sequences", seqs.size()},
              {"aggregate", to_json(grad_geometry(sum_text, sum_speech, params.layout()))},
              {"per_sequence", per}});
  return 0;
}

int cmd_dlogp(const AnalyzeArgs& a) {
  require_file(a.base, "base checkpoint");
  require_file(a.tuned, "tuned checkpoint");
  const PolicyParams base = load_checkpoint(a.base);
  const PolicyParams tuned = load_checkpoint(a.tuned);
  if (!base.same_shape(tuned)) throw std::invalid_argument("base and tuned checkpoints differ in shape");
  const Experiment exp = experiment_for(a.config, base);
  const auto seqs = sequences_or_demos(a.sequences, exp);
  Json per = Json::array();
  std::string csv = "sequence,position,modality,delta\n";
  double st = 0.0, ss = 0.0;
  size_t nt = 0, ns = 0;
  for (size_t i = 0; i < seqs.size(); ++i) {
    seqs[i].validate(base.vocab());
    const DeltaLogp d = delta_logp(base, tuned, seqs[i]);
    per.push_back(to_json(d));
    for (size_t t = 0; t < d.delta.size(); ++t) {
      const bool text = d.modality[t] == Modality::kText;
      (text ? st : ss) += d.delta[t];
      ++(text ? nt : ns);
      csv += std::to_string(i) + "," + std::to_string(t) + "," + modality_name(d.modality[t]) + "," +
             Json(d.delta[t]).dump() + "\n";
    }
  }
  write_csv(a.csv, csv);
  auto mean_or_null = [](double s, size_t n) { return n ? Json(s / static_cast<double>(n)) : Json(nullptr); };
  print_json({{"sequences", seqs.size()},
              {"mean_text", mean_or_null(st, nt)},
              {"mean_speech", mean_or_null(ss, ns)},
              {"mean_all", mean_or_null(st + ss, nt + ns)},
              {"per_sequence", per}});
  return 0;
}

int cmd_diversity(const AnalyzeArgs& a) {
  std::vector<IdScore> sem, ac;
  if (!a.scores.empty()) {
    require_file(a.scores, "score file");
    sem = read_axis_scores(a.scores, "semantic");
    ac = read_axis_scores(a.scores, "acoustic");
  } else {
    if (a.checkpoint.empty()) throw UsageError("diversity needs --scores or --checkpoint");
    require_file(a.checkpoint, "checkpoint");
    const PolicyParams params = load_checkpoint(a.checkpoint);
    const Experiment exp = experiment_for(a.config, params);
    const auto& cfg = exp.config.train;
    for (size_t i = 0; i < exp.task->prompts().size(); ++i) {
      const auto& p = exp.task->prompts()[i];
      const auto group = sample_group(params, p.prompt, a.samples, cfg.temperature, cfg.top_p,
                                      derive_seed(cfg.seed, {0xd1, i}));
      const GroupScores s = score_rollout_group(group, *exp.judge, derive_seed(cfg.seed, {0xd2, i}));
      for (const auto& js : s.scores) {
        sem.push_back({p.id, js.semantic});
        ac.push_back({p.id, js.acoustic});
      }
    }
  }
  Json out = Json::object();
  std::string csv = "axis,id,variance\n";
  for (const auto& [axis, scores] : {std::pair{"semantic", &sem}, std::pair{"acoustic", &ac}}) {
    if (scores->empty()) continue;
    const VarianceReport r = per_id_variance(*scores);
    out[axis] = to_json(r);
    for (const auto& [id, v] : r.per_id) csv += std::string(axis) + "," + id + "," + Json(v).dump() + "\n";
  }
  if (out.empty()) throw std::invalid_argument("no semantic or acoustic scores found");
  write_csv(a.csv, csv);
  print_json(out);
  return 0;
}

int cmd_agreement(const AnalyzeArgs& a) {
  if (a.scores.empty()) throw UsageError("agreement needs --scores");
  require_file(a.scores, "score file");
  const auto samples = read_agreement_samples(a.scores);
  const AgreementReport r = agreement(samples);
  if (!a.csv.empty()) {
    std::string csv = "axis,pearson,intra_id_spearman,mae,pass_rate_le1,bias\n";
    for (const auto& [axis, x] : {std::pair{"semantic", &r.semantic}, std::pair{"acoustic", &r.acoustic}}) {
      csv += std::string(axis) + "," + csv_value(x->pearson) + "," + csv_value(x->intra_id_spearman) +
             "," + Json(x->mae).dump() + "," + Json(x->pass_rate_le1).dump() + "," +
             Json(x->bias).dump() + "\n";
    }
    write_csv(a.csv, csv);
  }
  Json out = to_json(r);
  out["samples"] = samples.size();
  print_json(out);
  return 0;
}

Json sign_test_json(int w, int l, int t) {
  Json j{{"wins", w}, {"losses", l}, {"ties", t}};
  if (w + l > 0) {
    char buf[64];
    const double p = sign_test(w, l);
    std::snprintf(buf, sizeof buf, "%.10g", p);
    j["p"] = p;
    j["p_text"] = buf;
  } else {
    j["p"] = nullptr;
  }
  return j;
}

int cmd_signtest(const AnalyzeArgs& a) {
  if (a.votes.empty()) {
    if (a.wins < 0 || a.losses < 0) throw UsageError("signtest needs --votes or both --wins and --losses");
    if (a.wins + a.losses == 0) throw UsageError("signtest: wins + losses must be >= 1");
    print_json(sign_test_json(a.wins, a.losses, 0));
    return 0;
  }
  require_file(a.votes, "vote file");
  const auto items = read_votes(a.votes);
  Json out = Json::object();
  for (const char* axis : {"semantic", "acoustic"}) {
    int w = 0, l = 0, t = 0;
    for (const auto& item : items) {
      const Outcome o = majority_vote(std::string(axis) == "semantic" ? item.semantic : item.acoustic);
      (o == Outcome::kWin ? w : o == Outcome::kLoss ? l : t) += 1;
    }
    out[axis] = sign_test_json(w, l, t);
  }
  out["items"] = items.size();
  print_json(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"omnihybrid: modality-aware hybrid post-training on a synthetic text/speech task"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "run one training recipe and write a run directory");
  train.config.attach(train_cmd);
  train_cmd->add_option("--run-dir", train.run_dir, "output directory (overrides the run root)");
  train_cmd->add_option("--name", train.name, "run name under the run root");
  train_cmd->add_flag("--print-config", train.print_config, "print the effective config and exit");

  PairArgs pairs;
  auto* pairs_cmd = app.add_subcommand("build-pairs", "sample, score and select preference pairs");
  pairs.config.attach(pairs_cmd);
  pairs_cmd->add_option("--checkpoint", pairs.checkpoint, "policy checkpoint (default: base model)");
  pairs_cmd->add_option("-n,--samples", pairs.samples, "candidates per prompt (default: train.pair_samples)");
  pairs_cmd->add_option("--out", pairs.out, "output JSONL file")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "greedy noise-free evaluation over all task prompts");
  eval.config.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "policy checkpoint (default: base model)");

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "diagnostics over checkpoints and score files");
  analyze->require_subcommand(1);
  auto* grads = analyze->add_subcommand("grads", "text/speech gradient norms and cosines per layer");
  an.config.attach(grads);
  grads->add_option("--checkpoint", an.checkpoint, "policy checkpoint")->required();
  grads->add_option("--sequences", an.sequences, "JSONL sequences (default: task demonstrations)");
  grads->add_option("--csv", an.csv, "also write per-sequence rows as CSV");
  auto* dlogp = analyze->add_subcommand("dlogp", "teacher-forcing log-prob shift, tuned minus base");
  an.config.attach(dlogp);
  dlogp->add_option("--base", an.base, "base checkpoint")->required();
  dlogp->add_option("--tuned", an.tuned, "tuned checkpoint")->required();
  dlogp->add_option("--sequences", an.sequences, "JSONL sequences (default: task demonstrations)");
  dlogp->add_option("--csv", an.csv, "also write per-position rows as CSV");
  auto* diversity = analyze->add_subcommand("diversity", "per-id score variance across repeated samples");
  an.config.attach(diversity);
  diversity->add_option("--scores", an.scores, "JSONL {id, semantic, acoustic} rows");
  diversity->add_option("--checkpoint", an.checkpoint, "sample and judge this checkpoint instead");
  diversity->add_option("-n,--samples", an.samples, "samples per prompt with --checkpoint")
      ->capture_default_str();
  diversity->add_option("--csv", an.csv, "also write per-id rows as CSV");
  auto* agree = analyze->add_subcommand("agreement", "judge versus human agreement per axis");
  agree->add_option("--scores", an.scores, "JSONL agreement rows")->required();
  agree->add_option("--csv", an.csv, "also write the metric table as CSV");
  auto* sign = analyze->add_subcommand("signtest", "majority vote and two-sided sign test");
  sign->add_option("--votes", an.votes, "JSONL {id, semantic: [...], acoustic: [...]} rows");
  sign->add_option("--wins", an.wins, "wins, with --losses instead of a vote file");
  sign->add_option("--losses", an.losses, "losses");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train);
    if (pairs_cmd->parsed()) return cmd_build_pairs(pairs);
    if (eval_cmd->parsed()) return cmd_eval(eval);
    if (grads->parsed()) return cmd_grads(an);
    if (dlogp->parsed()) return cmd_dlogp(an);
    if (diversity->parsed()) return cmd_diversity(an);
    if (agree->parsed()) return cmd_agreement(an);
    if (sign->parsed()) return cmd_signtest(an);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
