// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <string>
#include <vector>

#include "omnihybrid/analysis.h"
#include "omnihybrid/config.h"
#include "omnihybrid/experiment.h"
#include "omnihybrid/gate.h"
#include "omnihybrid/io.h"
#include "omnihybrid/judge.h"
#include "omnihybrid/model.h"
#include "omnihybrid/objectives.h"
#include "omnihybrid/sampling.h"
#include "omnihybrid/trainer.h"

namespace py = pybind11;
using namespace omnihybrid;

namespace {

py::array_t<double> to_array(std::span<const double> v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict eval_dict(const EvalMetrics& m) {
  py::dict d;
  d["mean_reward"] = m.mean_reward;
  d["mean_semantic"] = m.mean_semantic;
  d["mean_acoustic"] = m.mean_acoustic;
  d["speech_style_tv"] = m.speech_style_tv;
  return d;
}

ExperimentConfig config_from(const std::string& text, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = parse_config(text);
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mixed-modality post-training core";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_ArithmeticError);

  // ---- model ----

  py::enum_<Modality>(m, "Modality").value("TEXT", Modality::kText).value("SPEECH", Modality::kSpeech);

  py::class_<Vocabulary>(m, "Vocabulary")
      .def(py::init<>())
      .def_readwrite("text_size", &Vocabulary::text_size)
      .def_readwrite("speech_size", &Vocabulary::speech_size)
      .def_property_readonly("size", &Vocabulary::size)
      .def_property_readonly("bos", &Vocabulary::bos)
      .def_property_readonly("eos", &Vocabulary::eos);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("vocab", &ModelConfig::vocab)
      .def_readwrite("window", &ModelConfig::window)
      .def_readwrite("embed_dim", &ModelConfig::embed_dim)
      .def_readwrite("hidden", &ModelConfig::hidden)
      .def_readwrite("init_seed", &ModelConfig::init_seed)
      .def_readwrite("max_response_length", &ModelConfig::max_response_length)
      .def("slot_modality", &ModelConfig::slot_modality);

  py::class_<TokenSequence>(m, "TokenSequence")
      .def(py::init<>())
      .def(py::init([](std::vector<TokenId> prompt, std::vector<TokenId> response,
                       std::vector<Modality> modality) {
             return TokenSequence{std::move(prompt), std::move(response), std::move(modality), false};
           }),
           py::arg("prompt"), py::arg("response"), py::arg("modality"))
      .def_readwrite("prompt", &TokenSequence::prompt)
      .def_readwrite("response", &TokenSequence::response)
      .def_readwrite("modality", &TokenSequence::modality)
      .def_readwrite("truncated", &TokenSequence::truncated)
      .def("__len__", &TokenSequence::length)
      .def("text_positions", &TokenSequence::text_positions)
      .def("speech_positions", &TokenSequence::speech_positions)
      .def("validate", &TokenSequence::validate)
      .def(py::self == py::self);

  py::class_<PolicyParams>(m, "PolicyParams")
      .def_static("initialize", &PolicyParams::initialize)
      .def_static("zeros", &PolicyParams::zeros)
      .def_property_readonly("config", &PolicyParams::config)
      .def("__len__", &PolicyParams::size)
      .def("layers", [](const PolicyParams& p) {
        py::list out;
        for (const auto& seg : p.layout()) out.append(py::make_tuple(seg.name, seg.shape));
        return out;
      })
      .def("values", [](const PolicyParams& p) { return to_array(p.values()); })
      .def("set_values",
           [](PolicyParams& p, py::array_t<double, py::array::c_style | py::array::forcecast> v) {
             if (static_cast<size_t>(v.size()) != p.size()) throw py::value_error("size mismatch");
             std::copy(v.data(), v.data() + v.size(), p.values().begin());
           })
      .def(py::self == py::self);

  m.def("token_logprobs", &token_logprobs);
  m.def("logprob_partitioned", [](const PolicyParams& p, const TokenSequence& s) {
    const auto lp = logprob_partitioned(p, s);
    return py::make_tuple(lp.text, lp.speech);
  });

  // ---- sampling ----

  m.def("sampling_distribution",
        [](const std::vector<double>& logits, const std::vector<bool>& allowed, double temperature,
           double top_p) { return sampling_distribution(logits, allowed, temperature, top_p); },
        py::arg("logits"), py::arg("allowed") = std::vector<bool>{}, py::arg("temperature") = 1.0,
        py::arg("top_p") = 1.0);
  m.def("sample_group", &sample_group, py::arg("params"), py::arg("prompt"), py::arg("group_size"),
        py::arg("temperature"), py::arg("top_p"), py::arg("seed"));
  m.def("greedy_decode", &greedy_decode);

  // ---- objectives ----

  m.def("sft_loss", [](const PolicyParams& p, const TokenSequence& s) { return sft_loss(p, s); });
  m.def("sft_grad", [](const PolicyParams& p, const TokenSequence& s) {
    const auto g = grad_of_scalar(p, objective::Sft{s});
    return to_array(g);
  });
  m.def("masked_score", &masked_score);
  m.def("mask_positions", [](const TokenSequence& s, bool text_only) {
    return mask_positions(s, text_only ? MaskRule::kTextOnly : MaskRule::kAll);
  }, py::arg("seq"), py::arg("text_only") = false);
  m.def("group_advantages", &group_advantages, py::arg("rewards"), py::arg("advantage_epsilon") = 1e-6);
  m.def("dpo_loss", [](double delta, double gamma) {
    DPOConfig cfg;
    cfg.gamma = gamma;
    cfg.validate();
    return dpo_loss(delta, cfg);
  }, py::arg("delta"), py::arg("gamma") = 0.1);

  // ---- gate ----

  py::class_<GateConfig>(m, "GateConfig")
      .def(py::init<>())
      .def_readwrite("k", &GateConfig::k)
      .def_readwrite("lambda_max", &GateConfig::lambda_max)
      .def_readwrite("alpha", &GateConfig::alpha);

  py::class_<GateState>(m, "GateState")
      .def(py::init<>())
      .def_readwrite("lambda_prev", &GateState::lambda_prev)
      .def_readwrite("step_index", &GateState::step_index);

  m.def("normalized_variance", &normalized_variance, py::arg("rewards"), py::arg("cfg") = GateConfig{});
  m.def("direction_gate", &direction_gate, py::arg("rewards"), py::arg("cfg") = GateConfig{});
  m.def("raw_lambda", &raw_lambda, py::arg("rewards"), py::arg("cfg") = GateConfig{});
  m.def("gate_step", [](const GateState& s, const std::vector<double>& rewards, const GateConfig& cfg) {
    const auto r = gate_step(s, rewards, cfg);
    return py::make_tuple(r.lambda, r.state);
  }, py::arg("state"), py::arg("rewards"), py::arg("cfg") = GateConfig{});

  // ---- judge ----

  py::class_<JudgeConfig>(m, "JudgeConfig")
      .def(py::init<>())
      .def_readwrite("noise_sigma_semantic", &JudgeConfig::noise_sigma_semantic)
      .def_readwrite("noise_sigma_acoustic", &JudgeConfig::noise_sigma_acoustic)
      .def_readwrite("pair_lambda", &JudgeConfig::pair_lambda)
      .def_readwrite("margin_delta", &JudgeConfig::margin_delta)
      .def_readwrite("seed", &JudgeConfig::seed);

  py::class_<JudgeScore>(m, "JudgeScore")
      .def(py::init<double, double>(), py::arg("semantic"), py::arg("acoustic"))
      .def_readwrite("semantic", &JudgeScore::semantic)
      .def_readwrite("acoustic", &JudgeScore::acoustic);

  m.def("utility", &utility);
  m.def("select_pair_indices", &select_pair_indices);

  // ---- analysis ----

  m.def("pearson", &pearson);
  m.def("spearman", &spearman);
  m.def("average_ranks", &average_ranks);
  m.def("sign_test", &sign_test, py::arg("wins"), py::arg("losses"));
  m.def("per_id_variance", [](const std::vector<std::string>& ids, const std::vector<double>& scores) {
    if (ids.size() != scores.size()) throw py::value_error("ids and scores differ in length");
    std::vector<IdScore> rows;
    for (size_t i = 0; i < ids.size(); ++i) rows.push_back({ids[i], scores[i]});
    const VarianceReport r = per_id_variance(rows);
    return py::make_tuple(r.per_id, r.dataset);
  });

  // ---- config, training, io ----

  m.def("default_config", [] { return emit_config(ExperimentConfig{}); });
  m.def("normalize_config", [](const std::string& text, const std::vector<std::string>& overrides) {
    return emit_config(config_from(text, overrides));
  }, py::arg("text"), py::arg("overrides") = std::vector<std::string>{});

  m.def("train", [](const std::string& text, const std::vector<std::string>& overrides) {
    const Experiment exp = make_experiment(config_from(text, overrides));
    py::gil_scoped_release release;
    RunResult r = train_loop(exp.config.model, exp.context());
    py::gil_scoped_acquire acquire;
    py::dict out;
    out["final_eval"] = eval_dict(r.final_eval);
    out["lambda_trajectory"] = r.lambda_trajectory;
    out["steps"] = r.log.size();
    out["final_params"] = r.final_params;
    out["base_params"] = r.base;
    return out;
  }, py::arg("config") = std::string(), py::arg("overrides") = std::vector<std::string>{});

  m.def("run_training", [](const std::string& text, const std::vector<std::string>& overrides,
                           const std::string& dir) {
    const Experiment exp = make_experiment(config_from(text, overrides));
    py::gil_scoped_release release;
    return run_training(exp, dir).final_sha1;
  }, py::arg("config"), py::arg("overrides"), py::arg("run_dir"));

  m.def("save_checkpoint", &save_checkpoint);
  m.def("load_checkpoint", &load_checkpoint);
  m.def("checkpoint_bytes", [](const PolicyParams& p) { return py::bytes(checkpoint_bytes(p)); });
  m.def("git_blob_sha1", [](const py::bytes& b) { return git_blob_sha1(std::string(b)); });
}
