// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include "omnihybrid/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <system_error>

namespace omnihybrid {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end || s.empty()) {
    throw ConfigError(key + ": cannot parse '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

struct Field {
  std::string key;
  std::string help;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename T>
Field number(std::string key, T ExperimentConfig::*section, auto member, std::string help) {
  Field f;
  f.key = key;
  f.help = std::move(help);
  f.get = [=](const ExperimentConfig& c) {
    const auto v = (c.*section).*member;
    if constexpr (std::is_floating_point_v<decltype(v)>) {
      return format_double(v);
    } else {
      return std::to_string(v);
    }
  };
  f.set = [=](ExperimentConfig& c, const std::string& s) {
    auto& ref = (c.*section).*member;
    ref = parse_number<std::remove_reference_t<decltype(ref)>>(key, s);
  };
  return f;
}

template <typename T>
Field flag(std::string key, T ExperimentConfig::*section, bool T::*member, std::string help) {
  Field f;
  f.key = key;
  f.help = std::move(help);
  f.get = [=](const ExperimentConfig& c) { return std::string((c.*section).*member ? "true" : "false"); };
  f.set = [=](ExperimentConfig& c, const std::string& s) { (c.*section).*member = parse_bool(key, s); };
  return f;
}

Field vocab_size(std::string key, int Vocabulary::*member, std::string help) {
  Field f;
  f.key = key;
  f.help = std::move(help);
  f.get = [=](const ExperimentConfig& c) { return std::to_string(c.model.vocab.*member); };
  f.set = [=](ExperimentConfig& c, const std::string& s) {
    c.model.vocab.*member = parse_number<int>(key, s);
  };
  return f;
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    // model
    t.push_back(vocab_size("model.text_size", &Vocabulary::text_size, "text vocabulary size V_T"));
    t.push_back(vocab_size("model.speech_size", &Vocabulary::speech_size,
                           "speech vocabulary size V_S"));
    t.push_back(number("model.window", &C::model, &ModelConfig::window, "context window W"));
    t.push_back(number("model.embed_dim", &C::model, &ModelConfig::embed_dim, "embedding width"));
    t.push_back(number("model.hidden", &C::model, &ModelConfig::hidden, "hidden layer width"));
    t.push_back(number("model.init_seed", &C::model, &ModelConfig::init_seed, "parameter init seed"));
    t.push_back(number("model.embed_init_scale", &C::model, &ModelConfig::embed_init_scale,
                       "embedding init std"));
    t.push_back(number("model.hidden_init_scale", &C::model, &ModelConfig::hidden_init_scale,
                       "hidden layer init std"));
    t.push_back(number("model.text_per_cycle", &C::model, &ModelConfig::text_per_cycle,
                       "text slots per generation cycle"));
    t.push_back(number("model.speech_per_cycle", &C::model, &ModelConfig::speech_per_cycle,
                       "speech slots per generation cycle"));
    t.push_back(number("model.max_response_length", &C::model, &ModelConfig::max_response_length,
                       "response length cap"));
    // objectives
    t.push_back(number("objectives.epsilon_clip", &C::grpo, &GRPOConfig::epsilon_clip,
                       "GRPO ratio clip"));
    t.push_back(number("objectives.beta_text", &C::grpo, &GRPOConfig::beta_text,
                       "KL weight on text positions"));
    t.push_back(number("objectives.beta_speech", &C::grpo, &GRPOConfig::beta_speech,
                       "KL weight on speech positions"));
    t.push_back(number("objectives.advantage_epsilon", &C::grpo, &GRPOConfig::advantage_epsilon,
                       "std floor in group advantages"));
    t.push_back(flag("objectives.kl_on_speech_when_text_only", &C::grpo,
                     &GRPOConfig::kl_on_speech_when_text_only,
                     "keep the speech KL term under text-only masking"));
    t.push_back(number("objectives.dpo_gamma", &C::dpo, &DPOConfig::gamma, "DPO temperature"));
    // gate
    t.push_back(number("gate.k", &C::gate, &GateConfig::k, "direction gate slope"));
    t.push_back(number("gate.lambda_max", &C::gate, &GateConfig::lambda_max, "cap on lambda"));
    t.push_back(number("gate.alpha", &C::gate, &GateConfig::alpha, "EMA coefficient"));
    t.push_back(number("gate.neutral", &C::gate, &GateConfig::neutral, "neutral reward level"));
    t.push_back(number("gate.likert_max_var", &C::gate, &GateConfig::likert_max_var,
                       "variance normalizer"));
    // judge
    t.push_back(number("judge.noise_sigma_semantic", &C::judge, &JudgeConfig::noise_sigma_semantic,
                       "semantic score noise std"));
    t.push_back(number("judge.noise_sigma_acoustic", &C::judge, &JudgeConfig::noise_sigma_acoustic,
                       "acoustic score noise std"));
    t.push_back(number("judge.pair_lambda", &C::judge, &JudgeConfig::pair_lambda,
                       "semantic weight in the utility"));
    t.push_back(number("judge.margin_delta", &C::judge, &JudgeConfig::margin_delta,
                       "minimum utility gap for a pair"));
    t.push_back(number("judge.seed", &C::judge, &JudgeConfig::seed, "judge noise seed"));
    // train
    {
      Field f;
      f.key = "train.recipe";
      f.help =
          "sft_only | grpo_full | grpo_text | dpo_full | dpo_text | hybrid_dynamic | hybrid_fixed";
      f.get = [](const C& c) { return std::string(recipe_name(c.train.recipe)); };
      f.set = [](C& c, const std::string& s) {
        try {
          c.train.recipe = parse_recipe(s);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("train.recipe: ") + e.what());
        }
      };
      t.push_back(std::move(f));
    }
    t.push_back(number("train.fixed_lambda", &C::train, &TrainConfig::fixed_lambda,
                       "lambda for hybrid_fixed"));
    t.push_back(number("train.steps", &C::train, &TrainConfig::steps, "training steps"));
    t.push_back(number("train.group_size", &C::train, &TrainConfig::group_size, "rollouts per step G"));
    t.push_back(number("train.temperature", &C::train, &TrainConfig::temperature,
                       "sampling temperature"));
    t.push_back(number("train.top_p", &C::train, &TrainConfig::top_p, "nucleus mass"));
    t.push_back(number("train.learning_rate", &C::train, &TrainConfig::learning_rate,
                       "gradient descent step size"));
    t.push_back(number("train.seed", &C::train, &TrainConfig::seed, "run seed"));
    t.push_back(number("train.refresh_interval", &C::train, &TrainConfig::refresh_interval,
                       "steps between behavior-policy refreshes"));
    t.push_back(number("train.eval_interval", &C::train, &TrainConfig::eval_interval,
                       "steps between evaluations (0: final only)"));
    t.push_back(number("train.pretrain_steps", &C::train, &TrainConfig::pretrain_steps,
                       "base-model pretraining steps"));
    t.push_back(number("train.pretrain_learning_rate", &C::train,
                       &TrainConfig::pretrain_learning_rate, "base-model pretraining step size"));
    t.push_back(number("train.pair_samples", &C::train, &TrainConfig::pair_samples,
                       "candidates per prompt for preference pairs"));
    // task
    t.push_back(number("task.num_prompts", &C::task, &TaskConfig::num_prompts, "prompt count"));
    t.push_back(number("task.prompt_length", &C::task, &TaskConfig::prompt_length,
                       "tokens per prompt"));
    t.push_back(number("task.answer_length", &C::task, &TaskConfig::answer_length,
                       "text tokens per answer"));
    t.push_back(number("task.style_period", &C::task, &TaskConfig::style_period,
                       "length of the reference speech cycle"));
    t.push_back(number("task.seed", &C::task, &TaskConfig::seed, "task generation seed"));
    return t;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::pair<std::string, std::string> split_assignment(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key = value, got '" + line + "'");
  return {trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  grpo.validate();
  dpo.validate();
  gate.validate();
  judge.validate();
  train.validate();
  task.validate(model);
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
  return emit_config(*this) == emit_config(other);
}

std::vector<ConfigKey> config_keys() {
  const ExperimentConfig defaults;
  std::vector<ConfigKey> out;
  for (const auto& f : fields()) out.push_back({f.key, f.get(defaults), f.help});
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    try {
      const auto [key, value] = split_assignment(line);
      if (!seen.insert(key).second) throw ConfigError("duplicate key '" + key + "'");
      find_field(key).set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::vector<std::pair<std::string, std::string>> config_items(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

std::string emit_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& [key, value] : config_items(cfg)) {
    const std::string s = key.substr(0, key.find('.'));
    if (s != section) {
      if (!section.empty()) out += "\n";
      section = s;
    }
    out += key + " = " + value + "\n";
  }
  return out;
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto [key, value] = split_assignment(assignment);
  find_field(key).set(cfg, value);
}

}  // namespace omnihybrid
