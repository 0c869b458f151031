#ifndef VSR_CONFIG_HPP
#define VSR_CONFIG_HPP

// Run configuration: one JSON document, every field defaulted. Stage seeds
// are derived from the master seed by stream name.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "vsr/errors.hpp"
#include "vsr/grpo.hpp"
#include "vsr/judge.hpp"
#include "vsr/pipeline.hpp"
#include "vsr/scene.hpp"

namespace vsr {

struct DataSettings {
  std::size_t train_size = 2000;
  std::size_t eval_size = 300;
  std::size_t curate_size = 167;
};

struct CurationSettings {
  int per_sample = 4;
  std::string verifier = "oracle";  // oracle | policy
  int sft_epochs = 5;
  double sft_step_size = 1e-2;
  std::size_t sft_batch = 32;
};

struct EvalSettings {
  std::string decode = "greedy";  // greedy | sample
  int samples_per_question = 1;
  std::string judge = "oracle";  // oracle | remote
};

struct RunConfig {
  std::uint64_t master_seed = 0;
  std::string output_dir = "runs/default";
  EnvConfig env;
  DataSettings data;
  TrainConfig train;
  CurationSettings curation;
  EvalSettings eval;
  JudgeEndpoint judge;

  std::uint64_t stage_seed(std::string_view stage) const { return derive_seed(master_seed, stage, {}); }

  void validate() const {
    env.validate();
    train.validate();
    if (data.train_size == 0 || data.eval_size == 0 || data.curate_size == 0)
      throw ConfigError("dataset sizes must be positive");
    if (curation.per_sample < 1) throw ConfigError("curation.per_sample must be at least 1");
    if (curation.verifier != "oracle" && curation.verifier != "policy")
      throw ConfigError("curation.verifier must be oracle or policy");
    if (curation.sft_epochs < 0 || !(curation.sft_step_size > 0.0) || curation.sft_batch == 0)
      throw ConfigError("invalid warm-start settings");
    if (eval.decode != "greedy" && eval.decode != "sample")
      throw ConfigError("eval.decode must be greedy or sample");
    if (eval.samples_per_question < 1) throw ConfigError("eval.samples_per_question must be positive");
    if (eval.judge != "oracle" && eval.judge != "remote")
      throw ConfigError("eval.judge must be oracle or remote");
    if (eval.judge == "remote" && judge.url.empty())
      throw ConfigError("eval.judge is remote but judge.url is empty");
    if (judge.attempts < 1 || judge.max_in_flight < 1 || judge.timeout_ms < 1 || judge.backoff_ms < 0)
      throw ConfigError("invalid judge settings");
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"master_seed", c.master_seed},
          {"output_dir", c.output_dir},
          {"env",
           {{"rows", c.env.rows},
            {"cols", c.env.cols},
            {"min_objects", c.env.min_objects},
            {"max_objects", c.env.max_objects},
            {"num_shapes", c.env.num_shapes},
            {"num_colors", c.env.num_colors},
            {"num_sizes", c.env.num_sizes}}},
          {"data",
           {{"train_size", c.data.train_size},
            {"eval_size", c.data.eval_size},
            {"curate_size", c.data.curate_size}}},
          {"train", to_json(c.train)},
          {"curation",
           {{"per_sample", c.curation.per_sample},
            {"verifier", c.curation.verifier},
            {"sft_epochs", c.curation.sft_epochs},
            {"sft_step_size", c.curation.sft_step_size},
            {"sft_batch", c.curation.sft_batch}}},
          {"eval",
           {{"decode", c.eval.decode},
            {"samples_per_question", c.eval.samples_per_question},
            {"judge", c.eval.judge}}},
          {"judge",
           {{"url", c.judge.url},
            {"token_env", c.judge.token_env},
            {"timeout_ms", c.judge.timeout_ms},
            {"attempts", c.judge.attempts},
            {"backoff_ms", c.judge.backoff_ms},
            {"max_in_flight", c.judge.max_in_flight},
            {"temperature", c.judge.temperature},
            {"max_tokens", c.judge.max_tokens}}}};
}

/// Missing keys keep their defaults; unknown top-level keys are rejected.
inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c = {}) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (k != "master_seed" && k != "output_dir" && k != "env" && k != "data" && k != "train" &&
        k != "curation" && k != "eval" && k != "judge")
      throw ConfigError("unknown config key '" + k + "'");
  try {
    c.master_seed = j.value("master_seed", c.master_seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("env")) {
      const auto& e = j["env"];
      c.env.rows = e.value("rows", c.env.rows);
      c.env.cols = e.value("cols", c.env.cols);
      c.env.min_objects = e.value("min_objects", c.env.min_objects);
      c.env.max_objects = e.value("max_objects", c.env.max_objects);
      c.env.num_shapes = e.value("num_shapes", c.env.num_shapes);
      c.env.num_colors = e.value("num_colors", c.env.num_colors);
      c.env.num_sizes = e.value("num_sizes", c.env.num_sizes);
    }
    if (j.contains("data")) {
      const auto& d = j["data"];
      c.data.train_size = d.value("train_size", c.data.train_size);
      c.data.eval_size = d.value("eval_size", c.data.eval_size);
      c.data.curate_size = d.value("curate_size", c.data.curate_size);
    }
    if (j.contains("train")) c.train = train_config_from_json(j["train"], c.train);
    if (j.contains("curation")) {
      const auto& u = j["curation"];
      c.curation.per_sample = u.value("per_sample", c.curation.per_sample);
      c.curation.verifier = u.value("verifier", c.curation.verifier);
      c.curation.sft_epochs = u.value("sft_epochs", c.curation.sft_epochs);
      c.curation.sft_step_size = u.value("sft_step_size", c.curation.sft_step_size);
      c.curation.sft_batch = u.value("sft_batch", c.curation.sft_batch);
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      c.eval.decode = e.value("decode", c.eval.decode);
      c.eval.samples_per_question = e.value("samples_per_question", c.eval.samples_per_question);
      c.eval.judge = e.value("judge", c.eval.judge);
    }
    if (j.contains("judge")) {
      const auto& g = j["judge"];
      c.judge.url = g.value("url", c.judge.url);
      c.judge.token_env = g.value("token_env", c.judge.token_env);
      c.judge.timeout_ms = g.value("timeout_ms", c.judge.timeout_ms);
      c.judge.attempts = g.value("attempts", c.judge.attempts);
      c.judge.backoff_ms = g.value("backoff_ms", c.judge.backoff_ms);
      c.judge.max_in_flight = g.value("max_in_flight", c.judge.max_in_flight);
      c.judge.temperature = g.value("temperature", c.judge.temperature);
      c.judge.max_tokens = g.value("max_tokens", c.judge.max_tokens);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace vsr

#endif  // VSR_CONFIG_HPP
