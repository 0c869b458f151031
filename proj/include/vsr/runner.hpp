#ifndef VSR_RUNNER_HPP
#define VSR_RUNNER_HPP

// Command-line driver. Every subcommand reads from and writes to one run
// directory:
//   checkpoints/  policy parameters
//   data/         datasets, candidate pools, curated sets
//   logs/         config echoes, traces, rollout logs
//   reports/      evaluation records, LSR, CSV/JSON/SVG reports

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vsr/checkpoint.hpp"
#include "vsr/config.hpp"
#include "vsr/evalharness.hpp"
#include "vsr/grpo.hpp"
#include "vsr/judge.hpp"
#include "vsr/pipeline.hpp"
#include "vsr/report.hpp"

namespace vsr {

struct RunDir {
  fs::path root;
  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path data() const { return root / "data"; }
  fs::path logs() const { return root / "logs"; }
  fs::path reports() const { return root / "reports"; }
};

inline PolicyParameters load_or_init(const std::string& ckpt, const EnvConfig& env) {
  if (ckpt.empty()) return init_params(Architecture::for_env(env), 0, 0.0);
  auto p = load_checkpoint(ckpt);
  if (!(p.arch == Architecture::for_env(env)))
    throw ArchitectureMismatch("checkpoint " + ckpt + " was built for a different environment");
  return p;
}

inline void echo_config(const RunDir& d, const std::string& stage, const RunConfig& c,
                        const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j = {{"stage", stage}, {"config", to_json(c)}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_json(d.logs() / (stage + "_config.json"), j);
}

inline int cmd_gen_data(const RunConfig& c, const RunDir& d) {
  const auto train = generate_dataset(c.master_seed, c.data.train_size, c.env, "train");
  const auto eval = generate_dataset(c.master_seed, c.data.eval_size, c.env, "eval");
  const auto curate = generate_dataset(c.master_seed, c.data.curate_size, c.env, "curate");
  save_dataset(d.data() / "train.jsonl", train);
  save_dataset(d.data() / "eval.jsonl", eval);
  save_dataset(d.data() / "curate.jsonl", curate);
  echo_config(d, "gen-data", c);
  std::cout << "wrote " << train.size() << " train, " << eval.size() << " eval, " << curate.size()
            << " curation samples to " << d.data().string() << "\n";
  return 0;
}

inline int cmd_curate(const RunConfig& c, const RunDir& d, const std::string& generator) {
  const auto data = load_dataset(d.data() / "curate.jsonl");
  const auto params = load_or_init(generator, c.env);
  const std::vector<PromptKind> kinds{PromptKind::SeeThink, PromptKind::CaptionReasoner,
                                      PromptKind::VisionReasoner};
  CandidateConfig cc;
  cc.per_sample = c.curation.per_sample;
  cc.seed = c.stage_seed("curation");
  const auto pool = generate_candidates(params, data, kinds, cc);
  const Verifier verifier =
      c.curation.verifier == "oracle" ? Verifier{OracleVerifier{c.env}} : Verifier{PolicyVerifier{params}};
  FilterStats stats;
  const auto kept = filter_two_stage(pool, verifier, &stats);
  const auto failures = audit_see_think(kept, c.env);
  auto to = [](const CuratedExample& e) { return to_json(e); };
  write_jsonl(d.data() / "candidates.jsonl", pool, to);
  write_jsonl(d.data() / "curated.jsonl", kept, to);
  write_json(d.reports() / "curation_manifest.json",
             {{"pool_size", pool.size()},
              {"retained", kept.size()},
              {"verifier", c.curation.verifier},
              {"see_think_audit_failures", failures},
              {"per_subset", to_json(stats)}});
  echo_config(d, "curate", c, {{"generator", generator}});
  std::cout << "retained " << kept.size() << " of " << pool.size()
            << " candidates; see-think audit failures: " << failures << "\n";
  return 0;
}

inline int cmd_sft(const RunConfig& c, const RunDir& d, const std::string& init, const std::string& out) {
  const auto curated = read_jsonl(d.data() / "curated.jsonl",
                                  [](const nlohmann::json& j) { return curated_from_json(j); });
  const auto params = load_or_init(init, c.env);
  SftConfig sc{c.curation.sft_epochs, c.curation.sft_step_size, c.curation.sft_batch, c.stage_seed("sft")};
  const auto res = sft_warm_start(params, curated, sc);
  save_checkpoint(d.checkpoints() / (out + ".ckpt"), res.params);
  write_json(d.logs() / (out + "_loglik.json"), {{"examples", curated.size()}, {"loglik", res.loglik}});
  echo_config(d, "sft", c, {{"init", init}, {"out", out}});
  std::cout << "warm start on " << curated.size() << " examples; mean log-likelihood";
  for (double v : res.loglik) std::cout << " " << fmt_num(v, "%.4f");
  std::cout << "\n";
  return 0;
}

inline int cmd_train(RunConfig c, const RunDir& d, const std::string& init, const std::string& name,
                     bool log_rollouts) {
  const auto data = load_dataset(d.data() / "train.jsonl");
  const auto params = load_or_init(init, c.env);
  c.train.seed = c.stage_seed("rollout");
  std::string rollouts;
  TrainHooks hooks;
  if (log_rollouts)
    hooks.on_group = [&](int step, const RolloutGroup& g) { rollouts += to_json(step, g).dump() + "\n"; };
  const auto res = train_loop(c.train, data, params, hooks);
  save_checkpoint(d.checkpoints() / (name + ".ckpt"), res.params);
  write_jsonl(d.logs() / (name + "_trace.jsonl"), res.trace.steps,
              [](const StepRecord& s) { return to_json(s); });
  if (log_rollouts) write_file(d.logs() / (name + "_rollouts.jsonl"), rollouts);
  echo_config(d, "train_" + name, c, {{"init", init}});
  std::cout << "trained " << res.trace.steps.size() << " steps -> "
            << (d.checkpoints() / (name + ".ckpt")).string() << "\n";
  return 0;
}

inline int cmd_eval(const RunConfig& c, const RunDir& d, const std::string& ckpt, const std::string& name) {
  const auto data = load_dataset(d.data() / "eval.jsonl");
  const auto params = load_or_init(ckpt, c.env);
  EvalOptions opt;
  opt.decode = c.eval.decode == "greedy" ? Decode::Greedy : Decode::Sample;
  opt.samples_per_question = c.eval.samples_per_question;
  opt.seed = c.stage_seed("eval");
  opt.threads = c.train.threads;
  auto records = evaluate_records(params, data, opt);
  nlohmann::json extra = {{"checkpoint", ckpt}};
  if (c.eval.judge == "remote") {
    const auto st = judge_records_remote(c.judge, records);
    extra["remote_judge"] = {{"judged", st.judged}, {"unavailable", st.unavailable}, {"malformed", st.malformed}};
  }
  write_jsonl(d.reports() / (name + "_eval.jsonl"), records, [](const EvalRecord& r) { return to_json(r); });
  const double acc = accuracy_of(records);
  write_json(d.reports() / (name + "_accuracy.json"), {{"accuracy", acc}, {"records", records.size()}});
  echo_config(d, "eval_" + name, c, extra);
  std::cout << "accuracy " << fmt_num(acc, "%.4f") << " over " << records.size() << " records\n";
  return 0;
}

inline int cmd_lsr(const RunConfig& c, const RunDir& d, const std::string& name) {
  const auto records = read_jsonl(d.reports() / (name + "_eval.jsonl"),
                                  [](const nlohmann::json& j) { return eval_record_from_json(j); });
  const auto rep = compute_lsr(records);
  write_json(d.reports() / (name + "_lsr.json"), to_json(rep));
  echo_config(d, "lsr_" + name, c);
  std::cout << "LSR " << fmt_num(rep.lsr, "%.4f") << " (" << rep.shortcut_count << "/" << rep.total
            << ", excluded " << rep.excluded << ")\n";
  return 0;
}

inline int cmd_report(const RunConfig& c, const RunDir& d, const std::string& name) {
  TrainingTrace trace;
  trace.steps = read_jsonl(d.logs() / (name + "_trace.jsonl"),
                           [](const nlohmann::json& j) { return step_record_from_json(j); });
  nlohmann::json extra = {{"config", to_json(c)}, {"name", name}};
  if (fs::exists(d.reports() / (name + "_accuracy.json")))
    extra["final_accuracy"] = read_json(d.reports() / (name + "_accuracy.json")).at("accuracy");
  if (fs::exists(d.reports() / (name + "_lsr.json"))) extra["lsr"] = read_json(d.reports() / (name + "_lsr.json"));
  const auto paths = emit_report(trace, extra, d.reports() / name);
  std::cout << "wrote " << paths.csv.string() << ", " << paths.summary.string() << ", "
            << paths.svg.string() << "\n";
  return 0;
}

/// Parses argv, runs one subcommand, and maps errors to exit codes:
/// 0 success, 1 runtime error, 2 usage error.
inline int run_cli(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Self-rewarding GRPO on a synthetic grid-scene VQA world", "vsr"};
  app.require_subcommand(1);

  std::string config_file, run_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "JSON run config; flags override its values");
    sub->add_option("--run-dir", run_dir, "run directory (default: output_dir from config)");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--threads", threads, "worker threads");
  };

  auto* gen = app.add_subcommand("gen-data", "build the synthetic train/eval/curation datasets");
  common(gen);
  std::optional<std::size_t> train_size, eval_size, curate_size;
  gen->add_option("--train-size", train_size);
  gen->add_option("--eval-size", eval_size);
  gen->add_option("--curate-size", curate_size);

  auto* curate = app.add_subcommand("curate", "generate candidates and apply two-stage filtration");
  common(curate);
  std::string generator;
  std::optional<std::string> verifier;
  std::optional<int> per_sample;
  curate->add_option("--generator", generator, "checkpoint of the candidate generator (default: zero policy)");
  curate->add_option("--verifier", verifier, "oracle | policy")->check(CLI::IsMember({"oracle", "policy"}));
  curate->add_option("--per-sample", per_sample, "candidates per sample and prompt kind");

  auto* sft = app.add_subcommand("sft", "warm start on the curated set");
  common(sft);
  std::string sft_init, sft_out = "sft";
  std::optional<int> epochs;
  std::optional<double> sft_step;
  sft->add_option("--init", sft_init, "initial checkpoint (default: zero policy)");
  sft->add_option("--out", sft_out, "output checkpoint name");
  sft->add_option("--epochs", epochs);
  sft->add_option("--step-size", sft_step);

  auto* train = app.add_subcommand("train", "GRPO training");
  common(train);
  std::string train_init, reward = "full";
  std::optional<std::string> train_name;
  std::optional<int> steps, k_group;
  std::optional<double> lr;
  bool log_rollouts = false;
  train->add_option("--init", train_init, "initial checkpoint (default: zero policy)");
  train->add_option("--reward", reward, "full | answer-only")->check(CLI::IsMember({"full", "answer-only"}));
  train->add_option("--name", train_name, "run name (default: the reward setting)");
  train->add_option("--steps", steps);
  train->add_option("--group-size", k_group);
  train->add_option("--step-size", lr);
  train->add_flag("--log-rollouts", log_rollouts, "write every rollout group to logs/");

  auto* eval = app.add_subcommand("eval", "first-pass evaluation with oracle or remote judging");
  common(eval);
  std::string eval_ckpt, eval_name = "eval";
  std::optional<std::string> decode, judge, judge_url;
  std::optional<int> samples;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate (default: zero policy)");
  eval->add_option("--name", eval_name, "record-set name");
  eval->add_option("--decode", decode)->check(CLI::IsMember({"greedy", "sample"}));
  eval->add_option("--samples", samples, "samples per question when decoding by sampling");
  eval->add_option("--judge", judge)->check(CLI::IsMember({"oracle", "remote"}));
  eval->add_option("--judge-url", judge_url);

  auto* lsr = app.add_subcommand("lsr", "language shortcut rate of an evaluated record set");
  common(lsr);
  std::string lsr_name = "eval";
  lsr->add_option("--name", lsr_name);

  auto* report = app.add_subcommand("report", "CSV, JSON and SVG report for a training run");
  common(report);
  std::string report_name = "full";
  report->add_option("--name", report_name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    RunConfig c;
    if (!config_file.empty()) c = run_config_from_json(read_json(config_file));
    if (seed) c.master_seed = *seed;
    if (threads) c.train.threads = *threads;
    if (!run_dir.empty()) c.output_dir = run_dir;
    if (train_size) c.data.train_size = *train_size;
    if (eval_size) c.data.eval_size = *eval_size;
    if (curate_size) c.data.curate_size = *curate_size;
    if (verifier) c.curation.verifier = *verifier;
    if (per_sample) c.curation.per_sample = *per_sample;
    if (epochs) c.curation.sft_epochs = *epochs;
    if (sft_step) c.curation.sft_step_size = *sft_step;
    if (steps) c.train.steps = *steps;
    if (k_group) c.train.K = *k_group;
    if (lr) c.train.step_size = *lr;
    if (*train) c.train.use_visual_reward = reward == "full";
    if (decode) c.eval.decode = *decode;
    if (samples) c.eval.samples_per_question = *samples;
    if (judge) c.eval.judge = *judge;
    if (judge_url) c.judge.url = *judge_url;
    c.validate();
    const RunDir d{c.output_dir};

    if (*gen) return cmd_gen_data(c, d);
    if (*curate) return cmd_curate(c, d, generator);
    if (*sft) return cmd_sft(c, d, sft_init, sft_out);
    if (*train) return cmd_train(c, d, train_init, train_name.value_or(reward), log_rollouts);
    if (*eval) return cmd_eval(c, d, eval_ckpt, eval_name);
    if (*lsr) return cmd_lsr(c, d, lsr_name);
    if (*report) return cmd_report(c, d, report_name);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace vsr

#endif  // VSR_RUNNER_HPP
