#ifndef VSR_GRPO_HPP
#define VSR_GRPO_HPP

// Group-relative policy optimization: group sampling with the two-pass
// reward, mean-centred advantages, the KL-regularized surrogate and its exact
// gradient, and the training loop.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsr/errors.hpp"
#include "vsr/parallel.hpp"
#include "vsr/policy.hpp"
#include "vsr/reward.hpp"
#include "vsr/rng.hpp"
#include "vsr/scene.hpp"

namespace vsr {

inline std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw ConfigError("a group needs at least two rewards");
  double sum = 0.0;
  for (double r : rewards) sum += r;
  const double mean = sum / static_cast<double>(rewards.size());
  std::vector<double> adv(rewards.size());
  for (std::size_t k = 0; k < rewards.size(); ++k) adv[k] = rewards[k] - mean;
  return adv;
}

struct RewardConfig {
  double alpha = 0.5;
  // false: the answer + format ablation. The second pass still runs so its
  // success rate can be logged, but it does not enter the reward.
  bool use_visual = true;
  TagScheme scheme = TagScheme::see_think();
};

struct ScoredRollout {
  Rollout rollout;
  RewardBreakdown reward;
  int visual_probe = 0;  // second-pass success, whether or not it is rewarded
};

struct RolloutGroup {
  std::uint64_t question_id = 0;
  std::vector<ScoredRollout> samples;
  std::vector<double> rewards;
  std::vector<double> advantages;

  std::size_t size() const { return samples.size(); }
};

inline ScoredRollout score_rollout(const PolicyParameters& params, Rollout r,
                                   const QuestionSpec& question, const RewardConfig& cfg) {
  ScoredRollout s;
  const int fmt = format_reward(r.response.raw, cfg.scheme);
  const auto answer = extract_answer(r.response.raw, cfg.scheme);
  const int ans = answer ? accuracy_reward(*answer, question.gold_answer) : 0;
  s.visual_probe = visual_self_reward(params, extract_perception(r.response.raw, cfg.scheme),
                                      question, question.gold_answer);
  s.reward = total_reward(fmt, ans, cfg.use_visual ? s.visual_probe : 0, cfg.alpha);
  s.rollout = std::move(r);
  return s;
}

inline RolloutGroup rollout_group(const PolicyParameters& params, const MultimodalSample& sample,
                                  int K, const RewardConfig& cfg, std::uint64_t seed) {
  if (K < 2) throw ConfigError("group size K must be at least 2");
  RolloutGroup g;
  g.question_id = sample.id;
  for (int k = 0; k < K; ++k) {
    auto r = sample_first_pass(params, sample, derive_seed(seed, "sample", {static_cast<std::uint64_t>(k)}),
                               cfg.scheme);
    g.samples.push_back(score_rollout(params, std::move(r), sample.question, cfg));
    g.rewards.push_back(g.samples.back().reward.total);
  }
  g.advantages = group_advantages(g.rewards);
  return g;
}

inline std::vector<std::vector<Factor>> group_contexts(const RolloutGroup& g) {
  std::vector<std::vector<Factor>> out;
  out.reserve(g.size());
  for (const auto& s : g.samples) out.push_back(s.rollout.factors);
  return out;
}

struct GroupObjective {
  double value = 0.0;
  double kl = 0.0;
  std::vector<double> gradient;
};

/// Sum_k A_k log pi(s_k) - beta * KL for one group, KL taken in closed form
/// over the group's realized factor contexts.
inline GroupObjective group_objective(const PolicyParameters& params,
                                      const PolicySnapshot& reference, const RolloutGroup& g,
                                      double beta) {
  if (!(params.arch == reference.params().arch))
    throw ArchitectureMismatch("reference snapshot has a different architecture");
  GroupObjective out{0.0, 0.0, std::vector<double>(Architecture::size(), 0.0)};
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto& r = g.samples[k].rollout;
    if (r.record.arch_fingerprint != params.arch.fingerprint())
      throw ArchitectureMismatch("rollout was recorded under a different architecture");
    const double a = g.advantages[k];
    for (std::size_t f = 0; f < r.factors.size(); ++f)
      out.value += a * accumulate_logprob_grad(params.theta, r.factors[f], r.record.choices[f], a,
                                               out.gradient);
  }
  const auto contexts = group_contexts(g);
  const auto kl = kl_and_grad(params, reference, contexts);
  out.kl = kl.kl;
  out.value -= beta * kl.kl;
  for (std::size_t i = 0; i < out.gradient.size(); ++i) out.gradient[i] -= beta * kl.gradient[i];
  return out;
}

/// Surrogate objective summed over groups, with advantages held fixed.
inline double surrogate_objective(const PolicyParameters& params, const PolicySnapshot& reference,
                                  std::span<const RolloutGroup> groups, double beta) {
  double v = 0.0;
  for (const auto& g : groups) v += group_objective(params, reference, g, beta).value;
  return v;
}

inline std::vector<double> grpo_gradient(const PolicyParameters& params,
                                         const PolicySnapshot& reference,
                                         std::span<const RolloutGroup> groups, double beta) {
  if (groups.empty()) throw ConfigError("grpo_gradient needs at least one group");
  std::vector<double> grad(Architecture::size(), 0.0);
  for (const auto& g : groups) {
    const auto go = group_objective(params, reference, g, beta);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += go.gradient[i];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Training

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  int K = 8;
  double alpha = 0.5;
  double beta = 0.01;
  double step_size = 0.1;
  // Negative: one pass over the dataset.
  int steps = -1;
  std::uint64_t seed = 0;
  int batch = 4;
  double clip_norm = 10.0;  // <= 0 disables clipping
  Optimizer optimizer = Optimizer::Sgd;
  bool use_visual_reward = true;
  int threads = 1;
  int eval_every = 0;  // 0: no periodic evaluation snapshots

  void validate() const {
    if (K < 2) throw ConfigError("K must be at least 2");
    if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
    if (!(step_size > 0.0)) throw ConfigError("step_size must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (batch < 1) throw ConfigError("batch must be at least 1");
    if (threads < 1) throw ConfigError("threads must be at least 1");
  }
};

struct EvalSnapshot {
  double accuracy = 0.0;
  double self_contained = 0.0;
  double lsr = 0.0;
};

struct StepRecord {
  int step = 0;
  double mean_reward = 0.0;
  double mean_visual = 0.0;
  double mean_answer = 0.0;
  double format_rate = 0.0;
  double kl = 0.0;
  double grad_norm = 0.0;
  std::optional<EvalSnapshot> eval;
};

struct TrainingTrace {
  std::vector<StepRecord> steps;
};

struct TrainHooks {
  std::function<EvalSnapshot(const PolicyParameters&)> evaluate;
  std::function<void(int step, const RolloutGroup&)> on_group;
};

struct TrainResult {
  PolicyParameters params;
  TrainingTrace trace;
};

/// Gradient ascent on the surrogate. The reference snapshot is taken from the
/// initial parameters and never changes. Rollouts for the questions of one
/// step run on `threads` workers with per-question seeds, and their gradients
/// are summed in question order, so the result does not depend on the thread
/// count.
inline TrainResult train_loop(const TrainConfig& cfg, std::span<const MultimodalSample> dataset,
                              const PolicyParameters& initial, const TrainHooks& hooks = {}) {
  cfg.validate();
  initial.validate();
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  const PolicySnapshot reference(initial, "initial");
  PolicyParameters params = initial;
  TrainingTrace trace;

  const std::size_t n = dataset.size();
  const int steps = cfg.steps >= 0
                        ? cfg.steps
                        : static_cast<int>((n + static_cast<std::size_t>(cfg.batch) - 1) /
                                           static_cast<std::size_t>(cfg.batch));
  const RewardConfig rcfg{cfg.alpha, cfg.use_visual_reward, TagScheme::see_think()};
  const std::size_t dim = Architecture::size();
  std::vector<double> m(dim, 0.0), v(dim, 0.0);

  for (int step = 0; step < steps; ++step) {
    const auto batch = static_cast<std::size_t>(cfg.batch);
    std::vector<RolloutGroup> groups(batch);
    std::vector<GroupObjective> objectives(batch);
    parallel_for(batch, cfg.threads, [&](std::size_t b) {
      const auto& sample = dataset[(static_cast<std::size_t>(step) * batch + b) % n];
      groups[b] = rollout_group(params, sample, cfg.K, rcfg,
                                derive_seed(cfg.seed, "rollout",
                                            {static_cast<std::uint64_t>(step), b}));
      objectives[b] = group_objective(params, reference, groups[b], cfg.beta);
    });

    StepRecord rec;
    rec.step = step;
    std::vector<double> grad(dim, 0.0);
    double count = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < dim; ++i) grad[i] += objectives[b].gradient[i];
      rec.kl += objectives[b].kl / static_cast<double>(batch);
      for (const auto& s : groups[b].samples) {
        rec.mean_reward += s.reward.total;
        rec.mean_visual += s.visual_probe;
        rec.mean_answer += s.reward.r_ans;
        rec.format_rate += s.reward.r_fmt;
        count += 1.0;
      }
      if (hooks.on_group) hooks.on_group(step, groups[b]);
    }
    rec.mean_reward /= count;
    rec.mean_visual /= count;
    rec.mean_answer /= count;
    rec.format_rate /= count;

    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    rec.grad_norm = std::sqrt(norm2);
    if (!std::isfinite(rec.grad_norm))
      throw NonFiniteGradient("non-finite gradient at step " + std::to_string(step) +
                              " (kl=" + std::to_string(rec.kl) + ")");
    const double clip =
        (cfg.clip_norm > 0.0 && rec.grad_norm > cfg.clip_norm) ? cfg.clip_norm / rec.grad_norm : 1.0;

    if (cfg.optimizer == Optimizer::Sgd) {
      for (std::size_t i = 0; i < dim; ++i) params.theta[i] += cfg.step_size * clip * grad[i];
    } else {
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      const double t = step + 1.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double g = clip * grad[i];
        m[i] = b1 * m[i] + (1 - b1) * g;
        v[i] = b2 * v[i] + (1 - b2) * g * g;
        const double mh = m[i] / (1 - std::pow(b1, t));
        const double vh = v[i] / (1 - std::pow(b2, t));
        params.theta[i] += cfg.step_size * mh / (std::sqrt(vh) + eps);
      }
    }

    if (hooks.evaluate && cfg.eval_every > 0 &&
        ((step + 1) % cfg.eval_every == 0 || step + 1 == steps))
      rec.eval = hooks.evaluate(params);
    trace.steps.push_back(rec);
  }
  return {std::move(params), std::move(trace)};
}

// ---------------------------------------------------------------------------
// Logs

inline std::string_view name(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"K", c.K},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"step_size", c.step_size},
          {"steps", c.steps},
          {"seed", c.seed},
          {"batch", c.batch},
          {"clip_norm", c.clip_norm},
          {"optimizer", name(c.optimizer)},
          {"use_visual_reward", c.use_visual_reward},
          {"threads", c.threads},
          {"eval_every", c.eval_every}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.K = j.value("K", c.K);
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.step_size = j.value("step_size", c.step_size);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", c.seed);
  c.batch = j.value("batch", c.batch);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  if (j.contains("optimizer")) {
    const auto o = j.at("optimizer").get<std::string>();
    if (o != "sgd" && o != "adam") throw ConfigError("optimizer must be sgd or adam");
    c.optimizer = o == "adam" ? Optimizer::Adam : Optimizer::Sgd;
  }
  c.use_visual_reward = j.value("use_visual_reward", c.use_visual_reward);
  c.threads = j.value("threads", c.threads);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.validate();
  return c;
}

/// One rollout-log line.
inline nlohmann::json to_json(int step, const RolloutGroup& g) {
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto& s = g.samples[k];
    samples.push_back({{"raw", s.rollout.response.raw},
                       {"choices", s.rollout.record.choices},
                       {"logprob", s.rollout.record.total_logprob()},
                       {"reward", to_json(s.reward)},
                       {"visual_probe", s.visual_probe}});
  }
  return {{"step", step},
          {"question_id", g.question_id},
          {"rewards", g.rewards},
          {"advantages", g.advantages},
          {"samples", samples}};
}

}  // namespace vsr

#endif  // VSR_GRPO_HPP
