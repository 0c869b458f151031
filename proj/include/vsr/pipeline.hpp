#ifndef VSR_PIPELINE_HPP
#define VSR_PIPELINE_HPP

// Cold-start curation: candidate generation for the three SFT subsets,
// two-stage filtration, and a maximum-likelihood warm start.
//
// Subsets:
//   see-think         (image, question) -> perception, think, answer
//   caption-reasoner  (perception text, question) -> think, answer; no image
//   visual-reasoner   (image, question) -> think, answer; no perception
// Stage 1 drops malformed outputs and wrong answers. Stage 2 (see-think and
// caption-reasoner) drops examples whose perception fails the verifier.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsr/errors.hpp"
#include "vsr/perception.hpp"
#include "vsr/policy.hpp"
#include "vsr/prompts.hpp"
#include "vsr/reward.hpp"
#include "vsr/rng.hpp"
#include "vsr/scene.hpp"
#include "vsr/structured_output.hpp"

namespace vsr {

enum class Subset { CaptionReasoner, SeeThink, VisualReasoner };

inline std::string_view name(Subset s) {
  switch (s) {
    case Subset::CaptionReasoner: return "caption-reasoner";
    case Subset::SeeThink: return "see-think";
    case Subset::VisualReasoner: return "visual-reasoner";
  }
  return "?";
}

inline std::optional<Subset> parse_subset(std::string_view s) {
  for (auto v : {Subset::CaptionReasoner, Subset::SeeThink, Subset::VisualReasoner})
    if (name(v) == s) return v;
  return std::nullopt;
}

inline Subset subset_for(PromptKind k) {
  switch (k) {
    case PromptKind::SeeThink: return Subset::SeeThink;
    case PromptKind::CaptionReasoner: return Subset::CaptionReasoner;
    case PromptKind::VisionReasoner: return Subset::VisualReasoner;
    case PromptKind::Judge: break;
  }
  throw ConfigError("the judge prompt does not produce curation candidates");
}

struct CuratedExample {
  Subset subset = Subset::SeeThink;
  PromptKind prompt_kind = PromptKind::SeeThink;
  MultimodalSample sample;
  std::string prompt;
  std::string raw;
  // See-think: the perception segment. Caption-reasoner: the description it
  // reasons over. Visual-reasoner: empty.
  std::string perception;
  std::string answer;
  bool format_ok = false;
  TrajectoryRecord record;
  std::optional<bool> answer_ok;
  std::optional<bool> perception_ok;

  RolloutContext context() const {
    switch (subset) {
      case Subset::SeeThink: return RolloutContext::multimodal(sample);
      case Subset::VisualReasoner: return RolloutContext::vision_cot(sample);
      case Subset::CaptionReasoner: return RolloutContext::text_only(perception, sample.question);
    }
    return {};
  }
};

/// `<think>t</think> \boxed{a}` with nothing else but whitespace.
inline std::string render_cot(const std::string& reasoning, const std::string& answer) {
  return "<think>" + reasoning + "</think> \\boxed{" + answer + "}";
}

inline std::optional<std::string> parse_cot(std::string_view raw) {
  TagScheme s = TagScheme::description_boxed();
  // Reuse the three-segment grammar with a blank perception placeholder.
  const std::string wrapped = s.perception_open + "-" + s.perception_close + std::string(raw);
  auto r = parse_response(wrapped, s);
  if (auto* ok = std::get_if<StructuredResponse>(&r)) return ok->answer;
  return std::nullopt;
}

struct CandidateConfig {
  int per_sample = 4;
  std::uint64_t seed = 0;
  TagScheme scheme = TagScheme::description_boxed();
};

/// `per_sample` candidates for every (sample, kind), deterministic under seed.
inline std::vector<CuratedExample> generate_candidates(const PolicyParameters& params,
                                                       std::span<const MultimodalSample> dataset,
                                                       std::span<const PromptKind> kinds,
                                                       const CandidateConfig& cfg) {
  if (dataset.empty()) throw ConfigError("curation dataset is empty");
  std::vector<CuratedExample> pool;
  for (const auto& s : dataset) {
    for (PromptKind kind : kinds) {
      const Subset subset = subset_for(kind);
      for (int k = 0; k < cfg.per_sample; ++k) {
        const std::uint64_t seed = derive_seed(cfg.seed, "curate",
                                               {s.id, static_cast<std::uint64_t>(kind),
                                                static_cast<std::uint64_t>(k)});
        CuratedExample ex;
        ex.subset = subset;
        ex.prompt_kind = kind;
        ex.sample = s;
        Rng rng(seed);
        switch (subset) {
          case Subset::SeeThink: {
            ex.prompt = render_prompt(kind, {{"Question", s.question.text}});
            auto r = run_policy(params, RolloutContext::multimodal(s), sampling_chooser(rng), cfg.scheme);
            ex.raw = r.response.raw;
            ex.record = r.record;
            auto parsed = parse_response(ex.raw, cfg.scheme);
            if (auto* ok = std::get_if<StructuredResponse>(&parsed)) {
              ex.format_ok = true;
              ex.perception = ok->perception;
              ex.answer = ok->answer;
            }
            break;
          }
          case Subset::CaptionReasoner: {
            // The description comes from the policy's own first pass.
            auto first = run_policy(params, RolloutContext::multimodal(s), sampling_chooser(rng), cfg.scheme);
            ex.perception = first.perception;
            ex.prompt = render_prompt(kind, {{"Description", ex.perception}, {"Question", s.question.text}});
            auto r = run_policy(params, RolloutContext::text_only(ex.perception, s.question),
                                sampling_chooser(rng));
            ex.raw = render_cot(std::string(reasoning_text(r.reasoning)), r.answer.text());
            ex.record = r.record;
            break;
          }
          case Subset::VisualReasoner: {
            ex.prompt = render_prompt(kind, {{"Question", s.question.text}});
            auto r = run_policy(params, RolloutContext::vision_cot(s), sampling_chooser(rng));
            ex.raw = render_cot(std::string(reasoning_text(r.reasoning)), r.answer.text());
            ex.record = r.record;
            break;
          }
        }
        if (subset != Subset::SeeThink) {
          if (auto a = parse_cot(ex.raw)) {
            ex.format_ok = true;
            ex.answer = *a;
          }
        }
        pool.push_back(std::move(ex));
      }
    }
  }
  return pool;
}

/// Stage-2 check on a perception. The oracle variant is exact; the policy
/// variant re-asks the given parameters text-only, as the self-reward does.
struct OracleVerifier {
  EnvConfig env;
};
struct PolicyVerifier {
  PolicyParameters params;
};
using Verifier = std::variant<OracleVerifier, PolicyVerifier>;

inline bool verify_perception(const Verifier& v, const std::string& perception,
                              const QuestionSpec& q) {
  if (const auto* o = std::get_if<OracleVerifier>(&v))
    return self_contained(perception_or_empty(perception, o->env.rows, o->env.cols), q,
                          OracleConfig{o->env});
  const auto& p = std::get<PolicyVerifier>(v).params;
  return visual_self_reward(p, perception, q, q.gold_answer) == 1;
}

struct FilterStats {
  struct Counts {
    std::size_t candidates = 0;
    std::size_t passed_stage1 = 0;
    std::size_t passed_stage2 = 0;  // equals retained
  };
  std::map<std::string, Counts> per_subset;
};

inline std::vector<CuratedExample> filter_two_stage(std::span<const CuratedExample> pool,
                                                    const Verifier& verifier,
                                                    FilterStats* stats = nullptr) {
  std::vector<CuratedExample> kept;
  for (const auto& c : pool) {
    FilterStats::Counts* counts =
        stats ? &stats->per_subset[std::string(name(c.subset))] : nullptr;
    if (counts) ++counts->candidates;
    CuratedExample ex = c;
    ex.answer_ok = ex.format_ok && accuracy_reward(ex.answer, ex.sample.question.gold_answer) == 1;
    if (!*ex.answer_ok) continue;
    if (counts) ++counts->passed_stage1;
    if (ex.subset != Subset::VisualReasoner) {
      ex.perception_ok = verify_perception(verifier, ex.perception, ex.sample.question);
      if (!*ex.perception_ok) continue;
    }
    if (counts) ++counts->passed_stage2;
    kept.push_back(std::move(ex));
  }
  return kept;
}

/// Number of retained see-think examples whose perception does not determine
/// the gold answer under the exact oracle.
inline std::size_t audit_see_think(std::span<const CuratedExample> retained, const EnvConfig& env) {
  std::size_t failures = 0;
  for (const auto& ex : retained) {
    if (ex.subset != Subset::SeeThink) continue;
    if (!self_contained(perception_or_empty(ex.perception, env.rows, env.cols), ex.sample.question,
                        OracleConfig{env}))
      ++failures;
  }
  return failures;
}

// ---------------------------------------------------------------------------
// Warm start

struct SftConfig {
  int epochs = 5;
  double step_size = 1e-2;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct SftResult {
  PolicyParameters params;
  // Mean training-set log-likelihood before training and after each epoch.
  std::vector<double> loglik;
};

struct PreparedExample {
  std::vector<Factor> factors;
  std::vector<int> choices;
};

inline std::vector<PreparedExample> prepare_examples(const PolicyParameters& params,
                                                     std::span<const CuratedExample> retained) {
  std::vector<PreparedExample> out;
  out.reserve(retained.size());
  for (const auto& ex : retained)
    out.push_back({replay_factors(params, ex.context(), ex.record), ex.record.choices});
  return out;
}

inline double mean_loglik(const PolicyParameters& params, std::span<const PreparedExample> data) {
  double s = 0.0;
  for (const auto& ex : data)
    for (std::size_t k = 0; k < ex.factors.size(); ++k)
      s += factor_log_probs(params.theta, ex.factors[k])[static_cast<std::size_t>(ex.choices[k])];
  return data.empty() ? 0.0 : s / static_cast<double>(data.size());
}

/// Gradient ascent on the summed log-likelihood of each mini-batch, one pass
/// over a seeded permutation per epoch.
inline SftResult sft_warm_start(const PolicyParameters& initial,
                                std::span<const CuratedExample> retained, const SftConfig& cfg) {
  SftResult out{initial, {}};
  if (retained.empty()) return out;
  if (!(cfg.step_size > 0.0) || cfg.batch_size == 0) throw ConfigError("invalid warm-start settings");
  const auto data = prepare_examples(initial, retained);
  out.loglik.push_back(mean_loglik(out.params, data));
  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, "sft", {static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<double> grad(Architecture::size(), 0.0);
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t b = start; b < end; ++b) {
        const auto& ex = data[order[b]];
        for (std::size_t k = 0; k < ex.factors.size(); ++k)
          accumulate_logprob_grad(out.params.theta, ex.factors[k], ex.choices[k], 1.0, grad);
      }
      for (std::size_t i = 0; i < grad.size(); ++i) out.params.theta[i] += cfg.step_size * grad[i];
    }
    out.loglik.push_back(mean_loglik(out.params, data));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const TrajectoryRecord& r) {
  return {{"mode", name(r.mode)},
          {"arch_fingerprint", r.arch_fingerprint},
          {"choices", r.choices},
          {"logprobs", r.logprobs}};
}

inline TrajectoryRecord trajectory_from_json(const nlohmann::json& j) {
  TrajectoryRecord r;
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "multimodal") r.mode = Conditioning::Multimodal;
  else if (mode == "text-only") r.mode = Conditioning::TextOnly;
  else if (mode == "vision-cot") r.mode = Conditioning::VisionCot;
  else throw SerializationError("unknown trajectory mode " + mode);
  r.arch_fingerprint = j.at("arch_fingerprint").get<std::uint64_t>();
  r.choices = j.at("choices").get<std::vector<int>>();
  r.logprobs = j.at("logprobs").get<std::vector<double>>();
  return r;
}

inline nlohmann::json to_json(const CuratedExample& e) {
  auto flag = [](const std::optional<bool>& b) { return b ? nlohmann::json(*b) : nlohmann::json(); };
  return {{"subset", name(e.subset)},
          {"prompt_kind", name(e.prompt_kind)},
          {"sample", to_json(e.sample)},
          {"prompt", e.prompt},
          {"response", e.raw},
          {"perception", e.perception},
          {"answer", e.answer},
          {"format_ok", e.format_ok},
          {"answer_ok", flag(e.answer_ok)},
          {"perception_ok", flag(e.perception_ok)},
          {"record", to_json(e.record)}};
}

inline CuratedExample curated_from_json(const nlohmann::json& j) try {
  CuratedExample e;
  auto subset = parse_subset(j.at("subset").get<std::string>());
  auto kind = parse_prompt_kind(j.at("prompt_kind").get<std::string>());
  if (!subset || !kind) throw SerializationError("unknown subset or prompt kind");
  e.subset = *subset;
  e.prompt_kind = *kind;
  e.sample = sample_from_json(j.at("sample"));
  e.prompt = j.at("prompt").get<std::string>();
  e.raw = j.at("response").get<std::string>();
  e.perception = j.at("perception").get<std::string>();
  e.answer = j.at("answer").get<std::string>();
  e.format_ok = j.at("format_ok").get<bool>();
  if (!j.at("answer_ok").is_null()) e.answer_ok = j["answer_ok"].get<bool>();
  if (!j.at("perception_ok").is_null()) e.perception_ok = j["perception_ok"].get<bool>();
  e.record = trajectory_from_json(j.at("record"));
  return e;
} catch (const nlohmann::json::exception& ex) {
  throw SerializationError(std::string("bad curated example: ") + ex.what());
}

inline nlohmann::json to_json(const FilterStats& s) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, c] : s.per_subset)
    j[k] = {{"candidates", c.candidates},
            {"passed_stage1", c.passed_stage1},
            {"retained", c.passed_stage2}};
  return j;
}

}  // namespace vsr

#endif  // VSR_PIPELINE_HPP
