#ifndef VSR_POLICY_HPP
#define VSR_POLICY_HPP

// Factorized linear-softmax policy over See-Think responses.
//
// A trajectory is a sequence of categorical decisions ("factors"). Each
// choice of a factor carries a sparse set of indicator features; its logit is
// the sum of the weights at those indices. Feature sets depend only on the
// conditioning context and earlier choices, never on the weights, so a
// realized trajectory can be replayed to obtain exact log-probabilities,
// gradients and per-factor KL terms.
//
// First pass (multimodal), in order:
//   layout      4 choices: well-formed, think-first, unclosed think, repeated perception
//   coverage    3 choices: describe nothing, only question-relevant cells, every cell
//   detail      one factor per described occupied cell: full, partial, hallucinated
//   reasoning   3 choices: count-matching, lookup, prior-only
//   answer      19 vocabulary tokens
// Second pass (text-only): reasoning and answer, with the perception parsed
// from text and no scene features at all.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsr/errors.hpp"
#include "vsr/perception.hpp"
#include "vsr/rng.hpp"
#include "vsr/scene.hpp"
#include "vsr/structured_output.hpp"

namespace vsr {

inline constexpr int kNumLayouts = 4;
inline constexpr int kNumCoverage = 3;
inline constexpr int kNumDetail = 3;
inline constexpr int kNumReasoning = 3;

enum class Layout { WellFormed, ThinkFirst, UnclosedThink, RepeatedPerception };
enum class Coverage { Nothing, Relevant, Everything };
enum class Detail { Full, Partial, Hallucinated };
enum class Reasoning { CountMatching, Lookup, PriorOnly };

inline std::string_view reasoning_text(Reasoning r) {
  switch (r) {
    case Reasoning::CountMatching: return "count the described objects that match the question";
    case Reasoning::Lookup: return "find the unique described referent and read its attribute";
    case Reasoning::PriorOnly: return "answer from what such questions usually have";
  }
  return "";
}

// Which templates a reasoning strategy can conclude from a perception.
inline bool reasoning_applies(Reasoning r, TemplateId t) {
  switch (r) {
    case Reasoning::CountMatching: return t != TemplateId::Lookup;
    case Reasoning::Lookup: return t != TemplateId::Count;
    case Reasoning::PriorOnly: return false;
  }
  return false;
}

/// Feature layout. Grid and vocabulary sizes are part of the architecture
/// because perception rendering and the oracle features depend on them.
struct Architecture {
  static constexpr int kVersion = 1;
  int rows = 3;
  int cols = 3;
  int num_shapes = kNumShapes;
  int num_colors = kNumColors;
  int num_sizes = kNumSizes;

  static Architecture for_env(const EnvConfig& env) {
    return {env.rows, env.cols, env.num_shapes, env.num_colors, env.num_sizes};
  }
  EnvConfig env() const {
    EnvConfig e;
    e.rows = rows;
    e.cols = cols;
    e.num_shapes = num_shapes;
    e.num_colors = num_colors;
    e.num_sizes = num_sizes;
    e.min_objects = 0;
    e.max_objects = rows * cols;
    return e;
  }

  // Block offsets.
  static constexpr std::uint32_t layout_offset() { return 0; }
  static constexpr std::uint32_t coverage_offset() { return layout_offset() + kNumLayouts; }
  static constexpr std::uint32_t detail_offset() {
    return coverage_offset() + kNumCoverage * kNumTemplates;
  }
  static constexpr std::uint32_t reasoning_offset() {
    return detail_offset() + kNumDetail * 2 * kNumTemplates;
  }
  static constexpr std::uint32_t prior_offset() {
    return reasoning_offset() + kNumReasoning * kNumTemplates;
  }
  static constexpr std::uint32_t perception_offset() {
    return prior_offset() + kNumTemplates * kVocabSize;
  }
  static constexpr std::uint32_t scene_offset() { return perception_offset() + kNumReasoning; }
  static constexpr std::size_t size() { return scene_offset() + kNumTemplates; }

  std::uint64_t fingerprint() const {
    std::uint64_t h = splitmix64(static_cast<std::uint64_t>(kVersion));
    for (int v : {rows, cols, num_shapes, num_colors, num_sizes, static_cast<int>(size())})
      h = splitmix64(h ^ static_cast<std::uint64_t>(v));
    return h;
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

inline nlohmann::json to_json(const Architecture& a) {
  return {{"version", Architecture::kVersion}, {"rows", a.rows},           {"cols", a.cols},
          {"num_shapes", a.num_shapes},       {"num_colors", a.num_colors}, {"num_sizes", a.num_sizes},
          {"size", Architecture::size()}};
}

inline Architecture architecture_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != Architecture::kVersion ||
      j.at("size").get<std::size_t>() != Architecture::size())
    throw ArchitectureMismatch("unsupported policy architecture version");
  Architecture a{j.at("rows").get<int>(), j.at("cols").get<int>(), j.at("num_shapes").get<int>(),
                 j.at("num_colors").get<int>(), j.at("num_sizes").get<int>()};
  a.env().validate();
  return a;
}

struct PolicyParameters {
  Architecture arch;
  std::vector<double> theta;

  void validate() const {
    if (theta.size() != Architecture::size())
      throw ArchitectureMismatch("parameter vector length " + std::to_string(theta.size()) +
                                 " does not match layout size " +
                                 std::to_string(Architecture::size()));
    for (double v : theta)
      if (!std::isfinite(v)) throw ConfigError("parameter vector holds a non-finite entry");
  }
  friend bool operator==(const PolicyParameters&, const PolicyParameters&) = default;
};

/// Frozen copy. The shared payload is const, so no holder can mutate it.
class PolicySnapshot {
 public:
  PolicySnapshot(const PolicyParameters& p, std::string label = "reference")
      : params_(std::make_shared<const PolicyParameters>(p)), label_(std::move(label)) {}
  const PolicyParameters& params() const { return *params_; }
  const std::string& label() const { return label_; }

 private:
  std::shared_ptr<const PolicyParameters> params_;
  std::string label_;
};

inline PolicyParameters init_params(const Architecture& arch, std::uint64_t seed, double scale) {
  if (!(scale >= 0.0)) throw ConfigError("init scale must be non-negative");
  PolicyParameters p{arch, std::vector<double>(Architecture::size(), 0.0)};
  if (scale > 0.0) {
    Rng rng(seed);
    for (double& v : p.theta) v = scale * rng.normal();
  }
  return p;
}

// ---------------------------------------------------------------------------
// Factors

/// One categorical decision: per choice, the indices of its active features.
struct Factor {
  std::vector<std::vector<std::uint32_t>> choices;
  std::size_t size() const { return choices.size(); }
};

inline std::vector<double> factor_logits(std::span<const double> theta, const Factor& f) {
  std::vector<double> z(f.size(), 0.0);
  for (std::size_t j = 0; j < f.size(); ++j)
    for (auto i : f.choices[j]) z[j] += theta[i];
  return z;
}

inline std::vector<double> log_softmax(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  const double lse = m + std::log(s);
  std::vector<double> out(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) out[j] = z[j] - lse;
  return out;
}

inline std::vector<double> factor_log_probs(std::span<const double> theta, const Factor& f) {
  return log_softmax(factor_logits(theta, f));
}

inline std::vector<double> factor_probs(std::span<const double> theta, const Factor& f) {
  auto lp = factor_log_probs(theta, f);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

// Adds scale * d log p(choice) / d theta into grad; returns log p(choice).
inline double accumulate_logprob_grad(std::span<const double> theta, const Factor& f, int choice,
                                      double scale, std::span<double> grad) {
  const auto lp = factor_log_probs(theta, f);
  for (auto i : f.choices[static_cast<std::size_t>(choice)]) grad[i] += scale;
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double p = std::exp(lp[j]);
    for (auto i : f.choices[j]) grad[i] -= scale * p;
  }
  return lp[static_cast<std::size_t>(choice)];
}

// Adds scale * d KL(p_theta || p_ref) / d theta into grad; returns the KL.
inline double accumulate_kl_grad(std::span<const double> theta, std::span<const double> ref,
                                 const Factor& f, double scale, std::span<double> grad) {
  const auto lp = factor_log_probs(theta, f);
  const auto lq = factor_log_probs(ref, f);
  double kl = 0.0;
  std::vector<double> p(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) {
    p[j] = std::exp(lp[j]);
    kl += p[j] * (lp[j] - lq[j]);
  }
  // dKL/dz_j = p_j (log p_j - log q_j - KL)
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double dz = p[j] * (lp[j] - lq[j] - kl);
    if (dz == 0.0) continue;
    for (auto i : f.choices[j]) grad[i] += scale * dz;
  }
  return kl;
}

// ---------------------------------------------------------------------------
// Trajectories

enum class Conditioning { Multimodal, TextOnly, VisionCot };

inline std::string_view name(Conditioning c) {
  switch (c) {
    case Conditioning::Multimodal: return "multimodal";
    case Conditioning::TextOnly: return "text-only";
    case Conditioning::VisionCot: return "vision-cot";
  }
  return "?";
}

struct TrajectoryRecord {
  Conditioning mode = Conditioning::Multimodal;
  std::uint64_t arch_fingerprint = 0;
  std::vector<int> choices;
  std::vector<double> logprobs;

  double total_logprob() const {
    double s = 0.0;
    for (double v : logprobs) s += v;
    return s;
  }
  friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

/// What a trajectory is conditioned on. First-pass and CoT-only contexts
/// carry the scene; text-only contexts carry the perception text instead.
struct RolloutContext {
  Conditioning mode = Conditioning::Multimodal;
  std::optional<Scene> scene;
  QuestionSpec question;
  std::string perception;

  static RolloutContext multimodal(const MultimodalSample& s) {
    return {Conditioning::Multimodal, s.scene, s.question, {}};
  }
  static RolloutContext vision_cot(const MultimodalSample& s) {
    return {Conditioning::VisionCot, s.scene, s.question, {}};
  }
  static RolloutContext text_only(std::string perception, const QuestionSpec& q) {
    return {Conditioning::TextOnly, std::nullopt, q, std::move(perception)};
  }
};

/// Everything produced by running the policy once.
struct Rollout {
  TrajectoryRecord record;
  std::vector<Factor> factors;
  std::vector<PerceptionStatement> statements;
  std::string perception;
  Reasoning reasoning = Reasoning::PriorOnly;
  AnswerToken answer;
  StructuredResponse response;  // first pass only
};

/// Picks a choice index for a factor given its probabilities.
using Chooser = std::function<int(std::size_t factor_index, const std::vector<double>& probs)>;

inline Chooser sampling_chooser(Rng& rng) {
  return [&rng](std::size_t, const std::vector<double>& p) {
    return static_cast<int>(rng.categorical(p));
  };
}

// Lowest index wins ties.
inline Chooser greedy_chooser() {
  return [](std::size_t, const std::vector<double>& p) {
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  };
}

inline Chooser replay_chooser(const TrajectoryRecord& rec) {
  return [&rec](std::size_t k, const std::vector<double>& p) {
    if (k >= rec.choices.size())
      throw ArchitectureMismatch("trajectory record has fewer choices than the replay needs");
    const int c = rec.choices[k];
    if (c < 0 || static_cast<std::size_t>(c) >= p.size())
      throw ArchitectureMismatch("trajectory choice out of range for its factor");
    return c;
  };
}

namespace detail {

inline std::uint32_t template_index(const QuestionSpec& q) {
  return static_cast<std::uint32_t>(q.template_id);
}

inline PartialClaim partial_claim_for(const Object& o, const QuestionSpec& q) {
  if (q.filter.color) return o.color;
  if (q.filter.shape) return o.shape;
  return o.size;
}

inline Object hallucinate(const Object& o) {
  Object h = o;
  h.color = static_cast<Color>((static_cast<int>(o.color) + 1) % kNumColors);
  return h;
}

inline std::optional<AnswerToken> determined_answer(const std::vector<PerceptionStatement>& st,
                                                    const QuestionSpec& q,
                                                    const Architecture& arch) {
  try {
    const auto v = perception_oracle(st, q, OracleConfig{arch.env()});
    if (is_determined(v)) return std::get<AnswerToken>(v);
  } catch (const Contradiction&) {
  }
  return std::nullopt;
}

inline std::string render_layout(Layout layout, const std::string& c, const std::string& t,
                                 const std::string& a, const TagScheme& s) {
  const std::string P = s.perception_open + c + s.perception_close;
  const std::string T = s.think_open + t + s.think_close;
  const std::string A = s.answer_open + a + s.answer_close;
  switch (layout) {
    case Layout::WellFormed: return P + "\n" + T + "\n" + A;
    case Layout::ThinkFirst: return T + "\n" + P + "\n" + A;
    case Layout::UnclosedThink: return P + "\n" + s.think_open + t + "\n" + A;
    case Layout::RepeatedPerception: return P + "\n" + P + "\n" + T + "\n" + A;
  }
  return {};
}

}  // namespace detail

/// Runs the generative process once. The chooser decides every factor; the
/// feature sets are built from the context alone, so sampling, greedy decoding
/// and replay of a stored record share one code path.
inline Rollout run_policy(const PolicyParameters& params, const RolloutContext& ctx,
                          const Chooser& choose, const TagScheme& scheme = TagScheme::see_think()) {
  const Architecture& arch = params.arch;
  const std::span<const double> theta(params.theta);
  const std::uint32_t tmpl = detail::template_index(ctx.question);
  Rollout out;
  out.record.mode = ctx.mode;
  out.record.arch_fingerprint = arch.fingerprint();

  auto decide = [&](Factor f) {
    const auto lp = factor_log_probs(theta, f);
    std::vector<double> p(lp.size());
    for (std::size_t j = 0; j < lp.size(); ++j) p[j] = std::exp(lp[j]);
    const int c = choose(out.factors.size(), p);
    out.record.choices.push_back(c);
    out.record.logprobs.push_back(lp[static_cast<std::size_t>(c)]);
    out.factors.push_back(std::move(f));
    return c;
  };

  if ((ctx.mode == Conditioning::TextOnly) == ctx.scene.has_value())
    throw ConfigError("text-only contexts carry no scene; other contexts require one");

  Layout layout = Layout::WellFormed;
  if (ctx.mode == Conditioning::Multimodal) {
    Factor lf;
    for (std::uint32_t j = 0; j < kNumLayouts; ++j) lf.choices.push_back({Architecture::layout_offset() + j});
    layout = static_cast<Layout>(decide(std::move(lf)));

    Factor cf;
    for (std::uint32_t j = 0; j < kNumCoverage; ++j)
      cf.choices.push_back({Architecture::coverage_offset() + j * kNumTemplates + tmpl});
    const auto coverage = static_cast<Coverage>(decide(std::move(cf)));

    const Scene& scene = *ctx.scene;
    if (scene.rows() != arch.rows || scene.cols() != arch.cols)
      throw ArchitectureMismatch("scene grid does not match the policy architecture");
    const auto grid = scene.grid();
    for (int r = 0; r < scene.rows(); ++r) {
      for (int c = 0; c < scene.cols(); ++c) {
        const auto& cell = grid[static_cast<std::size_t>(r * scene.cols() + c)];
        const bool relevant = cell && ctx.question.filter.matches(*cell);
        const bool described = coverage == Coverage::Everything ||
                               (coverage == Coverage::Relevant && relevant);
        if (!described) continue;
        if (!cell) {
          out.statements.push_back({{r, c}, EmptyCell{}});
          continue;
        }
        Factor df;
        for (std::uint32_t j = 0; j < kNumDetail; ++j)
          df.choices.push_back({Architecture::detail_offset() +
                                (j * 2 + (relevant ? 1u : 0u)) * kNumTemplates + tmpl});
        switch (static_cast<Detail>(decide(std::move(df)))) {
          case Detail::Full: out.statements.push_back({{r, c}, *cell}); break;
          case Detail::Partial:
            out.statements.push_back({{r, c}, detail::partial_claim_for(*cell, ctx.question)});
            break;
          case Detail::Hallucinated:
            out.statements.push_back({{r, c}, detail::hallucinate(*cell)});
            break;
        }
      }
    }
    out.perception = render_perception(out.statements);
  } else if (ctx.mode == Conditioning::TextOnly) {
    out.perception = ctx.perception;
    out.statements = perception_or_empty(ctx.perception, arch.rows, arch.cols);
  }

  Factor rf;
  for (std::uint32_t j = 0; j < kNumReasoning; ++j)
    rf.choices.push_back({Architecture::reasoning_offset() + j * kNumTemplates + tmpl});
  out.reasoning = static_cast<Reasoning>(decide(std::move(rf)));

  std::optional<AnswerToken> from_perception;
  if (reasoning_applies(out.reasoning, ctx.question.template_id))
    from_perception = detail::determined_answer(out.statements, ctx.question, arch);
  std::optional<AnswerToken> from_scene;
  if (ctx.scene) from_scene = answer_oracle(*ctx.scene, ctx.question);

  Factor af;
  for (int v = 0; v < kVocabSize; ++v) {
    std::vector<std::uint32_t> feats{Architecture::prior_offset() +
                                     tmpl * kVocabSize + static_cast<std::uint32_t>(v)};
    if (from_perception && from_perception->index() == v)
      feats.push_back(Architecture::perception_offset() + static_cast<std::uint32_t>(out.reasoning));
    if (from_scene && from_scene->index() == v) feats.push_back(Architecture::scene_offset() + tmpl);
    af.choices.push_back(std::move(feats));
  }
  out.answer = AnswerToken::from_index(decide(std::move(af)));

  if (ctx.mode == Conditioning::Multimodal) {
    const std::string t(reasoning_text(out.reasoning));
    const std::string a = out.answer.text();
    out.response.raw = detail::render_layout(layout, out.perception, t, a, scheme);
    out.response.format_ok = layout == Layout::WellFormed;
    if (out.response.format_ok) {
      out.response.perception = out.perception;
      out.response.reasoning = t;
      out.response.answer = a;
    }
  }
  return out;
}

inline Rollout sample_first_pass(const PolicyParameters& params, const MultimodalSample& sample,
                                 std::uint64_t seed, const TagScheme& scheme = TagScheme::see_think()) {
  Rng rng(seed);
  return run_policy(params, RolloutContext::multimodal(sample), sampling_chooser(rng), scheme);
}

inline Rollout greedy_first_pass(const PolicyParameters& params, const MultimodalSample& sample,
                                 const TagScheme& scheme = TagScheme::see_think()) {
  return run_policy(params, RolloutContext::multimodal(sample), greedy_chooser(), scheme);
}

enum class Decode { Greedy, Sample };

/// Text-only pass over (perception, question). The scene is not an input.
inline Rollout sample_second_pass(const PolicyParameters& params, const std::string& perception,
                                  const QuestionSpec& question, Decode decode = Decode::Greedy,
                                  std::uint64_t seed = 0) {
  const auto ctx = RolloutContext::text_only(perception, question);
  if (decode == Decode::Greedy) return run_policy(params, ctx, greedy_chooser());
  Rng rng(seed);
  return run_policy(params, ctx, sampling_chooser(rng));
}

inline std::vector<Factor> replay_factors(const PolicyParameters& params, const RolloutContext& ctx,
                                          const TrajectoryRecord& rec) {
  if (rec.arch_fingerprint != params.arch.fingerprint())
    throw ArchitectureMismatch("trajectory was recorded under a different architecture");
  if (rec.mode != ctx.mode) throw ArchitectureMismatch("trajectory conditioning does not match context");
  auto r = run_policy(params, ctx, replay_chooser(rec));
  if (r.record.choices.size() != rec.choices.size())
    throw ArchitectureMismatch("trajectory record has more choices than the replay consumed");
  return std::move(r.factors);
}

struct LogprobGrad {
  double logprob = 0.0;
  std::vector<double> gradient;
};

inline LogprobGrad logprob_grad(const PolicyParameters& params, const std::vector<Factor>& factors,
                                const std::vector<int>& choices) {
  if (factors.size() != choices.size())
    throw ArchitectureMismatch("factor and choice counts differ");
  LogprobGrad out{0.0, std::vector<double>(Architecture::size(), 0.0)};
  for (std::size_t k = 0; k < factors.size(); ++k)
    out.logprob += accumulate_logprob_grad(params.theta, factors[k], choices[k], 1.0, out.gradient);
  return out;
}

/// Exact log-probability and gradient of a recorded trajectory.
inline LogprobGrad logprob_grad(const PolicyParameters& params, const TrajectoryRecord& rec,
                                const RolloutContext& ctx) {
  params.validate();
  return logprob_grad(params, replay_factors(params, ctx, rec), rec.choices);
}

struct KlGrad {
  double kl = 0.0;
  std::vector<double> gradient;
};

/// Closed-form KL(pi_theta || pi_ref) summed over the factors of each
/// trajectory context, averaged over contexts.
inline KlGrad kl_and_grad(const PolicyParameters& params, const PolicySnapshot& reference,
                          std::span<const std::vector<Factor>> contexts) {
  if (!(params.arch == reference.params().arch))
    throw ArchitectureMismatch("reference snapshot has a different architecture");
  KlGrad out{0.0, std::vector<double>(Architecture::size(), 0.0)};
  if (contexts.empty()) return out;
  const double w = 1.0 / static_cast<double>(contexts.size());
  for (const auto& factors : contexts)
    for (const auto& f : factors)
      out.kl += w * accumulate_kl_grad(params.theta, reference.params().theta, f, w, out.gradient);
  return out;
}

}  // namespace vsr

#endif  // VSR_POLICY_HPP
