#ifndef VSR_TESTS_SUPPORT_HPP
#define VSR_TESTS_SUPPORT_HPP

#include <optional>
#include <string>
#include <vector>

#include "vsr/perception.hpp"
#include "vsr/policy.hpp"
#include "vsr/scene.hpp"

namespace vsr::testing {

/// Hand-set weights that make greedy decoding describe every cell exactly,
/// pick the applicable reasoning and answer from the perception.
inline PolicyParameters oracle_fit_params(const EnvConfig& env = {}, double w = 12.0) {
  auto p = init_params(Architecture::for_env(env), 0, 0.0);
  auto& t = p.theta;
  t[Architecture::layout_offset() + static_cast<int>(Layout::WellFormed)] = w;
  for (std::uint32_t tmpl = 0; tmpl < kNumTemplates; ++tmpl) {
    t[Architecture::coverage_offset() + static_cast<std::uint32_t>(Coverage::Everything) * kNumTemplates + tmpl] = w;
    for (std::uint32_t rel = 0; rel < 2; ++rel)
      t[Architecture::detail_offset() + (static_cast<std::uint32_t>(Detail::Full) * 2 + rel) * kNumTemplates + tmpl] = w;
    const Reasoning r = tmpl == static_cast<std::uint32_t>(TemplateId::Lookup) ? Reasoning::Lookup
                                                                               : Reasoning::CountMatching;
    t[Architecture::reasoning_offset() + static_cast<std::uint32_t>(r) * kNumTemplates + tmpl] = w;
  }
  for (int r = 0; r < kNumReasoning; ++r) t[Architecture::perception_offset() + r] = 2 * w;
  return p;
}

/// Explicit enumeration of every scene on the grid, with objects drawn from
/// the restricted vocabulary, that agrees with all statements.
inline bool statement_holds(const PerceptionStatement& st, const std::optional<Object>& cell) {
  if (std::holds_alternative<EmptyCell>(st.assertion)) return !cell.has_value();
  if (!cell) return false;
  if (const auto* o = std::get_if<Object>(&st.assertion)) return *o == *cell;
  const auto& claim = std::get<PartialClaim>(st.assertion);
  if (const auto* s = std::get_if<Shape>(&claim)) return cell->shape == *s;
  if (const auto* c = std::get_if<Color>(&claim)) return cell->color == *c;
  return cell->size == std::get<Size>(claim);
}

struct BruteVerdict {
  bool contradiction = false;
  std::optional<AnswerToken> answer;  // set when every consistent scene agrees
};

inline BruteVerdict brute_force_oracle(const std::vector<PerceptionStatement>& st,
                                       const QuestionSpec& q, const EnvConfig& env) {
  std::vector<std::optional<Object>> palette{std::nullopt};
  for (int s = 0; s < env.num_shapes; ++s)
    for (int c = 0; c < env.num_colors; ++c)
      for (int z = 0; z < env.num_sizes; ++z)
        palette.push_back(Object{static_cast<Shape>(s), static_cast<Color>(c), static_cast<Size>(z)});
  const int cells = env.rows * env.cols;
  std::vector<std::size_t> idx(static_cast<std::size_t>(cells), 0);
  std::vector<AnswerToken> answers;
  bool ambiguous_lookup = false;
  bool any = false;
  while (true) {
    std::vector<ObjectSpec> objs;
    bool ok = true;
    for (int i = 0; i < cells; ++i) {
      const auto& cell = palette[idx[static_cast<std::size_t>(i)]];
      const CellPos pos{i / env.cols, i % env.cols};
      for (const auto& s : st)
        if (s.cell == pos && !statement_holds(s, cell)) ok = false;
      if (cell) objs.push_back({pos, *cell});
    }
    if (ok) {
      any = true;
      const Scene scene(env.rows, env.cols, objs);
      try {
        answers.push_back(answer_oracle(scene, q));
      } catch (const TemplateInapplicable&) {
        ambiguous_lookup = true;
      }
    }
    int k = 0;
    while (k < cells && ++idx[static_cast<std::size_t>(k)] == palette.size()) idx[static_cast<std::size_t>(k++)] = 0;
    if (k == cells) break;
  }
  BruteVerdict v;
  if (!any) {
    v.contradiction = true;
    return v;
  }
  if (ambiguous_lookup || answers.empty()) return v;
  for (const auto& a : answers)
    if (!(a == answers.front())) return v;
  v.answer = answers.front();
  return v;
}

inline MultimodalSample sample_of(const Scene& scene, const QuestionSpec& q, std::uint64_t id = 0) {
  MultimodalSample s;
  s.id = id;
  s.scene = scene;
  s.question = q;
  return s;
}

/// Hand-built responses that violate the see-think layout, one rule or
/// variant per entry.
inline std::vector<std::string> malformed_corpus() {
  const std::string P = "<visual perception>cell (0,0): empty</visual perception>";
  const std::string T = "<think>count the matching objects</think>";
  const std::string A = "<answer>2</answer>";
  return {
      "",
      "2",
      T + "\n" + A,
      P + "\n" + A,
      P + "\n" + T,
      P + "\n<think>count the matching objects\n" + A,
      P + "\n" + T + "\n<answer>2",
      "cell (0,0): empty</visual perception>\n" + T + "\n" + A,
      T + "\n" + P + "\n" + A,
      P + "\n" + A + "\n" + T,
      A + "\n" + T + "\n" + P,
      P + "\n" + P + "\n" + T + "\n" + A,
      P + "\n" + T + "\n" + T + "\n" + A,
      P + "\n" + T + "\n" + A + "\n" + A,
      "Answer: " + P + "\n" + T + "\n" + A,
      P + " so " + T + "\n" + A,
      P + "\n" + T + "\n" + A + " done",
      "<visual perception>   </visual perception>\n" + T + "\n" + A,
      P + "\n<think></think>\n" + A,
      P + "\n" + T + "\n<answer> </answer>",
  };
}

}  // namespace vsr::testing

#endif  // VSR_TESTS_SUPPORT_HPP
