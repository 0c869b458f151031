#include <gtest/gtest.h>

#include <algorithm>

#include "support.hpp"
#include "vsr/grpo.hpp"
#include "vsr/pipeline.hpp"

using namespace vsr;

namespace {

const EnvConfig kEnv{};
const std::vector<PromptKind> kKinds{PromptKind::SeeThink, PromptKind::CaptionReasoner,
                                     PromptKind::VisionReasoner};

const PolicyParameters& teacher() {
  static const PolicyParameters p = [] {
    const auto train = generate_dataset(1, 2000, kEnv, "train");
    TrainConfig c;
    c.steps = 300;
    c.seed = 7;
    return train_loop(c, train, init_params(Architecture::for_env(kEnv), 0, 0.0)).params;
  }();
  return p;
}

const std::vector<CuratedExample>& teacher_pool() {
  static const auto pool = generate_candidates(teacher(), generate_dataset(2, 60, kEnv, "curate"), kKinds, {});
  return pool;
}

double format_rate(const PolicyParameters& p, std::span<const MultimodalSample> d) {
  const auto sc = TagScheme::see_think();
  int ok = 0;
  for (const auto& s : d) ok += format_reward(sample_first_pass(p, s, derive_seed(5, "fmt", {s.id}), sc).response.raw, sc);
  return static_cast<double>(ok) / static_cast<double>(d.size());
}

CuratedExample hand_example(Subset subset, const MultimodalSample& s, std::string perception, std::string answer,
                            bool format_ok = true) {
  CuratedExample e;
  e.subset = subset;
  e.sample = s;
  e.perception = std::move(perception);
  e.answer = std::move(answer);
  e.format_ok = format_ok;
  return e;
}

std::string dump_all(std::span<const CuratedExample> v) {
  std::string out;
  for (const auto& e : v) out += to_json(e).dump() + "\n";
  return out;
}

}  // namespace

TEST(Subsets, Mapping) {
  EXPECT_EQ(subset_for(PromptKind::SeeThink), Subset::SeeThink);
  EXPECT_EQ(subset_for(PromptKind::CaptionReasoner), Subset::CaptionReasoner);
  EXPECT_EQ(subset_for(PromptKind::VisionReasoner), Subset::VisualReasoner);
  EXPECT_THROW(subset_for(PromptKind::Judge), ConfigError);
  for (auto s : {Subset::SeeThink, Subset::CaptionReasoner, Subset::VisualReasoner})
    EXPECT_EQ(parse_subset(name(s)), s);
  EXPECT_FALSE(parse_subset("other"));
}

TEST(Cot, RenderParse) {
  EXPECT_EQ(render_cot("r", "2"), "<think>r</think> \\boxed{2}");
  EXPECT_EQ(parse_cot(render_cot("count them", "yes")), "yes");
  EXPECT_FALSE(parse_cot("<think>r</think>"));
  EXPECT_FALSE(parse_cot("\\boxed{2}"));
}

TEST(Candidates, CardinalityAndTyping) {
  const auto data = generate_dataset(2, 1, kEnv, "curate");
  const auto pool = generate_candidates(teacher(), data, kKinds, CandidateConfig{});
  ASSERT_EQ(pool.size(), 12u);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    EXPECT_EQ(pool[i].prompt_kind, kKinds[i / 4]);
    EXPECT_EQ(pool[i].subset, subset_for(kKinds[i / 4]));
    EXPECT_FALSE(pool[i].prompt.empty());
    if (pool[i].subset == Subset::VisualReasoner) {
      EXPECT_TRUE(pool[i].perception.empty());
    }
  }
  CandidateConfig two;
  two.per_sample = 2;
  EXPECT_EQ(generate_candidates(teacher(), generate_dataset(2, 5, kEnv), kKinds, two).size(), 30u);
  EXPECT_THROW(generate_candidates(teacher(), std::span<const MultimodalSample>{}, kKinds, two), ConfigError);
}

TEST(Candidates, Deterministic) {
  const auto data = generate_dataset(2, 10, kEnv, "curate");
  CandidateConfig c;
  c.seed = 11;
  const auto a = generate_candidates(teacher(), data, kKinds, c);
  EXPECT_EQ(dump_all(a), dump_all(generate_candidates(teacher(), data, kKinds, c)));
  c.seed = 12;
  EXPECT_NE(dump_all(a), dump_all(generate_candidates(teacher(), data, kKinds, c)));
}

TEST(Candidates, RecordsReplayUnderTheirContext) {
  for (const auto& ex : teacher_pool()) {
    const auto lg = logprob_grad(teacher(), ex.record, ex.context());
    ASSERT_NEAR(lg.logprob, ex.record.total_logprob(), 1e-9);
  }
}

TEST(Filter, StageOneDropsWrongOrMalformed) {
  const auto s = generate_dataset(3, 1, kEnv)[0];
  const std::string full = render_perception(full_description(s.scene));
  const std::string gold = s.question.gold_answer.text();
  const std::string wrong = AnswerToken::from_index((s.question.gold_answer.index() + 1) % kVocabSize).text();
  const std::vector<CuratedExample> pool{hand_example(Subset::SeeThink, s, full, gold),
                                         hand_example(Subset::SeeThink, s, full, wrong),
                                         hand_example(Subset::SeeThink, s, full, gold, false),
                                         hand_example(Subset::VisualReasoner, s, "", wrong)};
  FilterStats st;
  const auto kept = filter_two_stage(pool, OracleVerifier{kEnv}, &st);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].answer, gold);
  EXPECT_EQ(st.per_subset["see-think"].candidates, 3u);
  EXPECT_EQ(st.per_subset["see-think"].passed_stage1, 1u);
  EXPECT_EQ(st.per_subset["visual-reasoner"].passed_stage1, 0u);
}

TEST(Filter, StageTwoDropsUnsupportedPerception) {
  const auto s = generate_dataset(3, 1, kEnv)[0];
  const std::string gold = s.question.gold_answer.text();
  const std::vector<CuratedExample> pool{hand_example(Subset::SeeThink, s, "nothing observed", gold),
                                         hand_example(Subset::CaptionReasoner, s, "", gold),
                                         hand_example(Subset::VisualReasoner, s, "", gold)};
  FilterStats st;
  const auto kept = filter_two_stage(pool, OracleVerifier{kEnv}, &st);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].subset, Subset::VisualReasoner);
  EXPECT_FALSE(kept[0].perception_ok.has_value());
  EXPECT_EQ(st.per_subset["see-think"].passed_stage1, 1u);
  EXPECT_EQ(st.per_subset["see-think"].passed_stage2, 0u);
}

TEST(Filter, OracleVerifierHasNoFalsePositives) {
  FilterStats st;
  const auto kept = filter_two_stage(teacher_pool(), OracleVerifier{kEnv}, &st);
  EXPECT_EQ(audit_see_think(kept, kEnv), 0u);
  EXPECT_GT(st.per_subset["see-think"].passed_stage2, 0u);
  EXPECT_LT(st.per_subset["see-think"].passed_stage2, st.per_subset["see-think"].passed_stage1);
  for (const auto& ex : kept) {
    EXPECT_EQ(ex.answer, ex.sample.question.gold_answer.text());
    EXPECT_TRUE(ex.format_ok);
    if (ex.subset != Subset::VisualReasoner) {
      EXPECT_EQ(ex.perception_ok, true);
    }
  }
}

TEST(Filter, Idempotent) {
  const auto once = filter_two_stage(teacher_pool(), OracleVerifier{kEnv});
  const auto twice = filter_two_stage(once, OracleVerifier{kEnv});
  EXPECT_EQ(dump_all(once), dump_all(twice));
}

TEST(Filter, PolicyVerifierRetainsSupersetOfCorrectAnswers) {
  const auto kept = filter_two_stage(teacher_pool(), PolicyVerifier{teacher()});
  for (const auto& ex : kept) EXPECT_EQ(ex.answer, ex.sample.question.gold_answer.text());
}

TEST(Sft, EmptySetIsIdentity) {
  const auto p = init_params(Architecture::for_env(kEnv), 4, 0.3);
  const auto r = sft_warm_start(p, std::span<const CuratedExample>{}, SftConfig{});
  EXPECT_EQ(r.params, p);
  EXPECT_TRUE(r.loglik.empty());
}

TEST(Sft, LoglikIncreasesAndFormatImproves) {
  const auto kept = filter_two_stage(teacher_pool(), OracleVerifier{kEnv});
  ASSERT_GT(kept.size(), 100u);
  const auto p0 = init_params(Architecture::for_env(kEnv), 0, 0.0);
  const auto r = sft_warm_start(p0, kept, SftConfig{});
  ASSERT_EQ(r.loglik.size(), 6u);
  for (std::size_t i = 1; i < r.loglik.size(); ++i) EXPECT_GT(r.loglik[i], r.loglik[i - 1]);
  const auto fresh = generate_dataset(3, 300, kEnv, "fresh");
  EXPECT_GT(format_rate(r.params, fresh), format_rate(p0, fresh) + 0.2);
}

TEST(Sft, Deterministic) {
  const auto kept = filter_two_stage(teacher_pool(), OracleVerifier{kEnv});
  const auto p0 = init_params(Architecture::for_env(kEnv), 0, 0.0);
  SftConfig c;
  c.epochs = 2;
  EXPECT_EQ(sft_warm_start(p0, kept, c).params, sft_warm_start(p0, kept, c).params);
}

TEST(PipelineJson, RoundTrip) {
  for (std::size_t i = 0; i < teacher_pool().size(); i += 7) {
    const auto j = to_json(teacher_pool()[i]);
    EXPECT_EQ(to_json(curated_from_json(j)), j);
  }
  const auto kept = filter_two_stage(teacher_pool(), OracleVerifier{kEnv});
  const auto j = to_json(kept.front());
  EXPECT_EQ(to_json(curated_from_json(j)), j);
  EXPECT_TRUE(j.contains("perception_ok"));
  EXPECT_THROW(curated_from_json({{"subset", "nope"}}), SerializationError);
}
