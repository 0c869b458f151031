#include <gtest/gtest.h>

#include <algorithm>

#include "support.hpp"
#include "vsr/evalharness.hpp"

using namespace vsr;

namespace {

const EnvConfig kEnv{};

EvalRecord rec(bool correct, std::optional<bool> contained, TemplateId t = TemplateId::Count) {
  EvalRecord r;
  r.template_id = t;
  r.answer_correct = correct;
  r.perception_self_contained = contained;
  return r;
}

// 3 shortcuts, 4 grounded correct, 2 self-contained wrong, 1 wrong and not contained.
std::vector<EvalRecord> ten_records() {
  std::vector<EvalRecord> v;
  for (int i = 0; i < 3; ++i) v.push_back(rec(true, false));
  for (int i = 0; i < 4; ++i) v.push_back(rec(true, true, TemplateId::Exists));
  for (int i = 0; i < 2; ++i) v.push_back(rec(false, true, TemplateId::Lookup));
  v.push_back(rec(false, false));
  for (std::size_t i = 0; i < v.size(); ++i) v[i].sample_id = i;
  return v;
}

}  // namespace

TEST(Lsr, ThreeOfTen) {
  const auto rep = compute_lsr(ten_records());
  EXPECT_EQ(rep.total, 10u);
  EXPECT_EQ(rep.shortcut_count, 3u);
  EXPECT_DOUBLE_EQ(rep.lsr, 0.3);
  EXPECT_DOUBLE_EQ(self_containment_rate(rep), 0.6);
  EXPECT_EQ(rep.per_template.at("count").total, 4u);
  EXPECT_DOUBLE_EQ(rep.per_template.at("count").lsr(), 0.75);
  EXPECT_EQ(rep.per_template.at("exists").shortcut_count, 0u);
}

TEST(Lsr, ShuffleInvariant) {
  auto v = ten_records();
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
    ASSERT_EQ(compute_lsr(v).lsr, 0.3);
  }
}

TEST(Lsr, AllSelfContainedIsZero) {
  std::vector<EvalRecord> v;
  for (int i = 0; i < 8; ++i) v.push_back(rec(i % 2 == 0, true));
  EXPECT_EQ(compute_lsr(v).lsr, 0.0);
}

TEST(Lsr, EmptyAndFullyExcludedAreErrors) {
  EXPECT_THROW(compute_lsr(std::span<const EvalRecord>{}), ConfigError);
  std::vector<EvalRecord> v{rec(true, std::nullopt), rec(false, std::nullopt)};
  EXPECT_THROW(compute_lsr(v), ConfigError);
}

TEST(Lsr, ExcludedRecordsLeaveDenominator) {
  auto v = ten_records();
  v.push_back(rec(true, std::nullopt));
  v.push_back(rec(true, std::nullopt));
  const auto rep = compute_lsr(v);
  EXPECT_EQ(rep.excluded, 2u);
  EXPECT_EQ(rep.total, 10u);
  EXPECT_DOUBLE_EQ(rep.lsr, 0.3);
}

TEST(Lsr, MatchesDirectCountOnRandomRecords) {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    std::vector<EvalRecord> v;
    const auto n = 1 + rng.below(60);
    std::size_t shortcuts = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool c = rng.below(2);
      const auto k = rng.below(5);
      if (k == 0) {
        v.push_back(rec(c, std::nullopt));
        continue;
      }
      v.push_back(rec(c, k % 2 == 0));
      ++total;
      shortcuts += c && k % 2 != 0;
    }
    if (total == 0) continue;
    ASSERT_EQ(compute_lsr(v).lsr, static_cast<double>(shortcuts) / static_cast<double>(total));
  }
}

TEST(Accuracy, OracleFitIsPerfect) {
  const auto data = generate_dataset(6, 200, kEnv);
  const auto p = vsr::testing::oracle_fit_params(kEnv);
  EXPECT_EQ(evaluate_accuracy(p, data), 1.0);
  const auto snap = evaluate_snapshot(p, data);
  EXPECT_EQ(snap.accuracy, 1.0);
  EXPECT_EQ(snap.self_contained, 1.0);
  EXPECT_EQ(snap.lsr, 0.0);
}

// Uniform over the answer vocabulary when every weight is zero.
TEST(Accuracy, ZeroParamsSampledIsChance) {
  const auto data = generate_dataset(6, 500, kEnv);
  const auto p = init_params(Architecture::for_env(kEnv), 0, 0.0);
  EvalOptions o;
  o.decode = Decode::Sample;
  o.samples_per_question = 10;
  o.seed = 1;
  const double acc = evaluate_accuracy(p, data, o);
  const double chance = 1.0 / kVocabSize;
  const double se = std::sqrt(chance * (1 - chance) / 5000.0);
  EXPECT_NEAR(acc, chance, 4 * se);
}

TEST(Accuracy, RecordsAgreeWithAccuracy) {
  const auto data = generate_dataset(6, 100, kEnv);
  const auto p = init_params(Architecture::for_env(kEnv), 3, 1.0);
  const auto records = evaluate_records(p, data);
  EXPECT_EQ(records.size(), data.size());
  EXPECT_EQ(accuracy_of(records), evaluate_accuracy(p, data));
  EvalOptions four;
  four.threads = 4;
  EXPECT_EQ(records, evaluate_records(p, data, four));
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(records[i].sample_id, data[i].id);
    ASSERT_TRUE(records[i].perception_self_contained.has_value());
    EXPECT_EQ(*records[i].perception_self_contained,
              oracle_self_contained(records[i].response.perception, data[i].question, kEnv));
  }
  EXPECT_THROW(accuracy_of(std::span<const EvalRecord>{}), ConfigError);
}

TEST(EvalJson, RoundTrip) {
  const auto data = generate_dataset(6, 30, kEnv);
  auto records = evaluate_records(init_params(Architecture::for_env(kEnv), 3, 1.0), data);
  records[0].perception_self_contained.reset();
  records[1].judge = JudgeSource::Remote;
  for (const auto& r : records) EXPECT_EQ(eval_record_from_json(to_json(r)), r);
  EXPECT_THROW(eval_record_from_json({{"sample_id", 1}}), SerializationError);
  const auto j = to_json(compute_lsr(records));
  EXPECT_EQ(j["excluded"], 1);
}
