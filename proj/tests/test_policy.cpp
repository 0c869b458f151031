#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "vsr/policy.hpp"
#include "vsr/rng.hpp"

using namespace vsr;

namespace {

const EnvConfig kEnv{};
const Architecture kArch = Architecture::for_env(kEnv);

PolicyParameters random_params(std::uint64_t seed, double scale = 1.0) {
  return init_params(kArch, seed, scale);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

double trajectory_logprob(const std::vector<double>& theta, const std::vector<Factor>& fs,
                          const std::vector<int>& choices) {
  double s = 0;
  for (std::size_t k = 0; k < fs.size(); ++k)
    s += factor_log_probs(theta, fs[k])[static_cast<std::size_t>(choices[k])];
  return s;
}

}  // namespace

TEST(InitParams, ZeroScaleIsUniform) {
  const auto p = random_params(1, 0.0);
  for (double v : p.theta) EXPECT_EQ(v, 0.0);
  const auto data = generate_dataset(1, 20, kEnv);
  Rng rng(3);
  for (const auto& s : data) {
    const auto r = run_policy(p, RolloutContext::multimodal(s), sampling_chooser(rng));
    for (const auto& f : r.factors)
      for (double q : factor_probs(p.theta, f)) EXPECT_DOUBLE_EQ(q, 1.0 / static_cast<double>(f.size()));
  }
}

TEST(InitParams, DeterministicAndBounded) {
  EXPECT_EQ(random_params(5, 0.1), random_params(5, 0.1));
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto p = random_params(seed, 0.1);
    ASSERT_EQ(p.theta.size(), Architecture::size());
    for (double v : p.theta) {
      ASSERT_TRUE(std::isfinite(v));
      ASSERT_LT(std::abs(v), 0.1 * 7);
    }
  }
  EXPECT_THROW(init_params(kArch, 0, -1.0), ConfigError);
}

TEST(InitParams, ValidateRejectsBadVectors) {
  auto p = random_params(0);
  p.theta.pop_back();
  EXPECT_THROW(p.validate(), ArchitectureMismatch);
  p = random_params(0);
  p.theta[3] = std::nan("");
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(FirstPass, ZeroParamsLogprobIsUniformArithmetic) {
  const auto p = random_params(0, 0.0);
  for (const auto& s : generate_dataset(2, 50, kEnv)) {
    const auto r = sample_first_pass(p, s, s.seed);
    double expected = 0;
    for (const auto& f : r.factors) expected -= std::log(static_cast<double>(f.size()));
    EXPECT_NEAR(r.record.total_logprob(), expected, 1e-12);
  }
}

TEST(FirstPass, DeterministicUnderSeed) {
  const auto p = random_params(4);
  const auto s = generate_dataset(2, 1, kEnv)[0];
  const auto a = sample_first_pass(p, s, 11), b = sample_first_pass(p, s, 11);
  EXPECT_EQ(a.record, b.record);
  EXPECT_EQ(a.response, b.response);
}

TEST(FirstPass, RecordedLogprobMatchesRecomputation) {
  const auto p = random_params(8);
  for (const auto& s : generate_dataset(3, 100, kEnv)) {
    const auto r = sample_first_pass(p, s, s.seed);
    const auto lg = logprob_grad(p, r.record, RolloutContext::multimodal(s));
    ASSERT_NEAR(lg.logprob, r.record.total_logprob(), 1e-12);
  }
}

TEST(FirstPass, ArchitectureMismatchDetected) {
  const auto p = random_params(8);
  const auto s = generate_dataset(3, 1, kEnv)[0];
  auto r = sample_first_pass(p, s, 1);
  r.record.arch_fingerprint ^= 1;
  EXPECT_THROW(logprob_grad(p, r.record, RolloutContext::multimodal(s)), ArchitectureMismatch);
  r = sample_first_pass(p, s, 1);
  EXPECT_THROW(logprob_grad(p, r.record, RolloutContext::vision_cot(s)), ArchitectureMismatch);
}

TEST(FirstPass, OracleFitDescribesSceneAndAnswersCorrectly) {
  const auto p = vsr::testing::oracle_fit_params(kEnv);
  for (const auto& s : generate_dataset(6, 100, kEnv)) {
    const auto r = greedy_first_pass(p, s);
    ASSERT_TRUE(r.response.format_ok);
    ASSERT_EQ(r.answer, s.question.gold_answer);
    ASSERT_EQ(r.perception, render_perception(full_description(s.scene)));
  }
}

TEST(Factors, ProbabilitiesSumToOne) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = random_params(seed, 3.0);
    const auto s = generate_dataset(seed, 1, kEnv)[0];
    const auto r = sample_first_pass(p, s, seed);
    for (const auto& f : r.factors) {
      double sum = 0;
      for (double q : factor_probs(p.theta, f)) sum += q;
      ASSERT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(SecondPass, OracleFitReturnsGoldFromFullDescription) {
  const auto p = vsr::testing::oracle_fit_params(kEnv);
  for (const auto& s : generate_dataset(7, 100, kEnv)) {
    const auto r = sample_second_pass(p, render_perception(full_description(s.scene)), s.question);
    ASSERT_EQ(r.answer, s.question.gold_answer);
    ASSERT_EQ(r.record.mode, Conditioning::TextOnly);
  }
}

TEST(SecondPass, ZeroParamsGreedyPicksFirstToken) {
  const auto p = random_params(0, 0.0);
  const auto s = generate_dataset(7, 1, kEnv)[0];
  EXPECT_EQ(sample_second_pass(p, "", s.question).answer, AnswerToken::from_index(0));
  EXPECT_EQ(sample_second_pass(p, "garbage", s.question).answer, AnswerToken::from_index(0));
}

TEST(SecondPass, GreedyIsDeterministic) {
  const auto p = random_params(12);
  const auto s = generate_dataset(7, 1, kEnv)[0];
  const auto c = render_perception(full_description(s.scene));
  EXPECT_EQ(sample_second_pass(p, c, s.question).record, sample_second_pass(p, c, s.question).record);
}

TEST(SecondPass, NeverReadsSceneFeatures) {
  const auto p = random_params(13);
  for (const auto& s : generate_dataset(8, 200, kEnv)) {
    const auto c = render_perception(full_description(s.scene));
    const auto r = sample_second_pass(p, c, s.question, Decode::Sample, s.seed);
    for (const auto& f : r.factors)
      for (const auto& feats : f.choices)
        for (auto i : feats) ASSERT_LT(i, Architecture::scene_offset());
  }
  RolloutContext bad = RolloutContext::text_only("", QuestionSpec{});
  bad.scene = Scene(3, 3, {});
  EXPECT_THROW(run_policy(p, bad, greedy_chooser()), ConfigError);
}

TEST(LogprobGrad, MatchesFiniteDifferences) {
  Rng pick(21);
  for (std::uint64_t state = 0; state < 10; ++state) {
    const auto p = random_params(100 + state, 0.7);
    const auto s = generate_dataset(state, 1, kEnv)[0];
    const auto r = sample_first_pass(p, s, state);
    const auto lg = logprob_grad(p, r.factors, r.record.choices);
    for (int t = 0; t < 20; ++t) {
      const auto i = pick.below(p.theta.size());
      auto plus = p.theta, minus = p.theta;
      const double h = 1e-5;
      plus[i] += h;
      minus[i] -= h;
      const double fd = (trajectory_logprob(plus, r.factors, r.record.choices) -
                         trajectory_logprob(minus, r.factors, r.record.choices)) / (2 * h);
      ASSERT_LT(rel_err(lg.gradient[i], fd), 1e-4) << "coord " << i;
    }
  }
}

TEST(LogprobGrad, DeadFeaturesAndSingleChoiceFactorsHaveZeroGradient) {
  const auto p = random_params(3);
  const auto s = generate_dataset(3, 1, kEnv)[0];
  const auto r = sample_first_pass(p, s, 3);
  const auto lg = logprob_grad(p, r.factors, r.record.choices);
  std::vector<char> used(p.theta.size(), 0);
  for (const auto& f : r.factors)
    for (const auto& feats : f.choices)
      for (auto i : feats) used[i] = 1;
  for (std::size_t i = 0; i < used.size(); ++i)
    if (!used[i]) {
      EXPECT_EQ(lg.gradient[i], 0.0) << i;
    }

  Factor single{{{0u, 5u}}};
  std::vector<double> g(p.theta.size(), 0.0);
  accumulate_logprob_grad(p.theta, single, 0, 1.0, g);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Kl, IdentityIsExactlyZero) {
  const auto p = random_params(2);
  const PolicySnapshot ref(p);
  const auto s = generate_dataset(2, 1, kEnv)[0];
  const std::vector<std::vector<Factor>> ctx{sample_first_pass(p, s, 1).factors, sample_first_pass(p, s, 2).factors};
  const auto kl = kl_and_grad(p, ref, ctx);
  EXPECT_EQ(kl.kl, 0.0);
  for (double g : kl.gradient) EXPECT_EQ(g, 0.0);
}

TEST(Kl, NonNegativeUnderPerturbation) {
  Rng rng(6);
  const auto base = random_params(6);
  const PolicySnapshot ref(base);
  const auto data = generate_dataset(6, 20, kEnv);
  for (int t = 0; t < 1000; ++t) {
    auto p = base;
    for (double& v : p.theta) v += 0.5 * rng.normal();
    const auto& s = data[static_cast<std::size_t>(t) % data.size()];
    const std::vector<std::vector<Factor>> ctx{sample_first_pass(p, s, static_cast<std::uint64_t>(t)).factors};
    ASSERT_GE(kl_and_grad(p, ref, ctx).kl, 0.0);
  }
}

TEST(Kl, ClosedFormWithinThreeStandardErrorsOfMonteCarlo) {
  Rng rng(1234);
  for (std::uint64_t c = 0; c < 10; ++c) {
    const auto ref_p = random_params(500 + c, 0.5);
    auto p = ref_p;
    for (double& v : p.theta) v += 0.6 * rng.normal();
    const auto s = generate_dataset(c, 1, kEnv)[0];
    const auto factors = sample_first_pass(p, s, c).factors;
    const double closed = kl_and_grad(p, PolicySnapshot(ref_p), std::vector<std::vector<Factor>>{factors}).kl;
    std::vector<std::vector<double>> P, LP, LQ;
    for (const auto& f : factors) {
      P.push_back(factor_probs(p.theta, f));
      LP.push_back(factor_log_probs(p.theta, f));
      LQ.push_back(factor_log_probs(ref_p.theta, f));
    }
    double exact = 0;
    for (std::size_t k = 0; k < P.size(); ++k)
      for (std::size_t j = 0; j < P[k].size(); ++j) exact += P[k][j] * (LP[k][j] - LQ[k][j]);
    EXPECT_NEAR(closed, exact, 1e-12);
    Rng draw(7000 + c);
    const int n = 100000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
      double x = 0;
      for (std::size_t k = 0; k < factors.size(); ++k) {
        const auto j = draw.categorical(P[k]);
        x += LP[k][j] - LQ[k][j];
      }
      sum += x;
      sum2 += x * x;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    EXPECT_LE(std::abs(closed - mean), 3 * se) << "case " << c;
  }
}

TEST(Kl, GradientMatchesFiniteDifferences) {
  Rng pick(8);
  const auto ref_p = random_params(40, 0.5);
  auto p = random_params(41, 0.5);
  const PolicySnapshot ref(ref_p);
  const auto data = generate_dataset(40, 4, kEnv);
  std::vector<std::vector<Factor>> ctx;
  for (const auto& s : data) ctx.push_back(sample_first_pass(p, s, s.seed).factors);
  const auto kl = kl_and_grad(p, ref, ctx);
  for (int t = 0; t < 40; ++t) {
    const auto i = pick.below(p.theta.size());
    auto plus = p, minus = p;
    plus.theta[i] += 1e-5;
    minus.theta[i] -= 1e-5;
    const double fd = (kl_and_grad(plus, ref, ctx).kl - kl_and_grad(minus, ref, ctx).kl) / 2e-5;
    ASSERT_LT(rel_err(kl.gradient[i], fd), 1e-4);
  }
}

TEST(Snapshot, ImmutableUnderSourceMutation) {
  auto p = random_params(1);
  const PolicySnapshot snap(p, "start");
  const auto copy = snap.params();
  for (double& v : p.theta) v += 1.0;
  EXPECT_EQ(snap.params(), copy);
  EXPECT_EQ(snap.label(), "start");
}

TEST(Architecture, JsonRoundTripAndFingerprint) {
  const auto j = to_json(kArch);
  EXPECT_EQ(architecture_from_json(j), kArch);
  EnvConfig small = kEnv;
  small.rows = 2;
  small.max_objects = 4;
  EXPECT_NE(Architecture::for_env(small).fingerprint(), kArch.fingerprint());
  auto bad = j;
  bad["version"] = 99;
  EXPECT_THROW(architecture_from_json(bad), ArchitectureMismatch);
}
