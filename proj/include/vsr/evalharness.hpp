#ifndef VSR_EVALHARNESS_HPP
#define VSR_EVALHARNESS_HPP

// Accuracy evaluation and the language-shortcut audit.
//
// LSR = #(perception not self-contained and answer correct) / #(judged records)

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsr/errors.hpp"
#include "vsr/grpo.hpp"
#include "vsr/parallel.hpp"
#include "vsr/perception.hpp"
#include "vsr/policy.hpp"
#include "vsr/reward.hpp"
#include "vsr/scene.hpp"

namespace vsr {

enum class JudgeSource { Oracle, Remote };

inline std::string_view name(JudgeSource j) { return j == JudgeSource::Oracle ? "oracle" : "remote"; }

struct EvalRecord {
  std::uint64_t sample_id = 0;
  TemplateId template_id = TemplateId::Count;
  std::string question;
  std::string gold;
  StructuredResponse response;
  bool answer_correct = false;
  // Unset when the judge abstained or returned a malformed verdict.
  std::optional<bool> perception_self_contained;
  JudgeSource judge = JudgeSource::Oracle;
  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

/// Builds a record from a raw first-pass response; the perception flag is
/// filled by the judge.
inline EvalRecord make_record(const MultimodalSample& s, const std::string& raw,
                              const TagScheme& scheme) {
  EvalRecord r;
  r.sample_id = s.id;
  r.template_id = s.question.template_id;
  r.question = s.question.text;
  r.gold = s.question.gold_answer.text();
  auto parsed = parse_response(raw, scheme);
  if (auto* ok = std::get_if<StructuredResponse>(&parsed)) r.response = *ok;
  else r.response.raw = raw;
  const auto answer = extract_answer(raw, scheme);
  r.answer_correct = answer && accuracy_reward(*answer, s.question.gold_answer) == 1;
  return r;
}

/// Exact judge: the perception is self-contained iff the oracle determines the
/// gold answer from it.
inline bool oracle_self_contained(const std::string& perception, const QuestionSpec& q,
                                  const EnvConfig& env) {
  return self_contained(perception_or_empty(perception, env.rows, env.cols), q, OracleConfig{env});
}

struct EvalOptions {
  Decode decode = Decode::Greedy;
  std::uint64_t seed = 0;
  int samples_per_question = 1;  // only meaningful when sampling
  int threads = 1;
};

/// First-pass responses on every sample, judged by the oracle.
inline std::vector<EvalRecord> evaluate_records(const PolicyParameters& params,
                                                std::span<const MultimodalSample> dataset,
                                                const EvalOptions& opt = {}) {
  if (dataset.empty()) throw ConfigError("evaluation dataset is empty");
  const int per = opt.decode == Decode::Greedy ? 1 : std::max(1, opt.samples_per_question);
  const auto scheme = TagScheme::see_think();
  const EnvConfig env = params.arch.env();
  std::vector<EvalRecord> out(dataset.size() * static_cast<std::size_t>(per));
  parallel_for(dataset.size(), opt.threads, [&](std::size_t i) {
    const auto& s = dataset[i];
    for (int k = 0; k < per; ++k) {
      const Rollout r = opt.decode == Decode::Greedy
                            ? greedy_first_pass(params, s, scheme)
                            : sample_first_pass(params, s,
                                                derive_seed(opt.seed, "eval",
                                                            {s.id, static_cast<std::uint64_t>(k)}),
                                                scheme);
      EvalRecord rec = make_record(s, r.response.raw, scheme);
      rec.perception_self_contained = oracle_self_contained(rec.response.perception, s.question, env);
      rec.judge = JudgeSource::Oracle;
      out[i * static_cast<std::size_t>(per) + static_cast<std::size_t>(k)] = std::move(rec);
    }
  });
  return out;
}

inline double accuracy_of(std::span<const EvalRecord> records) {
  if (records.empty()) throw ConfigError("no records to score");
  std::size_t ok = 0;
  for (const auto& r : records) ok += r.answer_correct ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(records.size());
}

inline double evaluate_accuracy(const PolicyParameters& params,
                                std::span<const MultimodalSample> dataset,
                                const EvalOptions& opt = {}) {
  if (dataset.empty()) throw ConfigError("evaluation dataset is empty");
  const auto scheme = TagScheme::see_think();
  const int per = opt.decode == Decode::Greedy ? 1 : std::max(1, opt.samples_per_question);
  std::vector<char> correct(dataset.size() * static_cast<std::size_t>(per), 0);
  parallel_for(dataset.size(), opt.threads, [&](std::size_t i) {
    const auto& s = dataset[i];
    for (int k = 0; k < per; ++k) {
      const Rollout r = opt.decode == Decode::Greedy
                            ? greedy_first_pass(params, s, scheme)
                            : sample_first_pass(params, s,
                                                derive_seed(opt.seed, "eval",
                                                            {s.id, static_cast<std::uint64_t>(k)}),
                                                scheme);
      const auto a = extract_answer(r.response.raw, scheme);
      correct[i * static_cast<std::size_t>(per) + static_cast<std::size_t>(k)] =
          a && accuracy_reward(*a, s.question.gold_answer) == 1;
    }
  });
  std::size_t ok = 0;
  for (char c : correct) ok += c ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(correct.size());
}

struct LsrCounts {
  std::size_t total = 0;
  std::size_t shortcut_count = 0;
  double lsr() const {
    return total == 0 ? 0.0 : static_cast<double>(shortcut_count) / static_cast<double>(total);
  }
};

struct LsrReport {
  std::size_t total = 0;
  std::size_t shortcut_count = 0;
  double lsr = 0.0;
  // Records whose judge gave no usable verdict; not counted in `total`.
  std::size_t excluded = 0;
  std::size_t self_contained_count = 0;
  std::size_t correct_count = 0;
  std::map<std::string, LsrCounts> per_template;
};

inline LsrReport compute_lsr(std::span<const EvalRecord> records) {
  if (records.empty()) throw ConfigError("compute_lsr needs at least one record");
  LsrReport rep;
  for (const auto& r : records) {
    if (!r.perception_self_contained) {
      ++rep.excluded;
      continue;
    }
    const bool shortcut = r.answer_correct && !*r.perception_self_contained;
    ++rep.total;
    rep.shortcut_count += shortcut ? 1 : 0;
    rep.self_contained_count += *r.perception_self_contained ? 1 : 0;
    rep.correct_count += r.answer_correct ? 1 : 0;
    auto& t = rep.per_template[std::string(name(r.template_id))];
    ++t.total;
    t.shortcut_count += shortcut ? 1 : 0;
  }
  if (rep.total == 0) throw ConfigError("every record was excluded by the judge");
  rep.lsr = static_cast<double>(rep.shortcut_count) / static_cast<double>(rep.total);
  return rep;
}

inline double self_containment_rate(const LsrReport& r) {
  return static_cast<double>(r.self_contained_count) / static_cast<double>(r.total);
}

/// Accuracy, self-containment and LSR from one set of oracle-judged records.
inline EvalSnapshot evaluate_snapshot(const PolicyParameters& params,
                                      std::span<const MultimodalSample> dataset,
                                      const EvalOptions& opt = {}) {
  const auto records = evaluate_records(params, dataset, opt);
  const auto rep = compute_lsr(records);
  return {accuracy_of(records), self_containment_rate(rep), rep.lsr};
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json j = {{"sample_id", r.sample_id},
                      {"template_id", name(r.template_id)},
                      {"question", r.question},
                      {"gold", r.gold},
                      {"raw", r.response.raw},
                      {"perception", r.response.perception},
                      {"reasoning", r.response.reasoning},
                      {"answer", r.response.answer},
                      {"format_ok", r.response.format_ok},
                      {"answer_correct", r.answer_correct},
                      {"judge", name(r.judge)}};
  j["perception_self_contained"] =
      r.perception_self_contained ? nlohmann::json(*r.perception_self_contained) : nlohmann::json();
  return j;
}

inline EvalRecord eval_record_from_json(const nlohmann::json& j) try {
  EvalRecord r;
  r.sample_id = j.at("sample_id").get<std::uint64_t>();
  auto t = parse_template(j.at("template_id").get<std::string>());
  if (!t) throw SerializationError("unknown template_id in eval record");
  r.template_id = *t;
  r.question = j.value("question", std::string{});
  r.gold = j.value("gold", std::string{});
  r.response.raw = j.value("raw", std::string{});
  r.response.perception = j.value("perception", std::string{});
  r.response.reasoning = j.value("reasoning", std::string{});
  r.response.answer = j.value("answer", std::string{});
  r.response.format_ok = j.value("format_ok", false);
  r.answer_correct = j.at("answer_correct").get<bool>();
  const auto& sc = j.at("perception_self_contained");
  if (!sc.is_null()) r.perception_self_contained = sc.get<bool>();
  r.judge = j.value("judge", std::string("oracle")) == "remote" ? JudgeSource::Remote
                                                                 : JudgeSource::Oracle;
  return r;
} catch (const nlohmann::json::exception& e) {
  throw SerializationError(std::string("bad eval record: ") + e.what());
}

inline nlohmann::json to_json(const LsrReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [k, v] : r.per_template)
    per[k] = {{"total", v.total}, {"shortcut_count", v.shortcut_count}, {"lsr", v.lsr()}};
  return {{"total", r.total},
          {"shortcut_count", r.shortcut_count},
          {"lsr", r.lsr},
          {"excluded", r.excluded},
          {"self_contained_count", r.self_contained_count},
          {"correct_count", r.correct_count},
          {"per_template", per}};
}

}  // namespace vsr

#endif  // VSR_EVALHARNESS_HPP
