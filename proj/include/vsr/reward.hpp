#ifndef VSR_REWARD_HPP
#define VSR_REWARD_HPP

// Reward components: format, answer accuracy, and the self-visual reward
// obtained by re-asking the policy text-only with its own perception.

#include <cctype>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "vsr/errors.hpp"
#include "vsr/policy.hpp"
#include "vsr/scene.hpp"
#include "vsr/structured_output.hpp"

namespace vsr {

struct RewardBreakdown {
  int r_fmt = 0;
  int r_ans = 0;
  int r_visual = 0;
  double alpha = 0.5;
  double total = 0.0;
  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

inline int format_reward(std::string_view raw, const TagScheme& scheme) {
  return parses(raw, scheme) ? 1 : 0;
}

inline int accuracy_reward(std::string_view answer, AnswerToken gold) {
  const auto a = normalize_answer(answer);
  return a && *a == gold ? 1 : 0;
}

/// Last whitespace/punctuation-delimited word of the raw text that names a
/// vocabulary token. Used when the layout is broken.
inline std::optional<AnswerToken> last_vocabulary_token(std::string_view raw) {
  std::optional<AnswerToken> last;
  std::size_t i = 0;
  while (i < raw.size()) {
    while (i < raw.size() && !std::isalnum(static_cast<unsigned char>(raw[i]))) ++i;
    const std::size_t start = i;
    while (i < raw.size() && std::isalnum(static_cast<unsigned char>(raw[i]))) ++i;
    if (i > start)
      if (auto t = normalize_answer(raw.substr(start, i - start))) last = t;
  }
  return last;
}

/// The answer segment when the layout parses, else the fallback extraction.
inline std::optional<std::string> extract_answer(std::string_view raw, const TagScheme& scheme) {
  auto parsed = parse_response(raw, scheme);
  if (auto* r = std::get_if<StructuredResponse>(&parsed)) return r->answer;
  if (auto t = last_vocabulary_token(raw)) return t->text();
  return std::nullopt;
}

/// Perception segment of a well-formed response, else empty.
inline std::string extract_perception(std::string_view raw, const TagScheme& scheme) {
  auto parsed = parse_response(raw, scheme);
  if (auto* r = std::get_if<StructuredResponse>(&parsed)) return r->perception;
  return {};
}

/// Greedy text-only answer from (perception, question) compared with gold.
/// Takes no scene, so the original image cannot leak in.
inline int visual_self_reward(const PolicyParameters& params, const std::string& perception,
                              const QuestionSpec& question, AnswerToken gold) {
  return sample_second_pass(params, perception, question, Decode::Greedy).answer == gold ? 1 : 0;
}

inline RewardBreakdown total_reward(int r_fmt, int r_ans, int r_visual, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  auto binary = [](int v) { return v == 0 || v == 1; };
  if (!binary(r_fmt) || !binary(r_ans) || !binary(r_visual))
    throw ConfigError("reward components are binary");
  return {r_fmt, r_ans, r_visual, alpha,
          static_cast<double>(r_visual) + static_cast<double>(r_ans) + alpha * r_fmt};
}

inline nlohmann::json to_json(const RewardBreakdown& b) {
  return {{"r_fmt", b.r_fmt}, {"r_ans", b.r_ans}, {"r_visual", b.r_visual},
          {"alpha", b.alpha}, {"total", b.total}};
}

}  // namespace vsr

#endif  // VSR_REWARD_HPP
