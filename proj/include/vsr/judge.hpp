#ifndef VSR_JUDGE_HPP
#define VSR_JUDGE_HPP

// HTTP client for a hosted judge model.
//
// Request: POST <endpoint> with {"prompt", "temperature", "max_tokens"}.
// Response: the raw completion text. An optional bearer token is read from
// the environment variable named in JudgeEndpoint::token_env.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vsr/errors.hpp"
#include "vsr/evalharness.hpp"
#include "vsr/parallel.hpp"
#include "vsr/prompts.hpp"
#include "vsr/scene.hpp"

namespace vsr {

struct JudgeEndpoint {
  std::string url;  // http://host:port/path
  std::string token_env = "VSR_JUDGE_TOKEN";
  int timeout_ms = 10000;
  int attempts = 3;
  int backoff_ms = 100;  // doubled after each failed attempt
  int max_in_flight = 4;
  double temperature = 0.0;
  int max_tokens = 512;
};

enum class JudgeKind { Answer, SelfContainment };

struct SplitUrl {
  std::string origin;
  std::string path;
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0)
    throw ConfigError("judge endpoint must be an http:// URL: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

/// One POST with bounded retries; returns the response body.
inline std::string judge_request(const JudgeEndpoint& ep, const std::string& prompt) {
  if (ep.url.empty()) throw ConfigError("judge endpoint is not configured");
  const auto [origin, path] = split_url(ep.url);
  const nlohmann::json body = {
      {"prompt", prompt}, {"temperature", ep.temperature}, {"max_tokens", ep.max_tokens}};
  httplib::Headers headers;
  if (const char* tok = std::getenv(ep.token_env.c_str()); tok && *tok)
    headers.emplace("Authorization", std::string("Bearer ") + tok);
  std::string last_error = "no attempt made";
  int backoff = ep.backoff_ms;
  for (int attempt = 0; attempt < std::max(1, ep.attempts); ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
    httplib::Client cli(origin);
    const auto t = std::chrono::milliseconds(ep.timeout_ms);
    cli.set_connection_timeout(t);
    cli.set_read_timeout(t);
    cli.set_write_timeout(t);
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status / 100 != 2) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    return res->body;
  }
  throw JudgeUnavailable("judge at " + ep.url + " failed after " + std::to_string(ep.attempts) +
                         " attempts: " + last_error);
}

inline std::string lower_trimmed(std::string_view s) {
  std::string out;
  for (char c : s)
    if (std::isalnum(static_cast<unsigned char>(c)) || c == ' ')
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  const auto b = out.find_first_not_of(' ');
  if (b == std::string::npos) return {};
  return out.substr(b, out.find_last_not_of(' ') - b + 1);
}

/// Verdict inside exactly one <judgment></judgment> pair.
inline bool parse_judgment(std::string_view body) {
  constexpr std::string_view open = "<judgment>", close = "</judgment>";
  const auto a = body.find(open);
  if (a == std::string_view::npos) throw MalformedVerdict("no <judgment> tag in judge output");
  const auto b = body.find(close, a + open.size());
  if (b == std::string_view::npos) throw MalformedVerdict("unclosed <judgment> tag");
  if (body.find(open, a + open.size()) != std::string_view::npos)
    throw MalformedVerdict("more than one <judgment> tag");
  const auto v = lower_trimmed(body.substr(a + open.size(), b - a - open.size()));
  for (std::string_view yes : {"correct", "yes", "true", "right"})
    if (v == yes) return true;
  for (std::string_view no : {"incorrect", "no", "false", "wrong"})
    if (v == no) return false;
  throw MalformedVerdict("unrecognised verdict '" + v + "'");
}

/// Content of the last \boxed{...} in the completion.
inline std::string parse_boxed(std::string_view body) {
  constexpr std::string_view open = "\\boxed{";
  const auto a = body.rfind(open);
  if (a == std::string_view::npos) throw MalformedVerdict("no \\boxed{} answer in judge output");
  const auto b = body.find('}', a + open.size());
  if (b == std::string_view::npos) throw MalformedVerdict("unclosed \\boxed{");
  return std::string(body.substr(a + open.size(), b - a - open.size()));
}

/// Answer kind: fields Question, Reference, Candidate; judge template.
/// Self-containment kind: fields Description, Question, Gold; the
/// caption-reasoner template, then the boxed answer is compared with Gold.
inline bool remote_judge(const JudgeEndpoint& ep, JudgeKind kind, const PromptFields& fields) {
  if (kind == JudgeKind::Answer)
    return parse_judgment(judge_request(ep, render_prompt(PromptKind::Judge, fields)));
  const auto gold = fields.find("Gold");
  if (gold == fields.end()) throw MissingPlaceholder("self-containment judging needs Gold");
  const auto expected = normalize_answer(gold->second);
  if (!expected) throw ConfigError("gold answer is not in the vocabulary: " + gold->second);
  PromptFields f = fields;
  f.erase("Gold");
  const auto answer = parse_boxed(judge_request(ep, render_prompt(PromptKind::CaptionReasoner, f)));
  const auto got = normalize_answer(answer);
  return got && *got == *expected;
}

struct RemoteJudgeStats {
  std::size_t judged = 0;
  std::size_t unavailable = 0;
  std::size_t malformed = 0;
};

/// Replaces the self-containment flag of every record with the remote
/// verdict. Failures leave the flag unset so compute_lsr excludes them.
inline RemoteJudgeStats judge_records_remote(const JudgeEndpoint& ep, std::span<EvalRecord> records) {
  std::vector<int> outcome(records.size(), 0);
  parallel_for(records.size(), std::max(1, ep.max_in_flight), [&](std::size_t i) {
    auto& r = records[i];
    r.judge = JudgeSource::Remote;
    r.perception_self_contained.reset();
    try {
      r.perception_self_contained =
          remote_judge(ep, JudgeKind::SelfContainment,
                       {{"Description", r.response.perception}, {"Question", r.question}, {"Gold", r.gold}});
      outcome[i] = 0;
    } catch (const JudgeUnavailable&) {
      outcome[i] = 1;
    } catch (const MalformedVerdict&) {
      outcome[i] = 2;
    }
  });
  RemoteJudgeStats st;
  for (int o : outcome) (o == 0 ? st.judged : o == 1 ? st.unavailable : st.malformed)++;
  return st;
}

}  // namespace vsr

#endif  // VSR_JUDGE_HPP
