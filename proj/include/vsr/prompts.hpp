#ifndef VSR_PROMPTS_HPP
#define VSR_PROMPTS_HPP

// Prompt templates. The text below is kept byte-identical to the files under
// templates/; tests compare the two.

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vsr/errors.hpp"

namespace vsr {

enum class PromptKind { SeeThink, CaptionReasoner, VisionReasoner, Judge };

inline constexpr std::array<PromptKind, 4> kAllPromptKinds{
    PromptKind::SeeThink, PromptKind::CaptionReasoner, PromptKind::VisionReasoner,
    PromptKind::Judge};

inline std::string_view name(PromptKind k) {
  switch (k) {
    case PromptKind::SeeThink: return "see-think";
    case PromptKind::CaptionReasoner: return "caption-reasoner";
    case PromptKind::VisionReasoner: return "vision-reasoner";
    case PromptKind::Judge: return "judge";
  }
  return "?";
}

inline std::optional<PromptKind> parse_prompt_kind(std::string_view s) {
  for (auto k : kAllPromptKinds)
    if (name(k) == s) return k;
  return std::nullopt;
}

// File name of the golden copy under templates/.
inline std::string_view template_file(PromptKind k) {
  switch (k) {
    case PromptKind::SeeThink: return "see_think.txt";
    case PromptKind::CaptionReasoner: return "caption_reasoner.txt";
    case PromptKind::VisionReasoner: return "vision_reasoner.txt";
    case PromptKind::Judge: return "judge.txt";
  }
  return "";
}

inline std::string_view template_text(PromptKind k) {
  switch (k) {
    case PromptKind::SeeThink:
      return R"({Question}
You are tasked with analyzing an image/video to generate a detailed description to help you answer the question. First analyze the image/video and produce a self-contained description—detailed enough that can lead to the correct answer. Wrap the entire description in <description> </description> tags.

Next, engage in an internal dialogue and include self-reflection or verification in your reasoning process. Provide your detailed, step-by-step reasoning based on the image/video description information and image/video, and enclose this part within <think> </think> tags.

Finally, provide a single word or phrase answer to the question in \boxed{}.

The output format should be: <description> image/video description here </description> <think> reasoning process here </think> \boxed{FINAL ANSWER here}.
)";
    case PromptKind::CaptionReasoner:
      return R"(Text description: {Description}

Question: {Question}

You are provided a text description of a problem and a question. Determine the answer to the question based on the text description. First provide an internal step-by-step reasoning within <think> </think> tags, then provide a single word or phrase answer in \boxed{}.
)";
    case PromptKind::VisionReasoner:
      return R"(Question: {Question}

You FIRST think about the reasoning process as an internal monologue and then provide the final answer. The reasoning process MUST BE enclosed within <think> </think> tags. The final answer MUST BE put in \boxed{}.
)";
    case PromptKind::Judge:
      return R"(Question: {Question}

Reference: {Reference}

Candidate: {Candidate}

You are provided a question, a gold answer, and a candidate answer. Your task is to judge the correctness of the candidate answer. Return your judgment enclosed with <judgment> </judgment>.
)";
  }
  return "";
}

inline std::vector<std::string> placeholders(PromptKind k) {
  switch (k) {
    case PromptKind::SeeThink: return {"Question"};
    case PromptKind::CaptionReasoner: return {"Description", "Question"};
    case PromptKind::VisionReasoner: return {"Question"};
    case PromptKind::Judge: return {"Question", "Reference", "Candidate"};
  }
  return {};
}

using PromptFields = std::map<std::string, std::string, std::less<>>;

/// Substitutes `{Name}` placeholders in one left-to-right pass, so values that
/// themselves contain braces are copied verbatim. Extra fields are ignored.
inline std::string render_prompt(PromptKind kind, const PromptFields& fields) {
  const auto keys = placeholders(kind);
  std::string missing;
  for (const auto& k : keys)
    if (!fields.contains(k)) missing += (missing.empty() ? "" : ", ") + k;
  if (!missing.empty())
    throw MissingPlaceholder(std::string(name(kind)) + " prompt is missing: " + missing);

  const std::string_view tmpl = template_text(kind);
  std::string out;
  out.reserve(tmpl.size() + 256);
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        const auto key = tmpl.substr(i + 1, close - i - 1);
        if (std::find(keys.begin(), keys.end(), key) != keys.end()) {
          out += fields.find(key)->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

}  // namespace vsr

#endif  // VSR_PROMPTS_HPP
