#ifndef VSR_STRUCTURED_OUTPUT_HPP
#define VSR_STRUCTURED_OUTPUT_HPP

// Grammar for the ordered perception -> think -> answer response layout.
//
// A response is well-formed iff each of the six delimiters occurs exactly
// once, they appear in order, every segment is non-empty after trimming, and
// only whitespace surrounds the segments.

#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "vsr/errors.hpp"

namespace vsr {

enum class AnswerStyle { Tags, Boxed };

struct TagScheme {
  std::string perception_open;
  std::string perception_close;
  std::string think_open;
  std::string think_close;
  AnswerStyle answer_style = AnswerStyle::Tags;
  std::string answer_open;
  std::string answer_close;

  /// `<visual perception>` / `<think>` / `<answer>`: the training layout.
  static TagScheme see_think() {
    return {"<visual perception>", "</visual perception>", "<think>", "</think>",
            AnswerStyle::Tags,     "<answer>",             "</answer>"};
  }

  /// `<description>` / `<think>` / `\boxed{...}`: the layout requested by the
  /// shipped See-Think prompt, for talking to external models.
  static TagScheme description_boxed() {
    return {"<description>", "</description>", "<think>", "</think>",
            AnswerStyle::Boxed, "\\boxed{",    "}"};
  }

  std::array<std::string_view, 6> delimiters() const {
    return {perception_open, perception_close, think_open, think_close, answer_open, answer_close};
  }

  void validate() const {
    const auto d = delimiters();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d[i].empty()) throw ConfigError("tag scheme has an empty delimiter");
      for (std::size_t j = 0; j < i; ++j)
        if (d[i] == d[j]) throw ConfigError("tag scheme delimiters must be pairwise distinct");
    }
  }
};

struct StructuredResponse {
  std::string perception;
  std::string reasoning;
  std::string answer;
  std::string raw;
  bool format_ok = false;
  friend bool operator==(const StructuredResponse&, const StructuredResponse&) = default;
};

enum class FormatRule { MissingTag, DuplicateTag, WrongOrder, StrayContent, EmptySegment };

inline std::string_view name(FormatRule r) {
  switch (r) {
    case FormatRule::MissingTag: return "MissingTag";
    case FormatRule::DuplicateTag: return "DuplicateTag";
    case FormatRule::WrongOrder: return "WrongOrder";
    case FormatRule::StrayContent: return "StrayContent";
    case FormatRule::EmptySegment: return "EmptySegment";
  }
  return "?";
}

struct FormatError {
  FormatRule rule;
  std::string detail;
};

using ParseResult = std::variant<StructuredResponse, FormatError>;

namespace detail {

inline bool is_blank(std::string_view s) {
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  return true;
}

inline std::string trimmed(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size()))
    ++n;
  return n;
}

}  // namespace detail

/// Total over arbitrary input: returns either the three segments or the first
/// violated rule, checked in the order missing, duplicate, order, stray,
/// empty.
inline ParseResult parse_response(std::string_view text, const TagScheme& scheme) {
  const auto delims = scheme.delimiters();
  std::array<std::size_t, 6> pos{};
  for (std::size_t i = 0; i < delims.size(); ++i) {
    if (text.find(delims[i]) == std::string_view::npos)
      return FormatError{FormatRule::MissingTag, "missing " + std::string(delims[i])};
  }
  for (std::size_t i = 0; i < delims.size(); ++i) {
    if (detail::count_occurrences(text, delims[i]) > 1)
      return FormatError{FormatRule::DuplicateTag, "repeated " + std::string(delims[i])};
    pos[i] = text.find(delims[i]);
  }
  for (std::size_t i = 1; i < pos.size(); ++i) {
    if (pos[i] < pos[i - 1] + delims[i - 1].size())
      return FormatError{FormatRule::WrongOrder,
                         std::string(delims[i]) + " before " + std::string(delims[i - 1])};
  }
  auto between = [&](std::size_t a, std::size_t b) {
    const std::size_t start = pos[a] + delims[a].size();
    return text.substr(start, pos[b] - start);
  };
  const std::string_view lead = text.substr(0, pos[0]);
  const std::string_view trail = text.substr(pos[5] + delims[5].size());
  if (!detail::is_blank(lead) || !detail::is_blank(between(1, 2)) ||
      !detail::is_blank(between(3, 4)) || !detail::is_blank(trail))
    return FormatError{FormatRule::StrayContent, "non-whitespace outside the segments"};

  StructuredResponse r;
  r.perception = detail::trimmed(between(0, 1));
  r.reasoning = detail::trimmed(between(2, 3));
  r.answer = detail::trimmed(between(4, 5));
  if (r.perception.empty() || r.reasoning.empty() || r.answer.empty())
    return FormatError{FormatRule::EmptySegment, "a segment is empty"};
  r.raw = std::string(text);
  r.format_ok = true;
  return r;
}

inline bool parses(std::string_view text, const TagScheme& scheme) {
  return std::holds_alternative<StructuredResponse>(parse_response(text, scheme));
}

/// Renders `open c close \n open t close \n open a close`. Segment text must
/// be non-empty and must not contain any delimiter of the scheme.
inline std::string serialize_response(const StructuredResponse& r, const TagScheme& scheme) {
  const std::array<std::string_view, 3> segments{r.perception, r.reasoning, r.answer};
  for (auto seg : segments) {
    if (detail::is_blank(seg)) throw SerializationError("response segment is empty");
    for (auto d : scheme.delimiters())
      if (seg.find(d) != std::string_view::npos)
        throw SerializationError("segment text contains delimiter " + std::string(d));
  }
  return scheme.perception_open + r.perception + scheme.perception_close + "\n" +
         scheme.think_open + r.reasoning + scheme.think_close + "\n" + scheme.answer_open +
         r.answer + scheme.answer_close;
}

/// Builds a response and fills in `raw` and `format_ok`.
inline StructuredResponse make_response(std::string perception, std::string reasoning,
                                        std::string answer, const TagScheme& scheme) {
  StructuredResponse r{std::move(perception), std::move(reasoning), std::move(answer), {}, true};
  r.raw = serialize_response(r, scheme);
  return r;
}

}  // namespace vsr

#endif  // VSR_STRUCTURED_OUTPUT_HPP
