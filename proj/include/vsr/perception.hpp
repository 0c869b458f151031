#ifndef VSR_PERCEPTION_HPP
#define VSR_PERCEPTION_HPP

// Symbolic perception statements, their text form, and the exact
// self-containment oracle.
//
// Semantics are open-world: a cell no statement mentions may hold nothing or
// any object from the active vocabulary. "empty" is an explicit assertion.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "vsr/errors.hpp"
#include "vsr/scene.hpp"

namespace vsr {

struct EmptyCell {
  friend constexpr bool operator==(EmptyCell, EmptyCell) = default;
};

using PartialClaim = std::variant<Shape, Color, Size>;

struct PerceptionStatement {
  CellPos cell;
  std::variant<EmptyCell, Object, PartialClaim> assertion;
  friend bool operator==(const PerceptionStatement&, const PerceptionStatement&) = default;
};

inline constexpr std::string_view kNothingObserved = "nothing observed";

inline std::string render_statement(const PerceptionStatement& s) {
  std::string out = "cell (" + std::to_string(s.cell.row) + "," + std::to_string(s.cell.col) + "): ";
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, EmptyCell>) {
          out += "empty";
        } else if constexpr (std::is_same_v<T, Object>) {
          out += describe(a);
        } else {
          std::visit([&](auto attr) { out += name(attr); }, a);
        }
      },
      s.assertion);
  return out;
}

inline std::string render_perception(const std::vector<PerceptionStatement>& statements) {
  if (statements.empty()) return std::string(kNothingObserved);
  std::string out;
  for (std::size_t i = 0; i < statements.size(); ++i) {
    if (i) out += "; ";
    out += render_statement(statements[i]);
  }
  return out;
}

/// Every cell of the scene stated in full, row-major.
inline std::vector<PerceptionStatement> full_description(const Scene& scene) {
  std::vector<PerceptionStatement> out;
  const auto grid = scene.grid();
  for (int r = 0; r < scene.rows(); ++r)
    for (int c = 0; c < scene.cols(); ++c) {
      const auto& cell = grid[static_cast<std::size_t>(r * scene.cols() + c)];
      PerceptionStatement s{{r, c}, EmptyCell{}};
      if (cell) s.assertion = *cell;
      out.push_back(s);
    }
  return out;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::optional<int> parse_small_int(std::string_view s) {
  s = trim(s);
  if (s.empty() || s.size() > 3) return std::nullopt;
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

inline std::optional<PerceptionStatement> parse_statement(std::string_view chunk, int rows,
                                                          int cols) {
  chunk = trim(chunk);
  constexpr std::string_view prefix = "cell (";
  if (chunk.substr(0, prefix.size()) != prefix) return std::nullopt;
  chunk.remove_prefix(prefix.size());
  const auto close = chunk.find("):");
  if (close == std::string_view::npos) return std::nullopt;
  const auto coords = split(chunk.substr(0, close), ',');
  if (coords.size() != 2) return std::nullopt;
  auto r = parse_small_int(coords[0]);
  auto c = parse_small_int(coords[1]);
  if (!r || !c || *r >= rows || *c >= cols) return std::nullopt;

  PerceptionStatement st{{*r, *c}, EmptyCell{}};
  std::vector<std::string_view> words;
  for (auto w : split(trim(chunk.substr(close + 2)), ' '))
    if (!w.empty()) words.push_back(w);
  if (words.size() == 1) {
    if (words[0] == "empty") return st;
    if (auto v = parse_shape(words[0])) st.assertion = PartialClaim{*v};
    else if (auto v2 = parse_color(words[0])) st.assertion = PartialClaim{*v2};
    else if (auto v3 = parse_size(words[0])) st.assertion = PartialClaim{*v3};
    else return std::nullopt;
    return st;
  }
  if (words.size() == 3) {
    auto z = parse_size(words[0]);
    auto col = parse_color(words[1]);
    auto sh = parse_shape(words[2]);
    if (!z || !col || !sh) return std::nullopt;
    st.assertion = Object{*sh, *col, *z};
    return st;
  }
  return std::nullopt;
}

}  // namespace detail

/// Parses rendered perception text. Returns nullopt when any chunk is not a
/// well-formed in-grid statement.
inline std::optional<std::vector<PerceptionStatement>> parse_perception(std::string_view text,
                                                                        int rows, int cols) {
  text = detail::trim(text);
  std::vector<PerceptionStatement> out;
  if (text == kNothingObserved) return out;
  for (auto chunk : detail::split(text, ';')) {
    auto st = detail::parse_statement(chunk, rows, cols);
    if (!st) return std::nullopt;
    out.push_back(*st);
  }
  return out;
}

/// Unparseable perception counts as saying nothing.
inline std::vector<PerceptionStatement> perception_or_empty(std::string_view text, int rows,
                                                            int cols) {
  auto parsed = parse_perception(text, rows, cols);
  return parsed ? std::move(*parsed) : std::vector<PerceptionStatement>{};
}

// ---------------------------------------------------------------------------
// Cell state sets. State 0 is "empty"; state 1 + k encodes the k-th object of
// the active vocabulary (shape-major, then color, then size).

class CellStates {
 public:
  explicit CellStates(const EnvConfig& vocab) : vocab_(vocab) {}

  int count() const { return 1 + vocab_.num_shapes * vocab_.num_colors * vocab_.num_sizes; }

  Object object(int state) const {
    const int k = state - 1;
    const int per_shape = vocab_.num_colors * vocab_.num_sizes;
    return Object{static_cast<Shape>(k / per_shape),
                  static_cast<Color>((k % per_shape) / vocab_.num_sizes),
                  static_cast<Size>(k % vocab_.num_sizes)};
  }

  std::optional<int> state_of(const std::optional<Object>& o) const {
    if (!o) return 0;
    if (static_cast<int>(o->shape) >= vocab_.num_shapes ||
        static_cast<int>(o->color) >= vocab_.num_colors ||
        static_cast<int>(o->size) >= vocab_.num_sizes)
      return std::nullopt;
    return 1 + (static_cast<int>(o->shape) * vocab_.num_colors + static_cast<int>(o->color)) *
                   vocab_.num_sizes +
           static_cast<int>(o->size);
  }

  std::uint32_t all() const { return (count() >= 32) ? ~0u : ((1u << count()) - 1u); }

  std::uint32_t admitted_by(const PerceptionStatement& st) const {
    std::uint32_t mask = 0;
    for (int s = 0; s < count(); ++s) {
      const bool ok = std::visit(
          [&](const auto& a) -> bool {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, EmptyCell>) {
              return s == 0;
            } else if constexpr (std::is_same_v<T, Object>) {
              return s != 0 && object(s) == a;
            } else {
              if (s == 0) return false;
              const Object o = object(s);
              return std::visit(
                  [&](auto v) -> bool {
                    using V = std::decay_t<decltype(v)>;
                    if constexpr (std::is_same_v<V, Shape>) return o.shape == v;
                    else if constexpr (std::is_same_v<V, Color>) return o.color == v;
                    else return o.size == v;
                  },
                  a);
            }
          },
          st.assertion);
      if (ok) mask |= 1u << s;
    }
    return mask;
  }

 private:
  EnvConfig vocab_;
};

/// Per-cell admissible state masks after intersecting every statement.
/// Throws Contradiction when some cell admits nothing.
inline std::vector<std::uint32_t> consistent_cell_masks(
    const std::vector<PerceptionStatement>& statements, const EnvConfig& env) {
  CellStates states(env);
  std::vector<std::uint32_t> masks(static_cast<std::size_t>(env.cells()), states.all());
  for (const auto& st : statements) {
    if (st.cell.row < 0 || st.cell.row >= env.rows || st.cell.col < 0 || st.cell.col >= env.cols)
      throw ConfigError("perception statement outside the grid");
    masks[static_cast<std::size_t>(st.cell.row * env.cols + st.cell.col)] &= states.admitted_by(st);
  }
  for (std::size_t i = 0; i < masks.size(); ++i)
    if (masks[i] == 0)
      throw Contradiction("statements about cell (" + std::to_string(static_cast<int>(i) / env.cols) +
                          "," + std::to_string(static_cast<int>(i) % env.cols) +
                          ") admit no contents");
  return masks;
}

struct Underdetermined {
  friend constexpr bool operator==(Underdetermined, Underdetermined) = default;
};

using OracleVerdict = std::variant<AnswerToken, Underdetermined>;

inline bool is_determined(const OracleVerdict& v) { return std::holds_alternative<AnswerToken>(v); }

struct OracleConfig {
  EnvConfig env;
  // Cap on the number of distinct partial-answer states carried between cells.
  std::size_t max_states = 1u << 16;
};

/// Decides whether the statements pin down the answer. The consistent scenes
/// are the Cartesian product of per-cell admissible states, and every
/// question template aggregates cell by cell, so the reachable set of partial
/// answers is propagated cell by cell instead of materializing each scene.
/// The final set of answers equals the one an explicit enumeration would
/// produce.
inline OracleVerdict perception_oracle(const std::vector<PerceptionStatement>& statements,
                                       const QuestionSpec& q, const OracleConfig& cfg) {
  const auto masks = consistent_cell_masks(statements, cfg.env);
  CellStates states(cfg.env);

  // Partial answer: (matches so far, capped at 2 for lookup; referent value).
  using Partial = std::pair<int, int>;
  const bool lookup = q.template_id == TemplateId::Lookup;
  std::set<Partial> frontier{{0, -1}};
  for (std::uint32_t mask : masks) {
    // Distinct contributions of this cell: -2 = no match, else value of match.
    std::set<int> contrib;
    for (int s = 0; s < states.count(); ++s) {
      if (!(mask & (1u << s))) continue;
      if (s == 0 || !q.filter.matches(states.object(s))) {
        contrib.insert(-2);
        continue;
      }
      const Object o = states.object(s);
      contrib.insert(lookup ? (q.target == Attribute::Shape ? static_cast<int>(o.shape)
                                                             : static_cast<int>(o.color))
                            : 0);
    }
    std::set<Partial> next;
    for (const auto& [n, v] : frontier) {
      for (int c : contrib) {
        if (c == -2) {
          next.insert({n, v});
        } else if (lookup) {
          next.insert(n == 0 ? Partial{1, c} : Partial{2, -1});
        } else if (q.template_id == TemplateId::Exists) {
          next.insert({1, -1});
        } else {
          next.insert({n + 1, -1});
        }
      }
    }
    if (next.size() > cfg.max_states)
      throw EnumerationBudgetExceeded("perception oracle exceeded its state budget");
    frontier = std::move(next);
  }

  std::optional<AnswerToken> answer;
  for (const auto& [n, v] : frontier) {
    AnswerToken a;
    switch (q.template_id) {
      case TemplateId::Count: a = AnswerToken::count(n); break;
      case TemplateId::Exists: a = AnswerToken::boolean(n > 0); break;
      case TemplateId::Lookup:
        // Some consistent scene leaves the referent missing or ambiguous.
        if (n != 1) return Underdetermined{};
        a = q.target == Attribute::Shape ? AnswerToken::shape(static_cast<Shape>(v))
                                         : AnswerToken::color(static_cast<Color>(v));
        break;
    }
    if (answer && !(*answer == a)) return Underdetermined{};
    answer = a;
  }
  return *answer;
}

/// Self-contained means Determined and equal to the gold answer. A
/// contradictory perception is not self-contained.
inline bool self_contained(const std::vector<PerceptionStatement>& statements,
                           const QuestionSpec& q, const OracleConfig& cfg) {
  try {
    const auto v = perception_oracle(statements, q, cfg);
    return is_determined(v) && std::get<AnswerToken>(v) == q.gold_answer;
  } catch (const Contradiction&) {
    return false;
  }
}

}  // namespace vsr

#endif  // VSR_PERCEPTION_HPP
