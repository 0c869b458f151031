#ifndef VSR_SCENE_HPP
#define VSR_SCENE_HPP

// Synthetic grid-scene micro-world: closed attribute vocabularies, scene and
// question generation, and the exact answer oracle.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsr/errors.hpp"
#include "vsr/rng.hpp"

namespace vsr {

enum class Shape : std::uint8_t { Circle, Square, Triangle };
enum class Color : std::uint8_t { Red, Blue, Green, Yellow };
enum class Size : std::uint8_t { Small, Large };

inline constexpr int kNumShapes = 3;
inline constexpr int kNumColors = 4;
inline constexpr int kNumSizes = 2;

inline constexpr std::array<std::string_view, kNumShapes> kShapeNames{"circle", "square",
                                                                      "triangle"};
inline constexpr std::array<std::string_view, kNumColors> kColorNames{"red", "blue", "green",
                                                                      "yellow"};
inline constexpr std::array<std::string_view, kNumSizes> kSizeNames{"small", "large"};

inline std::string_view name(Shape s) { return kShapeNames[static_cast<int>(s)]; }
inline std::string_view name(Color c) { return kColorNames[static_cast<int>(c)]; }
inline std::string_view name(Size z) { return kSizeNames[static_cast<int>(z)]; }

template <class Enum, std::size_t N>
std::optional<Enum> lookup_name(const std::array<std::string_view, N>& names,
                                std::string_view word) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == word) return static_cast<Enum>(i);
  return std::nullopt;
}

inline std::optional<Shape> parse_shape(std::string_view w) {
  return lookup_name<Shape>(kShapeNames, w);
}
inline std::optional<Color> parse_color(std::string_view w) {
  return lookup_name<Color>(kColorNames, w);
}
inline std::optional<Size> parse_size(std::string_view w) {
  return lookup_name<Size>(kSizeNames, w);
}

// ---------------------------------------------------------------------------
// Answer vocabulary: digits 0-9, colors, shapes, yes, no. Index order is part
// of the policy layout and of the greedy tie-break.

inline constexpr int kVocabSize = 10 + kNumColors + kNumShapes + 2;

class AnswerToken {
 public:
  constexpr AnswerToken() = default;
  static constexpr AnswerToken from_index(int i) { return AnswerToken(i); }
  static constexpr AnswerToken count(int n) { return AnswerToken(n); }
  static constexpr AnswerToken color(Color c) { return AnswerToken(10 + static_cast<int>(c)); }
  static constexpr AnswerToken shape(Shape s) {
    return AnswerToken(10 + kNumColors + static_cast<int>(s));
  }
  static constexpr AnswerToken yes() { return AnswerToken(kVocabSize - 2); }
  static constexpr AnswerToken no() { return AnswerToken(kVocabSize - 1); }
  static constexpr AnswerToken boolean(bool b) { return b ? yes() : no(); }

  constexpr int index() const { return index_; }

  std::string text() const {
    if (index_ < 10) return std::string(1, static_cast<char>('0' + index_));
    if (index_ < 10 + kNumColors) return std::string(kColorNames[index_ - 10]);
    if (index_ < 10 + kNumColors + kNumShapes)
      return std::string(kShapeNames[index_ - 10 - kNumColors]);
    return index_ == kVocabSize - 2 ? "yes" : "no";
  }

  // Exact lookup of a normalized token.
  static std::optional<AnswerToken> parse(std::string_view word) {
    for (int i = 0; i < kVocabSize; ++i)
      if (AnswerToken(i).text() == word) return AnswerToken(i);
    return std::nullopt;
  }

  friend constexpr bool operator==(AnswerToken, AnswerToken) = default;

 private:
  constexpr explicit AnswerToken(int i) : index_(static_cast<std::uint8_t>(i)) {}
  std::uint8_t index_ = 0;
};

// Trim, lower-case and map into the closed vocabulary.
inline std::optional<AnswerToken> normalize_answer(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  std::string lowered(text.substr(b, e - b));
  for (char& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return AnswerToken::parse(lowered);
}

// ---------------------------------------------------------------------------

struct CellPos {
  int row = 0;
  int col = 0;
  friend constexpr bool operator==(CellPos, CellPos) = default;
};

struct Object {
  Shape shape = Shape::Circle;
  Color color = Color::Red;
  Size size = Size::Small;
  friend constexpr bool operator==(const Object&, const Object&) = default;
};

inline std::string describe(const Object& o) {
  return std::string(name(o.size)) + " " + std::string(name(o.color)) + " " +
         std::string(name(o.shape));
}

struct ObjectSpec {
  CellPos position;
  Object object;
  friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

/// Generation bounds and the active vocabulary. The vocabulary counts select a
/// prefix of each attribute list so small exhaustive checks can shrink it.
struct EnvConfig {
  int rows = 3;
  int cols = 3;
  int min_objects = 1;
  int max_objects = 5;
  int num_shapes = kNumShapes;
  int num_colors = kNumColors;
  int num_sizes = kNumSizes;

  int cells() const { return rows * cols; }

  void validate() const {
    if (rows < 1 || cols < 1) throw ConfigError("grid dimensions must be positive");
    if (cells() > 9)
      throw ConfigError("grid has " + std::to_string(cells()) +
                        " cells; count answers are limited to 0..9");
    if (min_objects < 0 || max_objects < min_objects)
      throw ConfigError("object bounds must satisfy 0 <= min_objects <= max_objects");
    if (max_objects > cells())
      throw ConfigError("object budget " + std::to_string(max_objects) + " exceeds " +
                        std::to_string(cells()) + " grid cells");
    if (num_shapes < 1 || num_shapes > kNumShapes || num_colors < 1 ||
        num_colors > kNumColors || num_sizes < 1 || num_sizes > kNumSizes)
      throw ConfigError("vocabulary sizes out of range");
  }

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

class Scene {
 public:
  Scene() = default;
  Scene(int rows, int cols, std::vector<ObjectSpec> objects)
      : rows_(rows), cols_(cols), objects_(std::move(objects)) {
    validate();
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int cells() const { return rows_ * cols_; }
  const std::vector<ObjectSpec>& objects() const { return objects_; }

  bool in_bounds(CellPos p) const {
    return p.row >= 0 && p.row < rows_ && p.col >= 0 && p.col < cols_;
  }

  std::optional<Object> at(CellPos p) const {
    for (const auto& o : objects_)
      if (o.position == p) return o.object;
    return std::nullopt;
  }

  // Row-major cell contents.
  std::vector<std::optional<Object>> grid() const {
    std::vector<std::optional<Object>> g(static_cast<std::size_t>(cells()));
    for (const auto& o : objects_)
      g[static_cast<std::size_t>(o.position.row * cols_ + o.position.col)] = o.object;
    return g;
  }

  void validate() const {
    if (rows_ < 1 || cols_ < 1) throw ConfigError("scene grid must be non-empty");
    if (static_cast<int>(objects_.size()) > cells())
      throw ConfigError("scene holds more objects than cells");
    std::vector<char> used(static_cast<std::size_t>(cells()), 0);
    for (const auto& o : objects_) {
      if (!in_bounds(o.position)) throw ConfigError("object outside the grid");
      char& u = used[static_cast<std::size_t>(o.position.row * cols_ + o.position.col)];
      if (u) throw ConfigError("two objects share a cell");
      u = 1;
    }
  }

  friend bool operator==(const Scene&, const Scene&) = default;

 private:
  int rows_ = 1;
  int cols_ = 1;
  std::vector<ObjectSpec> objects_;
};

inline Scene generate_scene(std::uint64_t seed, const EnvConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  const int n = cfg.min_objects + static_cast<int>(rng.below(
                                      static_cast<std::size_t>(cfg.max_objects - cfg.min_objects + 1)));
  std::vector<int> cells(static_cast<std::size_t>(cfg.cells()));
  std::iota(cells.begin(), cells.end(), 0);
  for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng.below(i)]);
  std::sort(cells.begin(), cells.begin() + n);

  std::vector<ObjectSpec> objects;
  objects.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    ObjectSpec spec;
    spec.position = {cells[static_cast<std::size_t>(k)] / cfg.cols,
                     cells[static_cast<std::size_t>(k)] % cfg.cols};
    spec.object.shape = static_cast<Shape>(rng.below(static_cast<std::size_t>(cfg.num_shapes)));
    spec.object.color = static_cast<Color>(rng.below(static_cast<std::size_t>(cfg.num_colors)));
    spec.object.size = static_cast<Size>(rng.below(static_cast<std::size_t>(cfg.num_sizes)));
    objects.push_back(spec);
  }
  return Scene(cfg.rows, cfg.cols, std::move(objects));
}

// ---------------------------------------------------------------------------
// Questions

enum class TemplateId : std::uint8_t { Count, Exists, Lookup };
inline constexpr int kNumTemplates = 3;
inline constexpr std::array<std::string_view, kNumTemplates> kTemplateNames{"count", "exists",
                                                                            "lookup"};

inline std::string_view name(TemplateId t) { return kTemplateNames[static_cast<int>(t)]; }
inline std::optional<TemplateId> parse_template(std::string_view w) {
  return lookup_name<TemplateId>(kTemplateNames, w);
}

enum class Attribute : std::uint8_t { Shape, Color, Size };

/// Conjunctive attribute filter. At least one slot must be bound.
struct Filter {
  std::optional<Shape> shape;
  std::optional<Color> color;
  std::optional<Size> size;

  bool empty() const { return !shape && !color && !size; }
  bool matches(const Object& o) const {
    return (!shape || *shape == o.shape) && (!color || *color == o.color) &&
           (!size || *size == o.size);
  }
  // "large red circle", "red object"
  std::string phrase() const {
    std::string s;
    if (size) s += std::string(name(*size)) + " ";
    if (color) s += std::string(name(*color)) + " ";
    s += shape ? std::string(name(*shape)) : std::string("object");
    return s;
  }
  friend bool operator==(const Filter&, const Filter&) = default;
};

struct QuestionSpec {
  TemplateId template_id = TemplateId::Count;
  Filter filter;
  // Lookup only: which attribute of the referent is asked for.
  std::optional<Attribute> target;
  std::string text;
  AnswerToken gold_answer;

  friend bool operator==(const QuestionSpec&, const QuestionSpec&) = default;
};

inline std::string render_question_text(TemplateId t, const Filter& f,
                                        std::optional<Attribute> target) {
  switch (t) {
    case TemplateId::Count: return "How many " + f.phrase() + "s are there?";
    case TemplateId::Exists: return "Is there a " + f.phrase() + "?";
    case TemplateId::Lookup:
      return std::string("What ") + (target == Attribute::Shape ? "shape" : "color") +
             " is the " + f.phrase() + "?";
  }
  return {};
}

inline void check_question_shape(TemplateId t, const Filter& f, std::optional<Attribute> target) {
  if (f.empty()) throw TemplateInapplicable("question filter binds no attribute");
  if (t == TemplateId::Lookup) {
    if (!target || *target == Attribute::Size)
      throw TemplateInapplicable("lookup target must be color or shape");
    if ((*target == Attribute::Color && f.color) || (*target == Attribute::Shape && f.shape))
      throw TemplateInapplicable("lookup target attribute is also a filter slot");
  } else if (target) {
    throw TemplateInapplicable("only lookup questions carry a target attribute");
  }
}

inline AnswerToken answer_oracle(const Scene& scene, const QuestionSpec& q) {
  int matches = 0;
  std::optional<Object> referent;
  for (const auto& o : scene.objects()) {
    if (q.filter.matches(o.object)) {
      ++matches;
      referent = o.object;
    }
  }
  switch (q.template_id) {
    case TemplateId::Count: return AnswerToken::count(matches);
    case TemplateId::Exists: return AnswerToken::boolean(matches > 0);
    case TemplateId::Lookup:
      if (matches != 1)
        throw TemplateInapplicable("lookup referent \"" + q.filter.phrase() + "\" matches " +
                                   std::to_string(matches) + " objects");
      return q.target == Attribute::Shape ? AnswerToken::shape(referent->shape)
                                          : AnswerToken::color(referent->color);
  }
  return {};
}

/// Builds a question from explicit slots; the gold answer comes from the
/// oracle. Lookup questions need a unique referent.
inline QuestionSpec make_question(const Scene& scene, TemplateId t, const Filter& filter,
                                  std::optional<Attribute> target = std::nullopt) {
  check_question_shape(t, filter, target);
  QuestionSpec q;
  q.template_id = t;
  q.filter = filter;
  q.target = target;
  q.text = render_question_text(t, filter, target);
  q.gold_answer = answer_oracle(scene, q);
  return q;
}

inline QuestionSpec generate_question(const Scene& scene, TemplateId t, std::uint64_t seed,
                                      const EnvConfig& cfg = {}) {
  Rng rng(seed);
  const auto& objs = scene.objects();
  auto random_object = [&]() -> Object {
    if (!objs.empty() && rng.below(2) == 0) return objs[rng.below(objs.size())].object;
    return Object{static_cast<Shape>(rng.below(static_cast<std::size_t>(cfg.num_shapes))),
                  static_cast<Color>(rng.below(static_cast<std::size_t>(cfg.num_colors))),
                  static_cast<Size>(rng.below(static_cast<std::size_t>(cfg.num_sizes)))};
  };

  if (t == TemplateId::Lookup) {
    if (objs.empty()) throw TemplateInapplicable("lookup needs at least one object");
    const Object ref = objs[rng.below(objs.size())].object;
    const Attribute target = rng.below(2) == 0 ? Attribute::Color : Attribute::Shape;
    // Candidate filters over the non-target attributes, smallest first.
    std::vector<Filter> candidates;
    Filter by_other, by_size, both;
    if (target == Attribute::Color) {
      by_other.shape = ref.shape;
      both.shape = ref.shape;
    } else {
      by_other.color = ref.color;
      both.color = ref.color;
    }
    by_size.size = ref.size;
    both.size = ref.size;
    if (rng.below(2) == 0)
      candidates = {by_other, by_size, both};
    else
      candidates = {by_size, by_other, both};
    for (const auto& f : candidates) {
      const auto n = std::count_if(objs.begin(), objs.end(),
                                   [&](const ObjectSpec& o) { return f.matches(o.object); });
      if (n == 1) return make_question(scene, t, f, target);
    }
    throw TemplateInapplicable("no filter identifies a unique referent");
  }

  const Object o = random_object();
  Filter f;
  const std::size_t kind = rng.below(t == TemplateId::Count ? 4 : 5);
  switch (kind) {
    case 0: f.color = o.color; break;
    case 1: f.shape = o.shape; break;
    case 2: f.color = o.color; f.shape = o.shape; break;
    case 3: f.size = o.size; f.shape = o.shape; break;
    default: f.size = o.size; f.color = o.color; f.shape = o.shape; break;
  }
  return make_question(scene, t, f);
}

// ---------------------------------------------------------------------------

struct MultimodalSample {
  std::uint64_t id = 0;
  std::uint64_t seed = 0;
  Scene scene;
  QuestionSpec question;
  friend bool operator==(const MultimodalSample&, const MultimodalSample&) = default;
};

/// Deterministic dataset; templates rotate so each appears equally often
/// before falling back on inapplicable lookups.
inline std::vector<MultimodalSample> generate_dataset(std::uint64_t master_seed, std::size_t n,
                                                      const EnvConfig& cfg,
                                                      std::string_view stream = "env") {
  cfg.validate();
  std::vector<MultimodalSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      const std::uint64_t seed = derive_seed(master_seed, stream, {i, attempt});
      MultimodalSample s;
      s.id = i;
      s.seed = seed;
      s.scene = generate_scene(seed, cfg);
      const auto t = static_cast<TemplateId>(i % kNumTemplates);
      try {
        s.question = generate_question(s.scene, t, splitmix64(seed), cfg);
      } catch (const TemplateInapplicable&) {
        continue;
      }
      out.push_back(std::move(s));
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Scene& s) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : s.objects())
    objs.push_back({{"row", o.position.row},
                    {"col", o.position.col},
                    {"shape", name(o.object.shape)},
                    {"color", name(o.object.color)},
                    {"size", name(o.object.size)}});
  return {{"rows", s.rows()}, {"cols", s.cols()}, {"objects", objs}};
}

inline Scene scene_from_json(const nlohmann::json& j) {
  std::vector<ObjectSpec> objs;
  for (const auto& o : j.at("objects")) {
    auto shape = parse_shape(o.at("shape").get<std::string>());
    auto color = parse_color(o.at("color").get<std::string>());
    auto size = parse_size(o.at("size").get<std::string>());
    if (!shape || !color || !size) throw SerializationError("unknown attribute in scene object");
    objs.push_back({{o.at("row").get<int>(), o.at("col").get<int>()}, {*shape, *color, *size}});
  }
  return Scene(j.at("rows").get<int>(), j.at("cols").get<int>(), std::move(objs));
}

inline nlohmann::json slots_to_json(const QuestionSpec& q) {
  nlohmann::json slots = nlohmann::json::object();
  if (q.filter.shape) slots["shape"] = name(*q.filter.shape);
  if (q.filter.color) slots["color"] = name(*q.filter.color);
  if (q.filter.size) slots["size"] = name(*q.filter.size);
  if (q.target) slots["target"] = *q.target == Attribute::Shape ? "shape" : "color";
  return slots;
}

inline nlohmann::json to_json(const MultimodalSample& s) {
  return {{"id", s.id},
          {"seed", s.seed},
          {"scene", to_json(s.scene)},
          {"template_id", name(s.question.template_id)},
          {"slots", slots_to_json(s.question)},
          {"question_text", s.question.text},
          {"gold_answer", s.question.gold_answer.text()}};
}

/// Rebuilds the question from its slots and re-derives the gold answer; a
/// record whose stored text or gold disagrees is rejected.
inline MultimodalSample sample_from_json(const nlohmann::json& j) {
  MultimodalSample s;
  s.id = j.value("id", std::uint64_t{0});
  s.seed = j.at("seed").get<std::uint64_t>();
  s.scene = scene_from_json(j.at("scene"));
  auto t = parse_template(j.at("template_id").get<std::string>());
  if (!t) throw SerializationError("unknown template_id");
  Filter f;
  std::optional<Attribute> target;
  const auto& slots = j.at("slots");
  if (slots.contains("shape")) f.shape = parse_shape(slots["shape"].get<std::string>());
  if (slots.contains("color")) f.color = parse_color(slots["color"].get<std::string>());
  if (slots.contains("size")) f.size = parse_size(slots["size"].get<std::string>());
  if (slots.contains("target"))
    target = slots["target"].get<std::string>() == "shape" ? Attribute::Shape : Attribute::Color;
  s.question = make_question(s.scene, *t, f, target);
  if (s.question.text != j.at("question_text").get<std::string>() ||
      s.question.gold_answer.text() != j.at("gold_answer").get<std::string>())
    throw SerializationError("sample " + std::to_string(s.id) +
                             ": stored question text or gold answer disagrees with its slots");
  return s;
}

}  // namespace vsr

#endif  // VSR_SCENE_HPP
