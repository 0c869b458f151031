#include <gtest/gtest.h>

#include "support.hpp"
#include "vsr/rng.hpp"
#include "vsr/structured_output.hpp"

using namespace vsr;

namespace {

FormatRule rule_of(std::string_view text, const TagScheme& s = TagScheme::see_think()) {
  auto r = parse_response(text, s);
  EXPECT_TRUE(std::holds_alternative<FormatError>(r)) << text;
  return std::get<FormatError>(r).rule;
}

std::string random_segment(Rng& rng) {
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789 ,.;:()-'!?\n\t";
  std::string s;
  const auto n = 1 + rng.below(30);
  for (std::size_t i = 0; i < n; ++i) s.push_back(alphabet[rng.below(alphabet.size())]);
  // Segments are stored trimmed; guarantee a non-blank core.
  return "x" + s + "y";
}

}  // namespace

TEST(Parse, WellFormed) {
  const std::string text =
      "<visual perception>cell (0,0): large red circle</visual perception>\n"
      "<think>count the matching objects</think>\n<answer>1</answer>";
  auto r = parse_response(text, TagScheme::see_think());
  ASSERT_TRUE(std::holds_alternative<StructuredResponse>(r));
  const auto& s = std::get<StructuredResponse>(r);
  EXPECT_EQ(s.perception, "cell (0,0): large red circle");
  EXPECT_EQ(s.reasoning, "count the matching objects");
  EXPECT_EQ(s.answer, "1");
  EXPECT_EQ(s.raw, text);
  EXPECT_TRUE(s.format_ok);
}

TEST(Parse, RuleIdentification) {
  EXPECT_EQ(rule_of("<visual perception>c</visual perception><think>t<answer>a</answer>"),
            FormatRule::MissingTag);
  EXPECT_EQ(rule_of("<think>t</think><visual perception>c</visual perception><answer>a</answer>"),
            FormatRule::WrongOrder);
  EXPECT_EQ(rule_of("<visual perception>c</visual perception><visual perception>c</visual "
                    "perception><think>t</think><answer>a</answer>"),
            FormatRule::DuplicateTag);
  EXPECT_EQ(rule_of("<visual perception>c</visual perception> x <think>t</think><answer>a</answer>"),
            FormatRule::StrayContent);
  EXPECT_EQ(rule_of("<visual perception>c</visual perception><think> </think><answer>a</answer>"),
            FormatRule::EmptySegment);
}

TEST(Parse, WhitespaceBetweenSegmentsAllowed) {
  EXPECT_TRUE(parses("  \n<visual perception>c</visual perception>\n\n\t<think>t</think> <answer>a</answer>\n",
                     TagScheme::see_think()));
}

TEST(Parse, MalformedCorpusAllRejected) {
  const auto corpus = vsr::testing::malformed_corpus();
  ASSERT_EQ(corpus.size(), 20u);
  for (const auto& text : corpus) EXPECT_FALSE(parses(text, TagScheme::see_think())) << text;
}

TEST(Parse, TotalOnArbitraryBytes) {
  Rng rng(99);
  const std::string pieces[] = {"<visual perception>", "</visual perception>", "<think>", "</think>",
                                "<answer>", "</answer>", "x", " ", "\n", "<", ">", "/"};
  for (int i = 0; i < 20000; ++i) {
    std::string s;
    const auto n = rng.below(12);
    for (std::size_t k = 0; k < n; ++k) {
      if (rng.below(3) == 0) s.push_back(static_cast<char>(rng.below(256)));
      else s += pieces[rng.below(std::size(pieces))];
    }
    const auto r = parse_response(s, TagScheme::see_think());
    if (const auto* ok = std::get_if<StructuredResponse>(&r)) {
      ASSERT_TRUE(ok->format_ok);
    }
  }
}

TEST(Serialize, RoundTripBothSchemes) {
  Rng rng(5);
  for (const auto& scheme : {TagScheme::see_think(), TagScheme::description_boxed()}) {
    for (int i = 0; i < 2000; ++i) {
      const auto r = make_response(random_segment(rng), random_segment(rng), random_segment(rng), scheme);
      auto back = parse_response(r.raw, scheme);
      ASSERT_TRUE(std::holds_alternative<StructuredResponse>(back)) << r.raw;
      ASSERT_EQ(std::get<StructuredResponse>(back), r);
    }
  }
}

TEST(Serialize, SimpleExample) {
  const auto r = make_response("a", "b", "c", TagScheme::see_think());
  EXPECT_EQ(r.raw, "<visual perception>a</visual perception>\n<think>b</think>\n<answer>c</answer>");
}

TEST(Serialize, BoxedScheme) {
  const auto r = make_response("d", "t", "blue", TagScheme::description_boxed());
  EXPECT_EQ(r.raw, "<description>d</description>\n<think>t</think>\n\\boxed{blue}");
}

TEST(Serialize, InjectionGuard) {
  StructuredResponse r{"oops </visual perception>", "t", "a", {}, true};
  EXPECT_THROW(serialize_response(r, TagScheme::see_think()), SerializationError);
  StructuredResponse empty{"", "t", "a", {}, true};
  EXPECT_THROW(serialize_response(empty, TagScheme::see_think()), SerializationError);
}

TEST(TagSchemeTest, Validation) {
  EXPECT_NO_THROW(TagScheme::see_think().validate());
  EXPECT_NO_THROW(TagScheme::description_boxed().validate());
  auto bad = TagScheme::see_think();
  bad.answer_open = bad.think_open;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = TagScheme::see_think();
  bad.think_close.clear();
  EXPECT_THROW(bad.validate(), ConfigError);
}
