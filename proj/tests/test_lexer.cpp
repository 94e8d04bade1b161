#include <gtest/gtest.h>

#include <filesystem>

#include "spacefmt/spacefmt.hpp"
#include "support/fixtures.hpp"

using namespace spacefmt;
namespace fx = spacefmt::testing;

namespace {

std::vector<std::string> texts(const LexedDocument& d) {
  std::vector<std::string> out;
  for (const auto& it : d.items) out.push_back(it.token.text);
  return out;
}

std::vector<SpacingClass> classes(const LexedDocument& d) {
  std::vector<SpacingClass> out;
  for (const auto& it : d.items) out.push_back(it.label.cls());
  return out;
}

std::vector<TokenKind> kinds(const LexedDocument& d) {
  std::vector<TokenKind> out;
  for (const auto& it : d.items) out.push_back(it.token.kind);
  return out;
}

std::vector<std::filesystem::path> sample_files() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(SPACEFMT_TEST_DATA "/coq")) {
    out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Lex, MoveArrowSentence) {
  const auto d = lex("move=> x.");
  EXPECT_EQ(texts(d), (std::vector<std::string>{"move", "=>", "x", "."}));
  EXPECT_EQ(kinds(d), (std::vector<TokenKind>{TokenKind::Ltac, TokenKind::Ltac,
                                              TokenKind::Other, TokenKind::Other}));
  EXPECT_EQ(classes(d), (std::vector<SpacingClass>{{0, 0}, {0, 0}, {0, 1}, {0, 0}}));
  EXPECT_EQ(d.sentence_ends, std::vector<std::size_t>{3});
}

TEST(Lex, EmptyInput) {
  const auto d = lex("");
  EXPECT_TRUE(d.empty());
  EXPECT_TRUE(d.sentence_ends.empty());
  EXPECT_EQ(render_exact(d), "");
}

TEST(Lex, BlankOnlyInputKeepsWhitespace) {
  const auto d = lex(" \n\t");
  EXPECT_TRUE(d.empty());
  EXPECT_EQ(d.trailing.cls(), (SpacingClass{1, 1}));
  EXPECT_EQ(render_exact(d), " \n\t");
}

TEST(Lex, CommentBeforeQed) {
  const auto d = lex("(* a *) Qed.");
  EXPECT_EQ(texts(d), (std::vector<std::string>{"(* a *)", "Qed", "."}));
  EXPECT_EQ(kinds(d), (std::vector<TokenKind>{TokenKind::Comment, TokenKind::Vernacular,
                                              TokenKind::Other}));
  EXPECT_EQ(classes(d), (std::vector<SpacingClass>{{0, 0}, {0, 1}, {0, 0}}));
}

TEST(Lex, NestedCommentsAndStrings) {
  const auto d = lex("(* a (* b *) c *) x \"s \"\"q\"\" (* t\" .");
  EXPECT_EQ(texts(d),
            (std::vector<std::string>{"(* a (* b *) c *)", "x", "\"s \"\"q\"\" (* t\"", "."}));
  EXPECT_EQ(d.items[0].token.kind, TokenKind::Comment);
}

TEST(Lex, CommentKeepsInteriorWhitespace) {
  const auto d = lex("(*\n  a\tb *)");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.items[0].token.text, "(*\n  a\tb *)");
}

TEST(Lex, MaximalMunchOperators) {
  const auto d = lex("a:=b::c<->d<>e||f&&g==h<=i>=j");
  EXPECT_EQ(texts(d), (std::vector<std::string>{"a", ":=", "b", "::", "c", "<-", ">", "d", "<>",
                                                "e", "||", "f", "&&", "g", "==", "h", "<=",
                                                "i", ">=", "j"}));
}

TEST(Lex, IdentifiersAndNumerals) {
  const auto d = lex("x' _y1 αβ 0123 42a");
  EXPECT_EQ(texts(d), (std::vector<std::string>{"x'", "_y1", "αβ", "0123", "42", "a"}));
}

TEST(Lex, QualifiedNameDotIsNotSentenceEnd) {
  const auto d = lex("apply Nat.add_comm. Qed.");
  EXPECT_EQ(texts(d), (std::vector<std::string>{"apply", "Nat", ".", "add_comm", ".", "Qed",
                                                "."}));
  EXPECT_EQ(d.sentence_ends, (std::vector<std::size_t>{4, 6}));
}

TEST(Lex, FinalTokenEndsSentence) {
  const auto d = lex("Qed");
  EXPECT_EQ(d.sentence_ends, std::vector<std::size_t>{0});
}

TEST(Lex, PositionsAreOneBasedLinesZeroBasedColumns) {
  const auto d = lex("Lemma x.\n  Proof.");
  EXPECT_EQ(d.items[0].token.line, 1);
  EXPECT_EQ(d.items[0].token.col, 0);
  EXPECT_EQ(d.items[3].token.line, 2);
  EXPECT_EQ(d.items[3].token.col, 2);
  EXPECT_EQ(d.items[3].label.cls(), (SpacingClass{1, 2}));
}

TEST(Lex, UnterminatedCommentReportsPosition) {
  try {
    lex("x.\n  (* open");
    FAIL();
  } catch (const LexError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_EQ(e.col(), 2);
  }
}

TEST(Lex, UnterminatedString) {
  EXPECT_THROW(lex("Definition s := \"abc"), LexError);
  EXPECT_THROW(lex("\"a\"\""), LexError);
}

TEST(Quantize, ClampsAndCountsTabsAsOne) {
  EXPECT_EQ(SpacingLabel::quantize("\t\t").cls(), (SpacingClass{0, 2}));
  EXPECT_EQ(SpacingLabel::quantize("\n\n\n\n\n").cls(), (SpacingClass{3, 0}));
  EXPECT_EQ(SpacingLabel::quantize(std::string(60, ' ')).cls(), (SpacingClass{0, 40}));
  EXPECT_EQ(SpacingLabel::quantize("  \n \t").cls(), (SpacingClass{1, 2}));
  EXPECT_EQ(SpacingLabel::quantize("\r\n").cls(), (SpacingClass{1, 0}));
}

TEST(RenderExact, ConcatenatesRaw) {
  LexedDocument d;
  d.items.push_back({SpacingLabel::quantize("  "), Token{"Qed", TokenKind::Vernacular, 1, 2}});
  d.sentence_ends = {0};
  EXPECT_EQ(render_exact(d), "  Qed");
}

TEST(RenderExact, PreservesTabs) {
  const std::string s = "Proof.\n\tauto.\n";
  EXPECT_EQ(render_exact(lex(s)), s);
}

TEST(RenderExact, MissingRawThrows) {
  auto d = lex("a b");
  d.items[1].label = SpacingLabel::synthesized({0, 1});
  EXPECT_THROW(render_exact(d), MissingRaw);
}

TEST(RenderCanonical, SynthesizesFromClasses) {
  LexedDocument d;
  d.items.push_back({SpacingLabel::synthesized({1, 2}), Token{"Proof", TokenKind::Vernacular}});
  d.trailing = SpacingLabel::synthesized({0, 0});
  EXPECT_EQ(render_canonical(d), "\n  Proof");
  EXPECT_EQ(render_canonical(lex("move  =>\tx.")), "move  => x.");
  EXPECT_EQ(render_canonical(lex("move=> x.")), "move=> x.");
}

TEST(Classify, KeywordTables) {
  EXPECT_EQ(classify_token("move", TokenPosition::Other), TokenKind::Ltac);
  EXPECT_EQ(classify_token("Record", TokenPosition::SentenceInitial), TokenKind::Vernacular);
  EXPECT_EQ(classify_token("forall", TokenPosition::Other), TokenKind::Gallina);
  EXPECT_EQ(classify_token("frobnicate", TokenPosition::Other), TokenKind::Other);
  EXPECT_EQ(classify_token("(* c *)", TokenPosition::SentenceInitial), TokenKind::Comment);
}

TEST(Classify, SentenceInitialPrefersVernacular) {
  // "Set" is both a command and a sort.
  EXPECT_EQ(classify_token("Set", TokenPosition::SentenceInitial), TokenKind::Vernacular);
  EXPECT_EQ(classify_token("Set", TokenPosition::Other), TokenKind::Gallina);
  const auto d = lex("Set Implicit Arguments. Definition T := Set.");
  EXPECT_EQ(d.items[0].token.kind, TokenKind::Vernacular);
  EXPECT_EQ(d.items[7].token.kind, TokenKind::Gallina);
}

TEST(Classify, CommentDoesNotConsumeSentenceStart) {
  const auto d = lex("x. (* c *) Lemma y.");
  EXPECT_EQ(d.items[3].token.kind, TokenKind::Vernacular);
}

TEST(Keywords, DataFilesMatchBuiltinTables) {
  const auto loaded = KeywordTables::load(SPACEFMT_KEYWORD_DIR);
  const auto& builtin = KeywordTables::builtin();
  EXPECT_EQ(loaded.vernacular, builtin.vernacular);
  EXPECT_EQ(loaded.ltac, builtin.ltac);
  EXPECT_EQ(loaded.gallina, builtin.gallina);
}

TEST(Keywords, MissingDirectoryIsIoError) {
  EXPECT_THROW(KeywordTables::load("/nonexistent/keywords"), IoError);
}

TEST(TokenStream, ExportImportIdentity) {
  const auto d = lex("move=> x.");
  EXPECT_EQ(import_token_stream(export_token_stream(d)), d);
  const auto e = lex("  (* c\n *)\tLemma a :\r\n b.\n\n");
  EXPECT_EQ(import_token_stream(export_token_stream(e)), e);
}

TEST(TokenStream, VernacularTag) {
  const std::string s =
      "spacefmt-tokens v1\nL 0 0 \nT V 1 0 Qed\nL 0 0 \nT O 1 3 .\nL 0 0 \nS 1\n";
  const auto d = import_token_stream(s);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.items[0].token.kind, TokenKind::Vernacular);
  EXPECT_EQ(render_exact(d), "Qed.");
}

TEST(TokenStream, AbsentRawVersusEmptyRaw) {
  const auto d = import_token_stream("spacefmt-tokens v1\nL 0 1\nT O 1 1 x\nS 0\n");
  EXPECT_FALSE(d.items[0].label.raw.has_value());
  EXPECT_THROW(render_exact(d), MissingRaw);
  EXPECT_EQ(render_canonical(d), " x");
}

TEST(TokenStream, MalformedInputNamesLine) {
  const std::string ok = "spacefmt-tokens v1\nL 0 0 \nT O 1 0 x\n";
  try {
    import_token_stream(ok + "L 0\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 4);
  }
  EXPECT_THROW(import_token_stream("nope\n"), FormatError);
  EXPECT_THROW(import_token_stream(ok + "T Q 1 2 y\n"), FormatError);
  EXPECT_THROW(import_token_stream(ok + "L 0 0 \nT O 1 0 y\nS 1\n"), FormatError);  // position
  EXPECT_THROW(import_token_stream(ok + "L 0 1 \\s\\s\nT O 1 3 y\nS 1\n"), FormatError);
  EXPECT_THROW(import_token_stream(ok + "L 4 0\nT O 2 0 y\nS 1\n"), FormatError);
  EXPECT_THROW(import_token_stream(ok + "L 0 1 \\s\nT O 1 2 y\nS 0\n"), FormatError);
  EXPECT_THROW(import_token_stream(ok + "X\n"), FormatError);
}

TEST(SlotConstraints, KeepTokensApart) {
  const auto d = lex("apply Nat.add_comm. Qed.");
  const auto c = slot_constraints(d);
  EXPECT_TRUE(c[1].require_space);   // apply|Nat
  EXPECT_FALSE(c[2].require_space || c[2].forbid_space);  // Nat|.
  EXPECT_TRUE(c[3].forbid_space);    // Nat.|add_comm
  EXPECT_FALSE(c[4].require_space);  // add_comm|.
  EXPECT_TRUE(c[5].require_space);   // .|Qed after sentence end
  const auto ops = slot_constraints(lex("x : = y"));
  EXPECT_TRUE(ops[2].require_space);  // ":" and "=" would merge into ":="
}

// -- properties over generated and hand-written sources ---------------------

TEST(LexProperty, RoundTripRandomSources) {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const auto s = fx::random_source(rng, 1 + uniform_index(rng, 60));
    ASSERT_EQ(render_exact(lex(s)), s) << "case " << i;
  }
}

TEST(LexProperty, RoundTripSampleFiles) {
  const auto files = sample_files();
  ASSERT_GE(files.size(), 20u);
  for (const auto& f : files) {
    const auto s = read_file(f);
    EXPECT_EQ(render_exact(lex(s)), s) << f;
  }
}

TEST(LexProperty, QuantizationConsistentAndSentencesCover) {
  Rng rng(12);
  for (int i = 0; i < 300; ++i) {
    const auto d = lex(fx::random_source(rng, 1 + uniform_index(rng, 40)));
    for (const auto& it : d.items) {
      ASSERT_TRUE(it.label.raw);
      ASSERT_EQ(SpacingLabel::quantize(*it.label.raw).cls(), it.label.cls());
    }
    if (d.empty()) continue;
    ASSERT_EQ(d.sentence_ends.back(), d.size() - 1);
    ASSERT_TRUE(std::is_sorted(d.sentence_ends.begin(), d.sentence_ends.end()));
    ASSERT_EQ(std::adjacent_find(d.sentence_ends.begin(), d.sentence_ends.end()),
              d.sentence_ends.end());
    for (auto e : d.sentence_ends) {
      ASSERT_TRUE(d.items[e].token.text == "." || e == d.size() - 1);
    }
    for (std::size_t k = 1; k < d.size(); ++k) {
      ASSERT_LT(std::pair(d.items[k - 1].token.line, d.items[k - 1].token.col),
                std::pair(d.items[k].token.line, d.items[k].token.col));
    }
  }
}

TEST(LexProperty, CanonicalStability) {
  Rng rng(13);
  for (int i = 0; i < 300; ++i) {
    const auto d = lex(fx::random_source(rng, 1 + uniform_index(rng, 40)));
    const auto again = lex(render_canonical(d));
    ASSERT_EQ(texts(again), texts(d)) << i;
    bool clamped = false;
    for (const auto& it : d.items) {
      clamped |= it.label.newlines == SpacingLabel::kMaxNewlines ||
                 it.label.horizontal == SpacingLabel::kMaxHorizontal;
    }
    if (!clamped) ASSERT_EQ(classes(again), classes(d)) << i;
  }
}

TEST(LexProperty, ExportImportRandom) {
  Rng rng(14);
  for (int i = 0; i < 200; ++i) {
    const auto d = lex(fx::random_source(rng, uniform_index(rng, 30)));
    ASSERT_EQ(import_token_stream(export_token_stream(d)), d);
  }
}
