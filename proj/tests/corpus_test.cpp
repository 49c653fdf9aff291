#include "cb2cf/corpus.hpp"

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <filesystem>
#include <random>

namespace cb2cf::corpus {
namespace {

using ::testing::ElementsAre;

TEST(Tokenize, AppliesCaseDigitAndPunctuationRules) {
  EXPECT_EQ(tokenize("In 2016, great!"), (TokenSequence{"in", "9999", "great"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("A a A"), (TokenSequence{"a", "a", "a"}));
}

TEST(Tokenize, StripsPunctuationInsideTokens) {
  EXPECT_EQ(tokenize("don't stop--now... (ok)"), (TokenSequence{"dont", "stopnow", "ok"}));
  EXPECT_EQ(tokenize("a+b=c <x> ~y^ |z|"), (TokenSequence{"abc", "x", "y", "z"}));
  // '$' and '`' are symbols, not punctuation.
  EXPECT_EQ(tokenize("$5 `q`"), (TokenSequence{"$9", "`q`"}));
  EXPECT_TRUE(tokenize(" ... !!! ").empty());
}

TEST(Tokenize, HandlesUnicode) {
  // Em dash and guillemets are punctuation; fullwidth digits are decimal digits.
  EXPECT_EQ(tokenize("\xC3\x9C" "ber \xE2\x80\x94 \xC2\xABTest\xC2\xBB \xEF\xBC\x92\xEF\xBC\x90"),
            (TokenSequence{"\xC3\xBC" "ber", "test", "99"}));
  // No-break space and ideographic space separate tokens.
  EXPECT_EQ(tokenize("a\xC2\xA0" "b\xE3\x80\x80" "c"), (TokenSequence{"a", "b", "c"}));
}

TEST(Tokenize, PassesInvalidUtf8Through) {
  const std::string bad = "ab\xFF" "cd";
  EXPECT_EQ(tokenize(bad), (TokenSequence{bad}));
}

std::string random_text(std::mt19937& rng) {
  static const std::vector<std::string> pieces = {
      "a", "B", "z", "Q", "0", "7", "3", " ", " ", "\t", "\n", ",", ".", "!", "'", "-", "+", "=",
      "\xC3\x89", "\xE2\x80\x94", "\xC2\xAB", "\xEF\xBC\x95", "\xCE\xA3", "$", "\xC2\xA0"};
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  std::uniform_int_distribution<int> len(0, 40);
  std::string s;
  for (int i = len(rng); i > 0; --i) s += pieces[pick(rng)];
  return s;
}

std::string join(const TokenSequence& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

TEST(Tokenize, PropertyIdempotentAndNormalized) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto text = random_text(rng);
    const auto tokens = tokenize(text);
    EXPECT_EQ(tokenize(join(tokens)), tokens) << text;
    for (const auto& t : tokens) {
      ASSERT_FALSE(t.empty());
      for (char c : t) {
        EXPECT_FALSE(c >= '0' && c <= '8') << t;
        EXPECT_EQ(std::string(",.!'-+=").find(c), std::string::npos) << t;
        EXPECT_FALSE(c >= 'A' && c <= 'Z') << t;
      }
    }
  }
}

TEST(BuildVocabulary, TruncatesToCapByFrequency) {
  const std::vector<TokenSequence> stream = {{"a", "a", "b"}};
  const auto vocab = build_vocabulary(stream, 1);
  ASSERT_EQ(vocab.size(), 1u);
  EXPECT_EQ(vocab.token(0), "a");
  EXPECT_EQ(vocab.count(0), 2u);
  EXPECT_EQ(vocab.total_count(), 3u);
}

TEST(BuildVocabulary, KeepsEverythingUnderCap) {
  const std::vector<TokenSequence> stream = {{"a", "b"}};
  const auto vocab = build_vocabulary(stream, 10);
  EXPECT_EQ(vocab.size(), 2u);
  EXPECT_TRUE(vocab.index_of("a"));
  EXPECT_TRUE(vocab.index_of("b"));
}

TEST(BuildVocabulary, BreaksBoundaryTiesLexicographically) {
  // c:2, then a and b tie at 1 for the last slot.
  const std::vector<TokenSequence> stream = {{"b", "c"}, {"a", "c"}};
  const auto vocab = build_vocabulary(stream, 2);
  EXPECT_THAT(vocab.tokens(), ElementsAre("c", "a"));
}

TEST(BuildVocabulary, RejectsZeroCap) {
  EXPECT_THROW(build_vocabulary(std::vector<TokenSequence>{}, 0), std::invalid_argument);
}

TEST(BuildVocabulary, PropertyRankedAndDeterministic) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TokenSequence> streams;
    for (int s = 0; s < 20; ++s) streams.push_back(tokenize(random_text(rng)));
    const std::size_t cap = 1 + trial % 7;
    const auto vocab = build_vocabulary(streams, cap);
    EXPECT_LE(vocab.size(), cap);
    for (std::size_t i = 0; i + 1 < vocab.size(); ++i) EXPECT_GE(vocab.count(i), vocab.count(i + 1));
    for (std::size_t i = 0; i < vocab.size(); ++i) EXPECT_EQ(vocab.index_of(vocab.token(i)), i);
    EXPECT_EQ(build_vocabulary(streams, cap), vocab);
  }
}

TEST(Encode, DropsOutOfVocabularyTokens) {
  const std::vector<TokenSequence> stream = {{"a", "b", "a"}};
  const auto vocab = build_vocabulary(stream, 10);
  const auto idx = encode({"a", "zz", "b"}, vocab);
  EXPECT_THAT(idx, ElementsAre(*vocab.index_of("a"), *vocab.index_of("b")));
  EXPECT_TRUE(encode({}, vocab).empty());
  const TokenSequence in_vocab = {"b", "a", "a"};
  EXPECT_EQ(decode(encode(in_vocab, vocab), vocab), in_vocab);
  for (auto i : encode({"a", "q", "b", "b"}, vocab)) EXPECT_LT(i, vocab.size());
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  const std::vector<TokenSequence> stream = {{"x", "y", "x", "z", "x", "y"}};
  const auto vocab = build_vocabulary(stream, 10);
  const auto path = std::filesystem::temp_directory_path() / "cb2cf_vocab_test.tsv";
  vocab.save(path);
  const auto loaded = Vocabulary::load(path, 10);
  EXPECT_EQ(loaded.tokens(), vocab.tokens());
  EXPECT_EQ(loaded.counts(), vocab.counts());
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace cb2cf::corpus
