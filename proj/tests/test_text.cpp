#include <gtest/gtest.h>

#include <set>
#include <string>
#include <vector>

#include "dota/text.hpp"
#include "dota/vocab.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dota;

namespace {

// Random strings drawn from a pool that mixes ASCII, punctuation, case
// pairs, non-ASCII digits and exotic whitespace.
std::string random_text(Rng& rng) {
  static const std::vector<std::string> pool = {
      "a", "Z", "Q", "é", "É", "ß", "Σ", "ς", "İ", "0", "7", "٣", "१", "  ", "\n", "\t", " ", "　", ",", ".",
      "!", "?", "'", "\"", "-", "—", "(", "]", "$", "%", "&", "+", "=", "@", "#", "*", "/", "日", "本", "ǅ", "Ⅷ", "x"};
  std::string s;
  for (std::size_t i = 0, n = rng.below(24); i < n; ++i) s += pool[rng.below(pool.size())];
  return s;
}

std::vector<std::string> ids_to_tokens(const std::vector<TokenId>& ids, const Vocabulary& v) {
  std::vector<std::string> out;
  for (TokenId id : ids) out.push_back(v.token(id));
  return out;
}

}  // namespace

TEST(Normalize, GoldenCases) {
  EXPECT_EQ(normalize("21"), "2 1");
  EXPECT_EQ(normalize("Hello, World!"), "hello world");
  EXPECT_EQ(normalize("  It's  2024.\n"), "it s 2 0 2 4");
  EXPECT_EQ(normalize("line one\nline two"), "line one line two");
  EXPECT_EQ(normalize("$5 & 10% off"), "5 1 0 off");
  EXPECT_EQ(normalize("a+b=c@d#e"), "a b c d e");
  EXPECT_EQ(normalize("ÉCOLE Straße"), "école straße");
  EXPECT_EQ(normalize("٣٤"), "٣ ٤");
  EXPECT_EQ(normalize("x 　y"), "x y");
  EXPECT_EQ(normalize(""), "");
  EXPECT_EQ(normalize("?!..."), "");
  EXPECT_EQ(normalize("room 101b"), "room 1 0 1b");
}

TEST(Normalize, IdempotentAndCleanOnRandomStrings) {
  Rng rng(17);
  for (int i = 0; i < 10000; ++i) {
    const std::string raw = random_text(rng);
    const std::string n = normalize(raw);
    ASSERT_EQ(normalize(n), n) << raw;
    const auto cps = utf8::decode(n);
    for (std::size_t k = 0; k < cps.size(); ++k) {
      ASSERT_NE(cps[k], U'\n');
      ASSERT_EQ(unicode::to_lower(cps[k]), cps[k]) << raw;
      ASSERT_FALSE(unicode::is_punctuation(cps[k]));
      if (k > 0) {
        ASSERT_FALSE(unicode::is_digit(cps[k]) && unicode::is_digit(cps[k - 1])) << raw;
        ASSERT_FALSE(cps[k] == U' ' && cps[k - 1] == U' ');
      }
    }
    if (!n.empty()) {
      ASSERT_NE(n.front(), ' ');
      ASSERT_NE(n.back(), ' ');
    }
  }
}

TEST(Utf8, DecodeEncodeAndMalformedInput) {
  const std::string s = "aé€𝄞";
  const auto cps = utf8::decode(s);
  ASSERT_EQ(cps.size(), 4u);
  EXPECT_EQ(cps[3], U'\U0001D11E');
  EXPECT_EQ(utf8::encode(cps), s);
  EXPECT_EQ(utf8::decode("\xff")[0], utf8::kReplacement);
}

TEST(Vocabulary, LoadAndSpecials) {
  const auto v = fixtures::toy_vocab();
  EXPECT_EQ(v.size(), 64u);
  EXPECT_EQ(v.token(v.bos()), "[CLS]");
  EXPECT_EQ(v.token(v.eos()), "[SEP]");
  EXPECT_EQ(v.token(v.unk()), "[UNK]");
  EXPECT_EQ(v.token(v.pad()), "[PAD]");
  EXPECT_THROW(v.token(64), Error);
  EXPECT_THROW(Vocabulary({"a", "a", "[UNK]", "[CLS]", "[SEP]", "[PAD]"}), Error);
  EXPECT_THROW(Vocabulary({"a", "b"}), Error);
}

TEST(WordPiece, GreedyLongestMatch) {
  const auto v = fixtures::toy_vocab();
  EXPECT_EQ(ids_to_tokens(tokenize("unable", v), v), (std::vector<std::string>{"un", "##able"}));
  EXPECT_EQ(ids_to_tokens(tokenize("the cats", v), v), (std::vector<std::string>{"the", "cat", "##s"}));
  // "a" matches but "##b..." never does, so the whole word is unknown
  EXPECT_EQ(ids_to_tokens(tokenize("abc", v), v), (std::vector<std::string>{"[UNK]"}));
  EXPECT_EQ(ids_to_tokens(tokenize("xyz", v), v), (std::vector<std::string>{"[UNK]"}));
  EXPECT_EQ(ids_to_tokens(tokenize("2 1", v), v), (std::vector<std::string>{"2", "1"}));
  EXPECT_EQ(tokenize(std::string(101, 'a'), v), (std::vector<TokenId>{v.unk()}));
}

TEST(WordPiece, MatchesExhaustiveOracle) {
  // small alphabet so that dead ends and competing segmentations are common
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::set<std::string> pieces;
    std::vector<std::string> tokens = {"[UNK]", "[CLS]", "[SEP]", "[PAD]"};
    while (pieces.size() < 12) {
      std::string p = (rng.bernoulli(0.5) ? "##" : "");
      for (std::size_t i = 0, n = 1 + rng.below(3); i < n; ++i) p += static_cast<char>('a' + rng.below(3));
      if (pieces.insert(p).second) tokens.push_back(p);
    }
    const Vocabulary v(tokens);
    for (int w = 0; w < 20; ++w) {
      std::string word;
      for (std::size_t i = 0, n = 1 + rng.below(7); i < n; ++i) word += static_cast<char>('a' + rng.below(3));
      const auto want = oracle::wordpiece(word, pieces);
      const auto got = ids_to_tokens(tokenize_all(word, v), v);
      if (want) EXPECT_EQ(got, *want) << word;
      else EXPECT_EQ(got, std::vector<std::string>{"[UNK]"}) << word;
    }
  }
}

TEST(WordPiece, DetokenizeRoundTrip) {
  const auto v = fixtures::toy_vocab();
  for (const std::string s : {"hello world", "the cat is unable", "3 1 4 1 5", "play ##ing"}) {
    const auto n = normalize(s);
    const auto ids = tokenize(n, v);
    bool has_unk = std::find(ids.begin(), ids.end(), v.unk()) != ids.end();
    if (!has_unk) {
      EXPECT_EQ(detokenize(ids, v), n);
    }
  }
  // unknown words vanish on the way back
  EXPECT_EQ(detokenize(tokenize("zebra playing", v), v), "playing");
}

TEST(WordPiece, TruncationAndFraming) {
  const auto v = fixtures::toy_vocab();
  std::string long_text;
  for (int i = 0; i < 200; ++i) long_text += "a ";
  EXPECT_EQ(tokenize(long_text, v).size(), 146u);
  EXPECT_EQ(tokenize_all(long_text, v).size(), 200u);
  const auto f = frame_tokens(tokenize_all(long_text, v), v);
  EXPECT_EQ(f.inputs.size(), 145u);
  EXPECT_EQ(f.targets.size(), 145u);
  EXPECT_EQ(f.inputs.front(), v.bos());
  EXPECT_EQ(f.targets.back(), v.eos());
  const auto g = frame_tokens(tokenize("2 1", v), v);
  EXPECT_EQ(g.inputs, (std::vector<TokenId>{v.bos(), *v.find("2"), *v.find("1")}));
  EXPECT_EQ(g.targets, (std::vector<TokenId>{*v.find("2"), *v.find("1"), v.eos()}));
  for (std::size_t i = 1; i < f.inputs.size(); ++i) EXPECT_EQ(f.inputs[i], f.targets[i - 1]);
}
