#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "rnncnn/corpus.hpp"
#include "rnncnn/errors.hpp"

using namespace rnncnn;

namespace {

std::vector<Tokens> sentences_of(std::initializer_list<const char*> lines) {
  std::vector<Tokens> out;
  for (const char* l : lines) out.push_back(tokenize(l));
  return out;
}

std::vector<TokenId> ids_of(const Vocabulary& v, std::initializer_list<const char*> toks) {
  std::vector<TokenId> out;
  for (const char* t : toks) out.push_back(v.id(t));
  return out;
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("").empty());
  CHECK(tokenize("A dog.") == Tokens{"a", "dog", "."});
  CHECK(tokenize("don't stop") == Tokens{"don", "'", "t", "stop"});
  CHECK(tokenize("  (Hi),  \"THERE\"!?\t;:") ==
        Tokens{"(", "hi", ")", ",", "\"", "there", "\"", "!", "?", ";", ":"});
  CHECK(tokenize("café Über") == Tokens{"café", "Über"});  // non-ASCII untouched
}

TEST_CASE("build_vocab") {
  SUBCASE("empty stream keeps only the specials") {
    const auto v = Vocabulary::build({}, 10);
    CHECK(v.size() == 3);
    CHECK(v.token(Vocabulary::kPad) == "<pad>");
    CHECK(v.token(Vocabulary::kUnk) == "<unk>");
    CHECK(v.token(Vocabulary::kSos) == "<s>");
  }
  SUBCASE("ties broken lexicographically") {
    const auto v = Vocabulary::build(sentences_of({"a a b c"}), 2);
    CHECK(v.tokens() == std::vector<std::string>{"<pad>", "<unk>", "<s>", "a", "b"});
    CHECK(v.count(v.id("a")) == 2);
  }
  SUBCASE("max larger than the word count") {
    const auto v = Vocabulary::build(sentences_of({"x y x y"}), 5);
    CHECK(v.tokens() == std::vector<std::string>{"<pad>", "<unk>", "<s>", "x", "y"});
  }
  SUBCASE("unknown tokens map to UNK") {
    const auto v = Vocabulary::build(sentences_of({"x y"}), 5);
    CHECK(v.id("zzz") == Vocabulary::kUnk);
  }
}

TEST_CASE("vocabulary invariants on random corpora") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tokens> corpus(30);
    std::map<std::string, int> freq;
    for (auto& s : corpus) {
      const int n = 1 + static_cast<int>(rng() % 8);
      for (int i = 0; i < n; ++i) {
        s.push_back("w" + std::to_string(rng() % 25));
        ++freq[s.back()];
      }
    }
    const std::size_t max_size = 1 + rng() % 30;
    const auto v = Vocabulary::build(corpus, max_size);
    CHECK(v.size() <= max_size + 3);
    CHECK(v.size() == std::min(max_size, freq.size()) + 3);
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(v.id(v.tokens()[i]) == static_cast<TokenId>(i));
    }
    for (std::size_t i = 4; i < v.size(); ++i) {
      const auto& prev = v.tokens()[i - 1];
      const auto& cur = v.tokens()[i];
      const bool ordered =
          freq[prev] > freq[cur] || (freq[prev] == freq[cur] && prev < cur);
      CHECK(ordered);
    }
    // decode then encode is the identity on in-vocabulary ids
    std::vector<TokenId> ids;
    for (int i = 0; i < 20; ++i) {
      ids.push_back(static_cast<TokenId>(3 + rng() % (v.size() - 3)));
    }
    CHECK(v.encode(v.decode(ids)) == ids);
  }
}

TEST_CASE("vocabulary file round trip and validation") {
  const auto dir = std::filesystem::temp_directory_path() / "rnncnn_test_corpus";
  std::filesystem::create_directories(dir);
  const auto v = Vocabulary::build(sentences_of({"the cat sat on the mat ."}), 100);
  const std::string path = (dir / "vocab.txt").string();
  v.save(path);
  const auto loaded = Vocabulary::load(path);
  CHECK(loaded.tokens() == v.tokens());

  std::ofstream(dir / "bad.txt") << "hello\n<unk>\n<s>\n";
  CHECK_THROWS_AS(Vocabulary::load((dir / "bad.txt").string()), FormatError);
  CHECK_THROWS_AS(Vocabulary::load((dir / "missing.txt").string()), IoError);
}

TEST_CASE("make_pairs") {
  const auto vocab = Vocabulary::build(sentences_of({"a b c d e f"}), 10);
  SUBCASE("single sentence has no continuation") {
    CHECK(make_pairs(sentences_of({"a b c"}), vocab, 1, 30).empty());
  }
  SUBCASE("target inside the next sentence") {
    const auto pairs = make_pairs(sentences_of({"a b", "c d e f"}), vocab, 3, 30);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].source == ids_of(vocab, {"a", "b"}));
    CHECK(pairs[0].target == ids_of(vocab, {"c", "d", "e"}));
  }
  SUBCASE("targets cross sentence boundaries") {
    const auto pairs = make_pairs(sentences_of({"a b", "c", "d e f"}), vocab, 3, 30);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].source == ids_of(vocab, {"a", "b"}));
    CHECK(pairs[0].target == ids_of(vocab, {"c", "d", "e"}));
    CHECK(pairs[1].source == ids_of(vocab, {"c"}));
    CHECK(pairs[1].target == ids_of(vocab, {"d", "e", "f"}));
  }
  SUBCASE("truncation and UNK") {
    const auto pairs = make_pairs(sentences_of({"a b c d q", "e"}), vocab, 1, 2);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].source == ids_of(vocab, {"a", "b"}));
    const auto unk = make_pairs(sentences_of({"a", "zz"}), vocab, 1, 5);
    CHECK(unk[0].target == std::vector<TokenId>{Vocabulary::kUnk});
  }
  SUBCASE("bad arguments") {
    CHECK_THROWS_AS(make_pairs({}, vocab, 0, 5), ConfigError);
  }
}

TEST_CASE("make_pairs counts and target invariants on random corpora") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Tokens> corpus(1 + rng() % 12);
    for (auto& s : corpus) {
      const int n = 1 + static_cast<int>(rng() % 6);
      for (int i = 0; i < n; ++i) s.push_back("t" + std::to_string(rng() % 9));
    }
    const auto vocab = Vocabulary::build(corpus, 6);  // forces some UNKs
    const std::size_t n = 1 + rng() % 8;
    const auto pairs = make_pairs(corpus, vocab, n, 4);
    // count oracle: tokens remaining after each sentence
    std::size_t total = 0;
    for (const auto& s : corpus) total += s.size();
    std::size_t seen = 0, expected = 0;
    for (const auto& s : corpus) {
      seen += s.size();
      if (total - seen >= n) ++expected;
    }
    CHECK(pairs.size() == expected);
    for (const auto& p : pairs) {
      CHECK(p.target.size() == n);
      CHECK(std::count(p.target.begin(), p.target.end(), Vocabulary::kPad) == 0);
      CHECK(p.source.size() >= 1);
      CHECK(p.source.size() <= 4);
    }
  }
}

TEST_CASE("batchify") {
  const auto vocab = Vocabulary::build(sentences_of({"a b c d e f g h"}), 20);
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 5; ++i) {
    pairs.push_back({std::vector<TokenId>(1 + i % 3, 3 + i), {4, 5}});
  }
  SUBCASE("sizes with a partial final batch") {
    const auto batches = batchify(pairs, 2, 7);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].batch_size == 2);
    CHECK(batches[1].batch_size == 2);
    CHECK(batches[2].batch_size == 1);
  }
  SUBCASE("same seed, same batches") {
    const auto a = batchify(pairs, 2, 7);
    const auto b = batchify(pairs, 2, 7);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].source == b[i].source);
      CHECK(a[i].lengths == b[i].lengths);
      CHECK(a[i].target == b[i].target);
    }
    CHECK(epoch_order(50, 7, 0) != epoch_order(50, 7, 1));
  }
  SUBCASE("padding rule") {
    std::vector<TrainingPair> two{{{7, 8}, {3}}, {{9, 10, 11, 12}, {3}}};
    const Batch b = make_batch(two, {0, 1});
    CHECK(b.max_len == 4);
    CHECK(b.lengths == std::vector<std::int32_t>{2, 4});
    CHECK(b.source == std::vector<TokenId>{7, 8, 0, 0, 9, 10, 11, 12});
  }
  SUBCASE("each epoch is a permutation of the pairs") {
    std::vector<TrainingPair> many;
    for (int i = 0; i < 37; ++i) many.push_back({{3 + i % 11, 4}, {5 + i % 7}});
    for (std::uint64_t epoch = 0; epoch < 4; ++epoch) {
      std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> got, want;
      for (const Batch& b : batchify(many, 8, 99, epoch)) {
        for (std::size_t r = 0; r < b.batch_size; ++r) {
          got.emplace_back(
              std::vector<TokenId>(b.source.begin() + r * b.max_len,
                                   b.source.begin() + r * b.max_len + b.lengths[r]),
              std::vector<TokenId>(b.target.begin() + r * b.target_len,
                                   b.target.begin() + (r + 1) * b.target_len));
        }
      }
      for (const auto& p : many) want.emplace_back(p.source, p.target);
      std::sort(got.begin(), got.end());
      std::sort(want.begin(), want.end());
      CHECK(got == want);
    }
  }
  CHECK_THROWS_AS(batchify(pairs, 0, 1), ConfigError);
}
