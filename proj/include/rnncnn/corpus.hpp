#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rnncnn {

using TokenId = std::int32_t;
using Tokens = std::vector<std::string>;

// Lowercases ASCII letters, splits on whitespace and emits each of
// . , ! ? ; : " ' ( ) as its own token.
Tokens tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kSos = 2;
  static constexpr std::size_t kNumSpecials = 3;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kSosToken = "<s>";

  Vocabulary();

  // Specials, then the `max_size` most frequent tokens (ties broken
  // lexicographically).
  static Vocabulary build(const std::vector<Tokens>& sentences,
                          std::size_t max_size);

  // One token per line, line number = id; lines 0-2 must be the specials.
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  // Builds from an ordered token list whose first three entries are the
  // specials.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;
  // UNK for unknown tokens.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::uint64_t count(TokenId id) const { return counts_.at(id); }

  // Appends `token` if absent; returns its id either way.
  TokenId add(const std::string& token, std::uint64_t count = 0);

  std::vector<TokenId> encode(const Tokens& tokens) const;
  Tokens decode(const std::vector<TokenId>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, TokenId> ids_;
};

struct TrainingPair {
  std::vector<TokenId> source;
  std::vector<TokenId> target;

  bool operator==(const TrainingPair&) const = default;
};

struct Batch {
  std::size_t batch_size = 0;
  std::size_t max_len = 0;
  std::size_t target_len = 0;
  std::vector<TokenId> source;   // batch_size x max_len, PAD filled
  std::vector<std::int32_t> lengths;
  std::vector<TokenId> target;   // batch_size x target_len
};

// Non-empty lines of a one-sentence-per-line UTF-8 file, tokenized.
std::vector<Tokens> read_corpus(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);

// One pair per sentence whose flattened continuation holds at least
// `target_len` tokens: the source is the sentence truncated to
// `max_src_len`, the target the next `target_len` tokens of the stream.
std::vector<TrainingPair> make_pairs(const std::vector<Tokens>& sentences,
                                     const Vocabulary& vocab,
                                     std::size_t target_len,
                                     std::size_t max_src_len);

// Pads the selected pairs into one batch.
Batch make_batch(const std::vector<TrainingPair>& pairs,
                 const std::vector<std::size_t>& indices);

// Permutation of [0, n) used for `epoch`; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::uint64_t epoch);

// Shuffles once with the (seed, epoch) permutation and cuts into batches;
// the final partial batch is kept.
std::vector<Batch> batchify(const std::vector<TrainingPair>& pairs,
                            std::size_t batch_size, std::uint64_t seed,
                            std::uint64_t epoch = 0);

// Encodes sentences (truncated to max_len) as a batch with empty targets.
Batch make_source_batch(const std::vector<std::vector<TokenId>>& sentences,
                        std::size_t max_len);

}  // namespace rnncnn
