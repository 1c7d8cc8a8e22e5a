#include "rnncnn/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "rnncnn/errors.hpp"

namespace rnncnn {
namespace {

bool is_split_punct(char c) {
  switch (c) {
    case '.':
    case ',':
    case '!':
    case '?':
    case ';':
    case ':':
    case '"':
    case '\'':
    case '(':
    case ')':
      return true;
    default:
      return false;
  }
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_split_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else if (c >= 'A' && c <= 'Z') {
      current.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      current.push_back(c);
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() {
  for (std::string_view s : {kPadToken, kUnkToken, kSosToken}) {
    add(std::string(s));
  }
}

Vocabulary Vocabulary::build(const std::vector<Tokens>& sentences,
                             std::size_t max_size) {
  std::map<std::string, std::uint64_t> freq;
  for (const Tokens& sentence : sentences) {
    for (const std::string& tok : sentence) ++freq[tok];
  }
  std::vector<std::pair<std::string, std::uint64_t>> ranked(freq.begin(),
                                                            freq.end());
  // std::map iteration is lexicographic, so a stable sort by count keeps
  // lexicographic order among ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [tok, n] : ranked) {
    if (vocab.size() - kNumSpecials >= max_size) break;
    if (vocab.contains(tok)) {
      vocab.counts_[vocab.id(tok)] += n;
      continue;
    }
    vocab.add(tok, n);
  }
  return vocab;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumSpecials || tokens[0] != kPadToken ||
      tokens[1] != kUnkToken || tokens[2] != kSosToken) {
    throw FormatError("vocabulary must start with " + std::string(kPadToken) +
                      ", " + std::string(kUnkToken) + ", " +
                      std::string(kSosToken));
  }
  Vocabulary vocab;
  for (std::size_t i = kNumSpecials; i < tokens.size(); ++i) {
    if (vocab.contains(tokens[i])) {
      throw FormatError("duplicate vocabulary token '" + tokens[i] +
                        "' at line " + std::to_string(i));
    }
    vocab.add(tokens[i]);
  }
  return vocab;
}

Vocabulary Vocabulary::load(const std::string& path) {
  return from_tokens(read_lines(path));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary to " + path);
  for (const std::string& tok : tokens_) out << tok << '\n';
  if (!out) throw IoError("failed writing vocabulary to " + path);
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.find(std::string(token)) != ids_.end();
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) +
                     " outside vocabulary of size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

TokenId Vocabulary::add(const std::string& token, std::uint64_t count) {
  auto [it, inserted] =
      ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
  if (inserted) {
    tokens_.push_back(token);
    counts_.push_back(count);
  }
  return it->second;
}

std::vector<TokenId> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const std::string& tok : tokens) ids.push_back(id(tok));
  return ids;
}

Tokens Vocabulary::decode(const std::vector<TokenId>& ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(token(i));
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (in.bad()) throw IoError("failed reading " + path);
  return lines;
}

std::vector<Tokens> read_corpus(const std::string& path) {
  std::vector<Tokens> sentences;
  for (const std::string& line : read_lines(path)) {
    Tokens toks = tokenize(line);
    if (!toks.empty()) sentences.push_back(std::move(toks));
  }
  return sentences;
}

std::vector<TrainingPair> make_pairs(const std::vector<Tokens>& sentences,
                                     const Vocabulary& vocab,
                                     std::size_t target_len,
                                     std::size_t max_src_len) {
  if (target_len < 1) throw ConfigError("target length must be >= 1");
  if (max_src_len < 1) throw ConfigError("max source length must be >= 1");
  std::vector<TokenId> stream;
  std::vector<std::size_t> ends;  // stream offset just past each sentence
  for (const Tokens& s : sentences) {
    for (const std::string& tok : s) stream.push_back(vocab.id(tok));
    ends.push_back(stream.size());
  }
  std::vector<TrainingPair> pairs;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const std::size_t end = ends[i];
    if (end > begin && stream.size() - end >= target_len) {
      TrainingPair pair;
      const std::size_t src_len = std::min(end - begin, max_src_len);
      pair.source.assign(stream.begin() + begin,
                         stream.begin() + begin + src_len);
      pair.target.assign(stream.begin() + end,
                         stream.begin() + end + target_len);
      pairs.push_back(std::move(pair));
    }
    begin = end;
  }
  return pairs;
}

Batch make_batch(const std::vector<TrainingPair>& pairs,
                 const std::vector<std::size_t>& indices) {
  Batch batch;
  batch.batch_size = indices.size();
  for (std::size_t i : indices) {
    batch.max_len = std::max(batch.max_len, pairs.at(i).source.size());
  }
  batch.target_len =
      indices.empty() ? 0 : pairs.at(indices.front()).target.size();
  batch.source.assign(batch.batch_size * batch.max_len, Vocabulary::kPad);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const TrainingPair& pair = pairs[indices[b]];
    if (pair.target.size() != batch.target_len) {
      throw ShapeError("pairs in one batch have different target lengths");
    }
    std::copy(pair.source.begin(), pair.source.end(),
              batch.source.begin() + b * batch.max_len);
    batch.lengths.push_back(static_cast<std::int32_t>(pair.source.size()));
    batch.target.insert(batch.target.end(), pair.target.begin(),
                        pair.target.end());
  }
  return batch;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch),
                    static_cast<std::uint32_t>(epoch >> 32), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<Batch> batchify(const std::vector<TrainingPair>& pairs,
                            std::size_t batch_size, std::uint64_t seed,
                            std::uint64_t epoch) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  const std::vector<std::size_t> order = epoch_order(pairs.size(), seed, epoch);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    batches.push_back(make_batch(
        pairs, std::vector<std::size_t>(order.begin() + start,
                                        order.begin() + stop)));
  }
  return batches;
}

Batch make_source_batch(const std::vector<std::vector<TokenId>>& sentences,
                        std::size_t max_len) {
  std::vector<TrainingPair> pairs;
  pairs.reserve(sentences.size());
  for (const auto& s : sentences) {
    TrainingPair p;
    p.source.assign(s.begin(),
                    s.begin() + static_cast<long>(std::min(s.size(), max_len)));
    pairs.push_back(std::move(p));
  }
  std::vector<std::size_t> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return make_batch(pairs, idx);
}

}  // namespace rnncnn
