#pragma once

#include <span>
#include <string>
#include <vector>

#include "rnncnn/checkpoint.hpp"

namespace rnncnn {

// Sentence representations, one row per input line, in input order. Lines
// are tokenized, mapped through the checkpoint vocabulary (UNK for unknown
// words) and truncated to max_src_len. A line without tokens raises
// EmptySentenceError naming its 1-based line number.
Tensor<float> encode_sentences(TrainState& state,
                               const std::vector<std::string>& lines,
                               std::size_t batch_size = 64);
Tensor<float> encode_file(TrainState& state, const std::string& path,
                          std::size_t batch_size = 64);

// Throws SimilarityError for a zero vector or mismatched lengths.
double cosine(std::span<const float> u, std::span<const float> v);

// Throw StatisticsError for fewer than 2 points or zero variance.
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

struct SimilarityResult {
  double pearson = 0.0;
  double spearman = 0.0;
  std::size_t pairs = 0;
};

// Lines "sentence1<TAB>sentence2<TAB>score".
SimilarityResult eval_similarity(TrainState& state, const std::string& path);

struct ProbeOptions {
  double l2 = 1e-4;
  std::size_t max_iters = 10000;
  double tolerance = 1e-6;  // on the gradient norm
};

struct ProbeResult {
  double accuracy = 0.0;
  std::size_t iterations = 0;
  double grad_norm = 0.0;
  std::vector<std::string> classes;
};

// Multinomial logistic regression on z-scored features (statistics from the
// training rows), fitted by full-batch gradient descent with step 1/L.
// Labels are arbitrary strings; a test label absent from training raises
// LabelError, as does a training set with fewer than two classes.
ProbeResult logistic_probe(const Tensor<float>& train_x,
                           const std::vector<std::string>& train_y,
                           const Tensor<float>& test_x,
                           const std::vector<std::string>& test_y,
                           const ProbeOptions& options = {});

struct LabeledSentences {
  std::vector<std::string> labels;
  std::vector<std::string> sentences;
};

// Lines "label<TAB>sentence".
LabeledSentences read_labeled(const std::string& path);

ProbeResult eval_classify(TrainState& state, const std::string& train_path,
                          const std::string& test_path,
                          const ProbeOptions& options = {});

struct Neighbor {
  std::size_t line = 0;  // 0-based index into the corpus
  std::string sentence;
  double cosine = 0.0;
};

// Top-k corpus sentences by cosine to the query, ties broken by line.
std::vector<Neighbor> nearest_neighbors(TrainState& state,
                                        const std::string& query,
                                        const std::vector<std::string>& corpus,
                                        std::size_t k);

}  // namespace rnncnn
