#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rnncnn/checkpoint.hpp"
#include "rnncnn/corpus.hpp"
#include "rnncnn/tensor.hpp"

namespace rnncnn {

struct PretrainedEmbeddings {
  std::size_t dim = 0;
  std::vector<std::string> tokens;
  std::vector<double> values;  // tokens.size() x dim, row-major

  std::size_t size() const { return tokens.size(); }
  // Row of `token`, or nullptr.
  const double* find(const std::string& token) const;
  void add(std::string token, std::vector<double> row);

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// word2vec/GloVe text format: optional "count dim" header, then
// "token v1 ... vd" per line. Duplicate tokens keep their first row.
PretrainedEmbeddings load_pretrained_text(const std::string& path);

struct ExpansionMap {
  Eigen::MatrixXd w;          // d_e x d_pre
  double residual = 0.0;      // sum over fitted pairs of |W v - e|^2
  std::size_t shared = 0;     // number of pairs used in the fit
};

// Least squares W minimising sum_i |W pre_i - learnt_i|^2 over the rows of
// `pre` (n x d_pre) and `learnt` (n x d_e), with a small ridge term.
ExpansionMap fit_linear_map(const Eigen::MatrixXd& pre,
                            const Eigen::MatrixXd& learnt);

// Fits on every vocabulary token that also has a pretrained vector.
ExpansionMap fit_linear_map(const PretrainedEmbeddings& pre,
                            const Tensor<float>& embedding,
                            const Vocabulary& vocab);

// Appends every pretrained token missing from `vocab`, in file order, with
// vector W v. Existing rows are copied unchanged.
std::pair<Tensor<float>, Vocabulary> expand_vocabulary(
    const ExpansionMap& map, const PretrainedEmbeddings& pre,
    const Vocabulary& vocab, const Tensor<float>& embedding);

struct ExpansionReport {
  ExpansionMap map;
  std::size_t added = 0;
};

// Expands the vocabulary and embedding of a checkpoint state in place. The
// map is fitted against the table the encoder reads (the frozen snapshot for
// the frozen-encoder control); the shared table is expanded too so that both
// keep one row per word. Optimizer moments of resized tensors are dropped.
ExpansionReport expand_state(TrainState& state, const PretrainedEmbeddings& pre);

}  // namespace rnncnn
