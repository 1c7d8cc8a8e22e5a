#include "rnncnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Dense>

#include "rnncnn/encoder.hpp"
#include "rnncnn/errors.hpp"

namespace rnncnn {
namespace {

Tensor<float> encode_rows(TrainState& state, const Batch& batch) {
  Tape<float> tape;
  BoundModel<float> bound(tape, state.model, false);
  if (state.frozen_embedding) {
    bound.set_encoder_embedding(tape.constant(*state.frozen_embedding));
  }
  return tape.value(encode(bound, batch));
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos;
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

Eigen::MatrixXd to_matrix(const Tensor<float>& t) {
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    for (std::size_t j = 0; j < t.dim(1); ++j) m(i, j) = t[i * t.dim(1) + j];
  }
  return m;
}

}  // namespace

Tensor<float> encode_sentences(TrainState& state,
                               const std::vector<std::string>& lines,
                               std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  const std::size_t dim = state.config.model.repr_dim();
  if (lines.empty()) throw EmptySentenceError("no sentences to encode");
  std::vector<std::vector<TokenId>> ids;
  ids.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    Tokens toks = tokenize(lines[i]);
    if (toks.empty()) {
      throw EmptySentenceError("line " + std::to_string(i + 1) + " is empty");
    }
    ids.push_back(state.vocab.encode(toks));
  }
  Tensor<float> out({lines.size(), dim});
  for (std::size_t start = 0; start < ids.size(); start += batch_size) {
    const std::size_t end = std::min(ids.size(), start + batch_size);
    const std::vector<std::vector<TokenId>> chunk(ids.begin() + start, ids.begin() + end);
    const Tensor<float> z =
        encode_rows(state, make_source_batch(chunk, state.config.model.max_src_len));
    std::copy(z.data().begin(), z.data().end(), out.data().begin() + start * dim);
  }
  return out;
}

Tensor<float> encode_file(TrainState& state, const std::string& path,
                          std::size_t batch_size) {
  try {
    return encode_sentences(state, read_lines(path), batch_size);
  } catch (const EmptySentenceError& e) {
    throw EmptySentenceError(path + ": " + e.what());
  }
}

double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) {
    throw SimilarityError("cosine of vectors with sizes " + std::to_string(u.size()) +
                          " and " + std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw SimilarityError("cosine of a zero vector");
  return std::clamp(dot / std::sqrt(nu * nv), -1.0, 1.0);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StatisticsError("correlation of unequal lengths");
  if (x.size() < 2) throw StatisticsError("correlation needs at least 2 pairs");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw StatisticsError("correlation of a constant series");
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StatisticsError("correlation of unequal lengths");
  const std::vector<double> rx = average_ranks(x), ry = average_ranks(y);
  return pearson(rx, ry);
}

SimilarityResult eval_similarity(TrainState& state, const std::string& path) {
  std::vector<std::string> left, right;
  std::vector<double> gold;
  const std::vector<std::string> lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    const auto fields = split_tabs(lines[i]);
    const std::string where = path + ":" + std::to_string(i + 1);
    if (fields.size() != 3) {
      throw ParseError(where + ": expected sentence1<TAB>sentence2<TAB>score");
    }
    try {
      std::size_t used = 0;
      gold.push_back(std::stod(fields[2], &used));
      if (used != fields[2].size() && !blank(fields[2].substr(used))) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError(where + ": bad score '" + fields[2] + "'");
    }
    left.push_back(fields[0]);
    right.push_back(fields[1]);
  }
  if (gold.size() < 2) throw StatisticsError(path + ": need at least 2 scored pairs");
  const Tensor<float> a = encode_sentences(state, left);
  const Tensor<float> b = encode_sentences(state, right);
  const std::size_t d = a.dim(1);
  std::vector<double> sims(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    sims[i] = cosine(a.data().subspan(i * d, d), b.data().subspan(i * d, d));
  }
  return {pearson(sims, gold), spearman(sims, gold), gold.size()};
}

ProbeResult logistic_probe(const Tensor<float>& train_x,
                           const std::vector<std::string>& train_y,
                           const Tensor<float>& test_x,
                           const std::vector<std::string>& test_y,
                           const ProbeOptions& options) {
  if (train_x.rank() != 2 || train_x.dim(0) != train_y.size() ||
      test_x.rank() != 2 || test_x.dim(0) != test_y.size() ||
      test_x.dim(1) != train_x.dim(1)) {
    throw ShapeError("probe features and labels do not line up");
  }
  std::map<std::string, int> class_of;
  for (const auto& y : train_y) class_of.emplace(y, 0);
  if (class_of.size() < 2) throw LabelError("probe needs at least 2 classes in training");
  ProbeResult result;
  for (auto& [name, id] : class_of) {
    id = static_cast<int>(result.classes.size());
    result.classes.push_back(name);
  }
  for (const auto& y : test_y) {
    if (!class_of.count(y)) throw LabelError("test label '" + y + "' never seen in training");
  }

  const Eigen::Index n = static_cast<Eigen::Index>(train_y.size());
  const Eigen::Index d = static_cast<Eigen::Index>(train_x.dim(1));
  const Eigen::Index c = static_cast<Eigen::Index>(result.classes.size());
  Eigen::MatrixXd x = to_matrix(train_x);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::RowVectorXd scale =
      ((x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(scale(j) > 1e-12)) scale(j) = 1.0;
  }
  auto standardize = [&](Eigen::MatrixXd m) {
    Eigen::MatrixXd out(m.rows(), d + 1);
    out.leftCols(d) = ((m.rowwise() - mean).array().rowwise() / scale.array()).matrix();
    out.col(d).setOnes();
    return out;
  };
  const Eigen::MatrixXd xs = standardize(std::move(x));
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, c);
  for (Eigen::Index i = 0; i < n; ++i) y(i, class_of[train_y[i]]) = 1.0;

  // Largest eigenvalue of X'X / n by power iteration.
  const Eigen::MatrixXd gram = xs.transpose() * xs / static_cast<double>(n);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(d + 1).normalized();
  double lambda_max = 0.0;
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd w = gram * v;
    lambda_max = w.norm();
    if (lambda_max == 0.0) break;
    v = w / lambda_max;
  }
  const double lipschitz = 0.5 * lambda_max + options.l2;
  const double step = 1.0 / lipschitz;

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(c, d + 1);
  Eigen::MatrixXd grad(c, d + 1);
  for (result.iterations = 0;; ++result.iterations) {
    Eigen::MatrixXd p = xs * w.transpose();  // n x c logits
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - mx).exp().matrix();
      p.row(i) /= p.row(i).sum();
    }
    grad = (p - y).transpose() * xs / static_cast<double>(n);
    grad.leftCols(d) += options.l2 * w.leftCols(d);
    result.grad_norm = grad.norm();
    if (result.grad_norm < options.tolerance || result.iterations >= options.max_iters) break;
    w -= step * grad;
  }

  const Eigen::MatrixXd scores = standardize(to_matrix(test_x)) * w.transpose();
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < c; ++k) {
      if (scores(i, k) > scores(i, best)) best = k;
    }
    correct += best == class_of[test_y[i]];
  }
  result.accuracy = test_y.empty() ? 0.0
                                   : static_cast<double>(correct) /
                                         static_cast<double>(test_y.size());
  return result;
}

LabeledSentences read_labeled(const std::string& path) {
  LabeledSentences out;
  const std::vector<std::string> lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    const std::size_t tab = lines[i].find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw ParseError(path + ":" + std::to_string(i + 1) + ": expected label<TAB>sentence");
    }
    out.labels.push_back(lines[i].substr(0, tab));
    out.sentences.push_back(lines[i].substr(tab + 1));
  }
  return out;
}

ProbeResult eval_classify(TrainState& state, const std::string& train_path,
                          const std::string& test_path,
                          const ProbeOptions& options) {
  const LabeledSentences train = read_labeled(train_path);
  const LabeledSentences test = read_labeled(test_path);
  if (test.labels.empty()) throw LabelError(test_path + ": no labeled sentences");
  return logistic_probe(encode_sentences(state, train.sentences), train.labels,
                        encode_sentences(state, test.sentences), test.labels, options);
}

std::vector<Neighbor> nearest_neighbors(TrainState& state,
                                        const std::string& query,
                                        const std::vector<std::string>& corpus,
                                        std::size_t k) {
  if (corpus.empty()) throw ConfigError("nearest neighbours over an empty corpus");
  if (k > corpus.size()) {
    throw ConfigError("k = " + std::to_string(k) + " exceeds corpus size " +
                      std::to_string(corpus.size()));
  }
  const Tensor<float> q = encode_sentences(state, {query});
  const Tensor<float> m = encode_sentences(state, corpus);
  const std::size_t d = q.size();
  std::vector<Neighbor> all(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    all[i] = {i, corpus[i], cosine(q.data(), m.data().subspan(i * d, d))};
  }
  std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.cosine > b.cosine;
  });
  all.resize(k);
  return all;
}

}  // namespace rnncnn
