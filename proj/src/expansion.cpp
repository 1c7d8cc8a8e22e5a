#include "rnncnn/expansion.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "rnncnn/errors.hpp"

namespace rnncnn {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_size(std::string_view s, std::size_t& out) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

const double* PretrainedEmbeddings::find(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? nullptr : values.data() + it->second * dim;
}

void PretrainedEmbeddings::add(std::string token, std::vector<double> row) {
  if (tokens.empty() && dim == 0) dim = row.size();
  if (row.size() != dim) {
    throw ShapeError("pretrained vector for '" + token + "' has " +
                     std::to_string(row.size()) + " values, expected " +
                     std::to_string(dim));
  }
  if (index_.count(token)) return;
  index_.emplace(token, tokens.size());
  tokens.push_back(std::move(token));
  values.insert(values.end(), row.begin(), row.end());
}

PretrainedEmbeddings load_pretrained_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pretrained vectors " + path);
  PretrainedEmbeddings out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    std::size_t count = 0, dim = 0;
    if (line_no == 1 && fields.size() == 2 && parse_size(fields[0], count) &&
        parse_size(fields[1], dim)) {
      out.dim = dim;
      continue;
    }
    const std::string where = path + ":" + std::to_string(line_no);
    if (fields.size() < 2) {
      throw ParseError(where + ": expected a token followed by numbers");
    }
    if (out.dim == 0) out.dim = fields.size() - 1;
    if (fields.size() - 1 != out.dim) {
      throw ParseError(where + ": expected " + std::to_string(out.dim) +
                       " values, got " + std::to_string(fields.size() - 1));
    }
    std::vector<double> row(out.dim);
    for (std::size_t k = 0; k < out.dim; ++k) {
      if (!parse_double(fields[k + 1], row[k])) {
        throw ParseError(where + ": bad number '" + std::string(fields[k + 1]) +
                         "'");
      }
    }
    out.add(std::string(fields[0]), std::move(row));
  }
  return out;
}

ExpansionMap fit_linear_map(const Eigen::MatrixXd& pre,
                            const Eigen::MatrixXd& learnt) {
  if (pre.rows() == 0) {
    throw CoverageError("no shared tokens between pretrained and learnt vectors");
  }
  if (pre.rows() != learnt.rows()) {
    throw ShapeError("pretrained and learnt row counts differ");
  }
  const Eigen::Index d = pre.cols();
  Eigen::MatrixXd gram = pre.transpose() * pre;
  // Ridge scaled to the mean squared pretrained entry.
  double lambda = 1e-6 * gram.trace() / static_cast<double>(pre.rows() * d);
  if (!(lambda > 0)) lambda = 1e-12;
  gram.diagonal().array() += lambda;
  const Eigen::MatrixXd rhs = pre.transpose() * learnt;  // d_pre x d_e
  const auto solver = gram.ldlt();
  // Iterated Tikhonov: each pass solves (G + lambda I) X' = rhs + lambda X,
  // shrinking the ridge bias geometrically on well-determined directions
  // while null-space directions stay at zero.
  Eigen::MatrixXd x = solver.solve(rhs);
  for (int pass = 0; pass < 4; ++pass) x = solver.solve(rhs + lambda * x);
  ExpansionMap map;
  map.w = x.transpose();
  map.residual = (pre * map.w.transpose() - learnt).squaredNorm();
  map.shared = static_cast<std::size_t>(pre.rows());
  if (!map.w.allFinite()) throw NumericError("expansion map is not finite");
  return map;
}

ExpansionMap fit_linear_map(const PretrainedEmbeddings& pre,
                            const Tensor<float>& embedding,
                            const Vocabulary& vocab) {
  const std::size_t de = embedding.dim(1);
  std::vector<std::size_t> ids;
  std::vector<const double*> rows;
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (const double* r = pre.find(vocab.tokens()[id])) {
      ids.push_back(id);
      rows.push_back(r);
    }
  }
  Eigen::MatrixXd p(ids.size(), pre.dim), e(ids.size(), de);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t k = 0; k < pre.dim; ++k) p(i, k) = rows[i][k];
    for (std::size_t k = 0; k < de; ++k) e(i, k) = embedding[ids[i] * de + k];
  }
  return fit_linear_map(p, e);
}

std::pair<Tensor<float>, Vocabulary> expand_vocabulary(
    const ExpansionMap& map, const PretrainedEmbeddings& pre,
    const Vocabulary& vocab, const Tensor<float>& embedding) {
  const std::size_t de = embedding.dim(1);
  if (static_cast<std::size_t>(map.w.rows()) != de ||
      static_cast<std::size_t>(map.w.cols()) != pre.dim) {
    throw ShapeError("expansion map does not match the embedding sizes");
  }
  Vocabulary extended = vocab;
  std::vector<float> data(embedding.data().begin(), embedding.data().end());
  Eigen::VectorXd v(pre.dim);
  for (std::size_t i = 0; i < pre.size(); ++i) {
    if (extended.contains(pre.tokens[i])) continue;
    extended.add(pre.tokens[i]);
    for (std::size_t k = 0; k < pre.dim; ++k) v(k) = pre.values[i * pre.dim + k];
    const Eigen::VectorXd mapped = map.w * v;
    for (std::size_t k = 0; k < de; ++k) data.push_back(static_cast<float>(mapped(k)));
  }
  return {Tensor<float>({extended.size(), de}, std::move(data)), std::move(extended)};
}

ExpansionReport expand_state(TrainState& state, const PretrainedEmbeddings& pre) {
  const Vocabulary old_vocab = state.vocab;
  const Tensor<float>& encoder_table =
      state.frozen_embedding ? *state.frozen_embedding : state.model.embedding();
  ExpansionReport report;
  report.map = fit_linear_map(pre, encoder_table, old_vocab);
  auto [table, vocab] = expand_vocabulary(report.map, pre, old_vocab, encoder_table);
  report.added = vocab.size() - old_vocab.size();
  if (state.frozen_embedding) {
    const ExpansionMap shared_map = fit_linear_map(pre, state.model.embedding(), old_vocab);
    state.model.set_embedding(
        expand_vocabulary(shared_map, pre, old_vocab, state.model.embedding()).first);
    state.frozen_embedding = std::move(table);
  } else {
    state.model.set_embedding(std::move(table));
  }
  state.vocab = std::move(vocab);
  state.config.model.vocab_size = state.vocab.size();
  for (std::size_t i = 0; i < state.adam.size(); ++i) {
    if (state.adam[i] && state.adam[i]->m.dims() != state.model.param(i).dims()) {
      state.adam[i].reset();
    }
  }
  return report;
}

}  // namespace rnncnn
