#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "rnncnn/errors.hpp"
#include "rnncnn/expansion.hpp"
#include "rnncnn/trainer.hpp"

using namespace rnncnn;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const auto dir = std::filesystem::temp_directory_path() / "rnncnn_test_expansion";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / name).string();
  std::ofstream(path) << text;
  return path;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  }
  return m;
}

// Residual recomputed row by row.
double recompute_residual(const Eigen::MatrixXd& w, const Eigen::MatrixXd& pre,
                          const Eigen::MatrixXd& learnt) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < pre.rows(); ++i) {
    for (Eigen::Index k = 0; k < learnt.cols(); ++k) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < pre.cols(); ++j) s += w(k, j) * pre(i, j);
      total += (s - learnt(i, k)) * (s - learnt(i, k));
    }
  }
  return total;
}

}  // namespace

TEST_CASE("load_pretrained_text") {
  SUBCASE("plain rows") {
    const auto p = load_pretrained_text(write_temp("a.txt", "cat 1 2 3\ndog 4 5 6\n"));
    CHECK(p.size() == 2);
    CHECK(p.dim == 3);
    CHECK(p.find("dog")[2] == 6.0);
    CHECK(p.find("cow") == nullptr);
  }
  SUBCASE("header is skipped") {
    const auto p = load_pretrained_text(write_temp("b.txt", "2 3\ncat 1 2 3\ndog 4 5 6\n"));
    CHECK(p.size() == 2);
    CHECK(p.tokens == std::vector<std::string>{"cat", "dog"});
  }
  SUBCASE("duplicates keep the first row") {
    const auto p = load_pretrained_text(write_temp("c.txt", "cat 1 2\ncat 9 9\n"));
    CHECK(p.size() == 1);
    CHECK(p.find("cat")[0] == 1.0);
  }
  SUBCASE("ragged row names its line") {
    try {
      load_pretrained_text(write_temp("d.txt", "cat 1 2 3\ndog 4 5 6\ncow 7 8\n"));
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("d.txt:3") != std::string::npos);
    }
    CHECK_THROWS_AS(load_pretrained_text(write_temp("e.txt", "3 2\ncat 1 2 3\n")), ParseError);
    CHECK_THROWS_AS(load_pretrained_text(write_temp("f.txt", "cat 1 x\n")), ParseError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_pretrained_text("/nonexistent/vectors.txt"), IoError);
  }
}

TEST_CASE("fit_linear_map examples") {
  SUBCASE("scalar least squares") {
    Eigen::MatrixXd pre(2, 1), learnt(2, 1);
    pre << 1, 2;
    learnt << 2, 4;
    const auto map = fit_linear_map(pre, learnt);
    CHECK(map.w(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(map.shared == 2);
  }
  SUBCASE("identity recovery") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::MatrixXd v = random_matrix(rng, 16, 16);
      const auto map = fit_linear_map(v, v);
      const double err = (map.w - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff();
      CHECK(err < 1e-4);
    }
  }
  SUBCASE("no shared tokens") {
    CHECK_THROWS_AS(fit_linear_map(Eigen::MatrixXd(0, 3), Eigen::MatrixXd(0, 2)), CoverageError);
  }
}

TEST_CASE("fit_linear_map agrees with the pseudo-inverse solution") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index d_pre = 2 + trial % 5, d_e = 1 + trial % 4;
    const Eigen::Index n = d_pre + 3 + trial % 20;
    const Eigen::MatrixXd pre = random_matrix(rng, n, d_pre);
    const Eigen::MatrixXd learnt = random_matrix(rng, n, d_e);
    const auto map = fit_linear_map(pre, learnt);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(pre, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd inv = svd.singularValues();
    for (Eigen::Index i = 0; i < inv.size(); ++i) inv(i) = 1.0 / inv(i);
    const Eigen::MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    const Eigen::MatrixXd oracle = (pinv * learnt).transpose();
    CHECK((map.w - oracle).cwiseAbs().maxCoeff() < 1e-6);
    const double residual = recompute_residual(map.w, pre, learnt);
    CHECK(std::abs(map.residual - residual) <= 1e-6 * residual);
    CHECK(map.residual >= 0.0);
  }
}

TEST_CASE("rank-deficient shared sets still give a finite map") {
  Eigen::MatrixXd pre(3, 2), learnt(3, 1);
  pre << 1, 2, 2, 4, 3, 6;  // second column is twice the first
  learnt << 1, 2, 3;
  const auto map = fit_linear_map(pre, learnt);
  CHECK(map.w.allFinite());
  CHECK(map.residual < 1e-6);
}

TEST_CASE("expand_vocabulary") {
  const Vocabulary vocab = Vocabulary::from_tokens({"<pad>", "<unk>", "<s>", "cat", "dog"});
  std::mt19937_64 rng(3);
  Tensor<float> table({5, 2});
  std::uniform_real_distribution<float> u(-1, 1);
  for (float& v : table.data()) v = u(rng);

  PretrainedEmbeddings pre;
  pre.add("cat", {1, 0});
  pre.add("dog", {0, 1});
  pre.add("cow", {0.5, -2});
  pre.add("nil", {0, 0});
  pre.add("cow2", {1.5, -6});  // 3x cow

  const auto map = fit_linear_map(pre, table, vocab);
  CHECK(map.shared == 2);
  const auto [extended, ext_vocab] = expand_vocabulary(map, pre, vocab, table);
  REQUIRE(ext_vocab.size() == 8);
  CHECK(ext_vocab.id("cow") == 5);
  CHECK(ext_vocab.id("cow2") == 7);
  CHECK(extended.dims() == Dims{8, 2});
  for (std::size_t i = 0; i < table.size(); ++i) CHECK(extended[i] == table[i]);
  // cat and dog are unit vectors, so W's columns are their learnt rows
  CHECK(extended[10] == doctest::Approx(0.5 * table[6] - 2 * table[8]).epsilon(1e-5));
  CHECK(extended[11] == doctest::Approx(0.5 * table[7] - 2 * table[9]).epsilon(1e-5));
  CHECK(extended[12] == 0.0f);
  CHECK(extended[13] == 0.0f);
  CHECK(extended[14] == doctest::Approx(3 * extended[10]).epsilon(1e-5));
  CHECK(extended[15] == doctest::Approx(3 * extended[11]).epsilon(1e-5));

  SUBCASE("no new tokens leaves the table unchanged") {
    PretrainedEmbeddings known;
    known.add("cat", {1, 0});
    known.add("dog", {0, 1});
    const auto [same, same_vocab] = expand_vocabulary(fit_linear_map(known, table, vocab), known, vocab, table);
    CHECK(same_vocab.tokens() == vocab.tokens());
    CHECK(std::vector<float>(same.data().begin(), same.data().end()) ==
          std::vector<float>(table.data().begin(), table.data().end()));
  }
  SUBCASE("identity map reproduces pretrained vectors") {
    Tensor<float> ident({5, 2}, {0, 0, 0, 0, 0, 0, 1, 0, 0, 1});
    const auto [t, v] = expand_vocabulary(fit_linear_map(pre, ident, vocab), pre, vocab, ident);
    CHECK(t[10] == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(t[11] == doctest::Approx(-2.0).epsilon(1e-5));
  }
  SUBCASE("no shared tokens") {
    PretrainedEmbeddings other;
    other.add("zebra", {1, 2});
    CHECK_THROWS_AS(fit_linear_map(other, table, vocab), CoverageError);
  }
}

TEST_CASE("expand_state extends the checkpoint vocabulary") {
  TrainConfig c;
  c.model.embed_dim = 3;
  c.model.hidden_dim = 2;
  c.model.dec_channels1 = 2;
  c.model.dec_channels2 = 2;
  c.model.target_len = 2;
  c.model.init_scale = 0.5;
  for (bool frozen : {false, true}) {
    c.freeze_encoder = frozen;
    TrainState state = init_train_state(
        c, Vocabulary::from_tokens({"<pad>", "<unk>", "<s>", "cat", "dog", "sat"}));
    PretrainedEmbeddings pre;
    pre.add("cat", {1, 0, 0});
    pre.add("dog", {0, 1, 0});
    pre.add("sat", {0, 0, 1});
    pre.add("cow", {1, 1, 0});
    const Tensor<float> before = state.model.embedding();
    const auto report = expand_state(state, pre);
    CHECK(report.added == 1);
    CHECK(state.vocab.id("cow") == 6);
    CHECK(state.config.model.vocab_size == 7);
    CHECK(state.model.embedding().dims() == Dims{7, 3});
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(state.model.embedding()[i] == before[i]);
    const Tensor<float>& enc = frozen ? *state.frozen_embedding : state.model.embedding();
    REQUIRE(enc.dims() == Dims{7, 3});
    // cow = cat + dog under the fitted (exact) map
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(enc[18 + k] == doctest::Approx(enc[9 + k] + enc[12 + k]).epsilon(1e-5));
    }
    // survives a checkpoint round trip
    CHECK_NOTHROW(deserialize_checkpoint(serialize_checkpoint(state)));
  }
}
