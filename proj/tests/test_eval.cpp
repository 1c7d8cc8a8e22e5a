#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "reference.hpp"
#include "rnncnn/errors.hpp"
#include "rnncnn/eval.hpp"
#include "rnncnn/trainer.hpp"

using namespace rnncnn;
using namespace rnncnn::testing;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const auto dir = std::filesystem::temp_directory_path() / "rnncnn_test_eval";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / name).string();
  std::ofstream(path) << text;
  return path;
}

const std::vector<std::string> kWords{"the", "cat", "dog", "sat", "ran", "on",
                                      "mat", "a", "big", "red", "hat", "."};

TrainState make_state(std::size_t hidden = 6, std::size_t embed = 8) {
  TrainConfig c;
  c.model = tiny_config(DecoderKind::kPawCnn);
  c.model.hidden_dim = hidden;
  c.model.embed_dim = embed;
  c.seed = 3;
  std::vector<std::string> tokens{"<pad>", "<unk>", "<s>"};
  tokens.insert(tokens.end(), kWords.begin(), kWords.end());
  return init_train_state(c, Vocabulary::from_tokens(tokens));
}

std::string random_sentence(std::mt19937_64& rng) {
  std::string s;
  const std::size_t n = 1 + rng() % 8;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += kWords[rng() % kWords.size()];
  }
  return s;
}

Vec row(const Tensor<float>& t, std::size_t i) {
  const std::size_t d = t.dim(1);
  return Vec(t.data().begin() + i * d, t.data().begin() + (i + 1) * d);
}

double ref_cosine(const Vec& a, const Vec& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("cosine") {
  const std::vector<float> a{1, 0}, b{1, 1}, c{0, 3}, z{0, 0};
  CHECK(cosine(b, b) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine(a, c) == 0.0);
  CHECK(cosine(a, b) == doctest::Approx(0.7071).epsilon(1e-4));
  CHECK(cosine(a, b) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(cosine(a, z), SimilarityError);
  CHECK_THROWS_AS(cosine(a, std::vector<float>{1, 2, 3}), SimilarityError);
}

TEST_CASE("correlations on closed-form cases") {
  const std::vector<double> x{1, 2, 3}, y{1, 2, 4};
  CHECK(std::abs(pearson(x, y) - 9 / std::sqrt(84.0)) < 1e-10);
  CHECK(std::abs(spearman(x, y) - 1.0) < 1e-10);
  const std::vector<double> x4{1, 2, 2, 3}, y4{1, 3, 2, 4};
  CHECK(std::abs(spearman(x4, y4) - 4.5 / std::sqrt(22.5)) < 1e-10);
  const std::vector<double> neg{-1, -2, -4};
  CHECK(std::abs(pearson(y, neg) + 1.0) < 1e-10);
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{2}), StatisticsError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 1}, std::vector<double>{2, 3}), StatisticsError);
}

TEST_CASE("encode_file") {
  TrainState state = make_state();
  SUBCASE("duplicates, order and unknown words") {
    const Tensor<float> z =
        encode_file(state, write_temp("a.txt", "the cat sat .\nzebra dog\nthe cat sat .\n"));
    CHECK(z.dims() == Dims{3, 24});
    CHECK(row(z, 0) == row(z, 2));
    CHECK(row(z, 0) != row(z, 1));
    const Tensor<float> unk = encode_sentences(state, {"<unk> dog"});
    CHECK(row(unk, 0) == row(z, 1));
  }
  SUBCASE("empty line names its number") {
    try {
      encode_file(state, write_temp("b.txt", "the cat\n   \nthe dog\n"));
      FAIL("expected an empty-sentence error");
    } catch (const EmptySentenceError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("small-model dimension") {
    TrainState big = make_state(300, 300);
    CHECK(encode_file(big, write_temp("c.txt", "a\nb c\nd e f\n")).dims() == Dims{3, 1200});
  }
  SUBCASE("checkpoint round trip is bitwise") {
    const std::string path = write_temp("d.txt", "the big red hat\nthe dog ran on a mat\n");
    const std::string ckpt = write_temp("model.ckpt", "");
    save_checkpoint(state, ckpt);
    TrainState loaded = load_checkpoint(ckpt);
    const Tensor<float> a = encode_file(state, path), b = encode_file(loaded, path);
    CHECK(std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(float)) == 0);
  }
  SUBCASE("batch partitioning does not change the output") {
    std::mt19937_64 rng(4);
    std::vector<std::string> lines;
    for (int i = 0; i < 37; ++i) lines.push_back(random_sentence(rng));
    const Tensor<float> ref = encode_sentences(state, lines, 64);
    for (std::size_t bs : {1u, 2u, 5u, 36u}) {
      const Tensor<float> z = encode_sentences(state, lines, bs);
      double worst = 0;
      for (std::size_t i = 0; i < z.size(); ++i) worst = std::max(worst, std::abs(double(z[i]) - ref[i]));
      CHECK(worst <= 1e-6);
    }
  }
}

TEST_CASE("eval_similarity") {
  TrainState state = make_state();
  std::mt19937_64 rng(5);
  std::vector<std::string> left, right;
  for (int i = 0; i < 4; ++i) {
    left.push_back(random_sentence(rng));
    right.push_back(random_sentence(rng));
  }
  const Tensor<float> a = encode_sentences(state, left), b = encode_sentences(state, right);
  std::vector<double> sims;
  for (int i = 0; i < 4; ++i) sims.push_back(ref_cosine(row(a, i), row(b, i)));
  auto file_with = [&](const std::vector<double>& gold, const char* name) {
    std::string text;
    char buf[64];
    for (int i = 0; i < 4; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", gold[i]);
      text += left[i] + "\t" + right[i] + "\t" + buf + "\n";
    }
    return write_temp(name, text);
  };
  const auto same = eval_similarity(state, file_with(sims, "same.tsv"));
  CHECK(same.pairs == 4);
  CHECK(same.pearson == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(same.spearman == doctest::Approx(1.0).epsilon(1e-9));
  std::vector<double> negated = sims;
  for (double& v : negated) v = -v;
  CHECK(eval_similarity(state, file_with(negated, "neg.tsv")).pearson ==
        doctest::Approx(-1.0).epsilon(1e-9));
  // hand gold scores against the direct formula
  const std::vector<double> gold{0.5, 4.0, 2.5, 1.0};
  double mx = 0, my = 0;
  for (int i = 0; i < 4; ++i) {
    mx += sims[i] / 4;
    my += gold[i] / 4;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 4; ++i) {
    sxy += (sims[i] - mx) * (gold[i] - my);
    sxx += (sims[i] - mx) * (sims[i] - mx);
    syy += (gold[i] - my) * (gold[i] - my);
  }
  CHECK(std::abs(eval_similarity(state, file_with(gold, "hand.tsv")).pearson -
                 sxy / std::sqrt(sxx * syy)) < 1e-6);
  CHECK_THROWS_AS(eval_similarity(state, write_temp("one.tsv", "a\tb\t1\n")), StatisticsError);
  CHECK_THROWS_AS(eval_similarity(state, write_temp("bad.tsv", "a\tb\n")), ParseError);
  CHECK_THROWS_AS(eval_similarity(state, write_temp("bad2.tsv", "a\tb\tx\nc\td\t1\n")), ParseError);
}

TEST_CASE("logistic probe") {
  std::mt19937_64 rng(6);
  std::normal_distribution<float> noise(0.0f, 1.0f);
  auto blobs = [&](std::size_t n, std::vector<std::string>& labels) {
    Tensor<float> x({n, 5});
    labels.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const int cls = static_cast<int>(i % 3);
      labels.push_back("c" + std::to_string(cls));
      for (std::size_t j = 0; j < 5; ++j) x[i * 5 + j] = 0.3f * noise(rng) + (j == std::size_t(cls) ? 4.0f : 0.0f);
    }
    return x;
  };
  SUBCASE("separable data, test = train") {
    std::vector<std::string> y;
    const Tensor<float> x = blobs(60, y);
    const auto r = logistic_probe(x, y, x, y);
    CHECK(r.accuracy == 1.0);
    CHECK(r.classes == std::vector<std::string>{"c0", "c1", "c2"});
  }
  SUBCASE("shuffled labels are at chance") {
    std::vector<std::string> y, yt;
    Tensor<float> x({400, 5}), xt({2000, 5});
    for (float& v : x.data()) v = noise(rng);
    for (float& v : xt.data()) v = noise(rng);
    for (int i = 0; i < 400; ++i) y.push_back(i % 2 ? "a" : "b");
    for (int i = 0; i < 2000; ++i) yt.push_back(i % 2 ? "a" : "b");
    std::shuffle(y.begin(), y.end(), rng);
    const double acc = logistic_probe(x, y, xt, yt).accuracy;
    CHECK(acc == doctest::Approx(0.5).epsilon(0.2));
    CHECK(std::abs(acc - 0.5) <= 0.1);
  }
  SUBCASE("uninformative features predict the majority class") {
    Tensor<float> x({10, 3}, 1.0f);
    std::vector<std::string> y{"a", "a", "a", "a", "a", "a", "a", "b", "b", "b"};
    const Tensor<float> xt({8, 3}, 1.0f);
    const std::vector<std::string> yt{"a", "b", "a", "a", "b", "a", "a", "a"};
    CHECK(logistic_probe(x, y, xt, yt).accuracy == doctest::Approx(6.0 / 8.0));
  }
  SUBCASE("training order does not matter") {
    std::vector<std::string> y, yt;
    const Tensor<float> x = blobs(90, y), xt = blobs(300, yt);
    std::vector<std::size_t> perm(90);
    for (std::size_t i = 0; i < 90; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor<float> px({90, 5});
    std::vector<std::string> py(90);
    for (std::size_t i = 0; i < 90; ++i) {
      py[i] = y[perm[i]];
      for (std::size_t j = 0; j < 5; ++j) px[i * 5 + j] = x[perm[i] * 5 + j];
    }
    CHECK(logistic_probe(x, y, xt, yt).accuracy == logistic_probe(px, py, xt, yt).accuracy);
  }
  SUBCASE("label errors") {
    const Tensor<float> x({2, 1}, {0.0f, 1.0f});
    CHECK_THROWS_AS(logistic_probe(x, {"a", "b"}, x, {"a", "c"}), LabelError);
    CHECK_THROWS_AS(logistic_probe(x, {"a", "a"}, x, {"a", "a"}), LabelError);
  }
}

TEST_CASE("eval_classify reads label<TAB>sentence files") {
  TrainState state = make_state();
  const std::string train = write_temp("train.tsv", "pos\tthe cat sat\nneg\tthe dog ran\npos\ta cat sat\nneg\ta dog ran\n");
  const auto r = eval_classify(state, train, train);
  CHECK(r.accuracy == 1.0);
  CHECK_THROWS_AS(eval_classify(state, train, write_temp("t2.tsv", "other\tthe cat\n")), LabelError);
  CHECK_THROWS_AS(eval_classify(state, write_temp("t3.tsv", "no tab here\n"), train), ParseError);
}

TEST_CASE("nearest_neighbors") {
  TrainState state = make_state();
  std::mt19937_64 rng(7);
  std::vector<std::string> corpus;
  for (int i = 0; i < 12; ++i) corpus.push_back(random_sentence(rng));
  corpus.push_back(corpus[3]);  // tie with line 3
  SUBCASE("query in corpus ranks first with cosine 1, ties by line") {
    const auto nn = nearest_neighbors(state, corpus[3], corpus, 2);
    CHECK(nn[0].line == 3);
    CHECK(nn[1].line == 12);
    CHECK(nn[0].cosine == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("k = corpus size is a permutation sorted by cosine") {
    const auto nn = nearest_neighbors(state, "the red mat", corpus, corpus.size());
    std::vector<std::size_t> lines;
    for (const auto& n : nn) lines.push_back(n.line);
    std::sort(lines.begin(), lines.end());
    for (std::size_t i = 0; i < lines.size(); ++i) CHECK(lines[i] == i);
    // independent ordering from separately computed cosines
    const Tensor<float> q = encode_sentences(state, {"the red mat"});
    const Tensor<float> m = encode_sentences(state, corpus);
    std::vector<std::pair<double, std::size_t>> want;
    for (std::size_t i = 0; i < corpus.size(); ++i) want.emplace_back(-ref_cosine(row(q, 0), row(m, i)), i);
    std::sort(want.begin(), want.end());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(nn[i].cosine == doctest::Approx(-want[i].first).epsilon(1e-9));
      if (i + 1 < want.size() && std::abs(want[i].first - want[i + 1].first) > 1e-9) {
        CHECK(nn[i].line == want[i].second);
      }
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(nearest_neighbors(state, "the cat", {}, 1), ConfigError);
    CHECK_THROWS_AS(nearest_neighbors(state, "the cat", corpus, corpus.size() + 1), ConfigError);
  }
}
