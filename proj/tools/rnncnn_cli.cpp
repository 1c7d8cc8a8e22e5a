// Command-line front end: one binary, one subcommand per task.

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "rnncnn/errors.hpp"
#include "rnncnn/eval.hpp"
#include "rnncnn/expansion.hpp"
#include "rnncnn/trainer.hpp"

using namespace rnncnn;

namespace {

std::vector<std::string> non_blank_lines(const std::string& path) {
  std::vector<std::string> out;
  for (std::string& line : read_lines(path)) {
    if (line.find_first_not_of(" \t") != std::string::npos) out.push_back(std::move(line));
  }
  return out;
}

void write_matrix(const Tensor<float>& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  char buf[32];
  const std::size_t d = m.dim(1);
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(m[i * d + j]));
      if (j) out << ' ';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sentence encoder training and evaluation"};
  app.require_subcommand(1);

  std::string corpus, vocab_path, config_path, out, ckpt, in, pretrained, pairs,
      train_file, test_file, query, log_path, resume, vocab_out;
  std::size_t size = 20000, k = 5;
  double l2 = ProbeOptions{}.l2;

  auto* build = app.add_subcommand("build-vocab", "Build a vocabulary from a corpus");
  build->add_option("--corpus", corpus, "One sentence per line")->required();
  build->add_option("--size", size, "Number of words besides the specials");
  build->add_option("--out", out, "Vocabulary file")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--corpus", corpus)->required();
  train_cmd->add_option("--vocab", vocab_path)->required();
  train_cmd->add_option("--config", config_path, "key=value training config")->required();
  train_cmd->add_option("--out", out, "Checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "Loss log (default: stdout)");
  train_cmd->add_option("--resume", resume, "Continue from this checkpoint");

  auto* encode_cmd = app.add_subcommand("encode", "Encode sentences");
  encode_cmd->add_option("--ckpt", ckpt)->required();
  encode_cmd->add_option("--in", in)->required();
  encode_cmd->add_option("--out", out)->required();

  auto* expand_cmd = app.add_subcommand("expand", "Expand the vocabulary with pretrained vectors");
  expand_cmd->add_option("--ckpt", ckpt)->required();
  expand_cmd->add_option("--pretrained", pretrained)->required();
  expand_cmd->add_option("--out", out)->required();
  expand_cmd->add_option("--vocab-out", vocab_out, "Also write the extended vocabulary");

  auto* sim_cmd = app.add_subcommand("eval-sim", "Cosine similarity vs gold scores");
  sim_cmd->add_option("--ckpt", ckpt)->required();
  sim_cmd->add_option("--pairs", pairs, "sentence1<TAB>sentence2<TAB>score")->required();

  auto* cls_cmd = app.add_subcommand("eval-cls", "Logistic probe accuracy");
  cls_cmd->add_option("--ckpt", ckpt)->required();
  cls_cmd->add_option("--train", train_file, "label<TAB>sentence")->required();
  cls_cmd->add_option("--test", test_file, "label<TAB>sentence")->required();
  cls_cmd->add_option("--l2", l2);

  auto* nn_cmd = app.add_subcommand("nn", "Nearest neighbours of a query");
  nn_cmd->add_option("--ckpt", ckpt)->required();
  nn_cmd->add_option("--corpus", corpus)->required();
  nn_cmd->add_option("--query", query)->required();
  nn_cmd->add_option("-k", k);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (build->parsed()) {
      const Vocabulary v = Vocabulary::build(read_corpus(corpus), size);
      v.save(out);
      std::cout << "vocabulary of " << v.size() << " tokens written to " << out << '\n';
    } else if (train_cmd->parsed()) {
      TrainConfig config = load_train_config(config_path);
      TrainState state = resume.empty()
                             ? init_train_state(config, Vocabulary::load(vocab_path))
                             : load_checkpoint(resume);
      if (!resume.empty()) state.config.steps = config.steps;
      const auto training_pairs = load_training_pairs(corpus, state.vocab, state.config.model);
      std::ofstream log_file;
      std::ostream* log = &std::cout;
      if (!log_path.empty()) {
        log_file.open(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
        if (!log_file) throw IoError("cannot write " + log_path);
        log = &log_file;
      }
      train(state, training_pairs, {log, out, {}});
    } else if (encode_cmd->parsed()) {
      TrainState state = load_checkpoint(ckpt);
      write_matrix(encode_file(state, in), out);
    } else if (expand_cmd->parsed()) {
      TrainState state = load_checkpoint(ckpt);
      const ExpansionReport report = expand_state(state, load_pretrained_text(pretrained));
      save_checkpoint(state, out);
      if (!vocab_out.empty()) state.vocab.save(vocab_out);
      std::cout << "fitted on " << report.map.shared << " shared words (residual "
                << report.map.residual << "), added " << report.added << " words\n";
    } else if (sim_cmd->parsed()) {
      TrainState state = load_checkpoint(ckpt);
      const SimilarityResult r = eval_similarity(state, pairs);
      std::printf("pairs\t%zu\npearson\t%.6f\nspearman\t%.6f\n", r.pairs, r.pearson, r.spearman);
    } else if (cls_cmd->parsed()) {
      TrainState state = load_checkpoint(ckpt);
      ProbeOptions options;
      options.l2 = l2;
      const ProbeResult r = eval_classify(state, train_file, test_file, options);
      std::printf("accuracy\t%.6f\niterations\t%zu\n", r.accuracy, r.iterations);
    } else if (nn_cmd->parsed()) {
      TrainState state = load_checkpoint(ckpt);
      for (const Neighbor& n : nearest_neighbors(state, query, non_blank_lines(corpus), k)) {
        std::printf("%.6f\t%s\n", n.cosine, n.sentence.c_str());
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
