#include "rnncnn/trainer.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "rnncnn/errors.hpp"
#include "rnncnn/expansion.hpp"

namespace rnncnn {
namespace {

const std::string kEncoderPrefix = "enc.";

bool is_frozen(const TrainState& state, const std::string& name) {
  return state.config.freeze_encoder && name.rfind(kEncoderPrefix, 0) == 0;
}

void load_pretrained_rows(const std::string& path, const Vocabulary& vocab,
                          Tensor<float>& table) {
  const PretrainedEmbeddings pre = load_pretrained_text(path);
  const std::size_t d = table.dim(1);
  if (pre.dim != d) {
    throw ConfigError("pretrained vectors in " + path + " have dimension " +
                      std::to_string(pre.dim) + ", embed_dim is " +
                      std::to_string(d));
  }
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    const double* row = pre.find(vocab.tokens()[id]);
    if (row == nullptr) continue;
    for (std::size_t k = 0; k < d; ++k) table[id * d + k] = static_cast<float>(row[k]);
  }
}

}  // namespace

TrainState init_train_state(TrainConfig config, Vocabulary vocab) {
  config.model.vocab_size = vocab.size();
  config.validate();
  TrainState state{config, std::move(vocab), Model<float>(config.model, config.seed),
                   0, {}, std::nullopt};
  if (!config.pretrained.empty()) {
    load_pretrained_rows(config.pretrained, state.vocab, state.model.embedding());
  }
  state.adam.resize(state.model.num_tensors());
  if (config.freeze_encoder) state.frozen_embedding = state.model.embedding();
  return state;
}

Rng step_rng(std::uint64_t seed, std::uint64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                    0xdec0deu};
  return Rng(seq);
}

double train_step(TrainState& state, const Batch& batch,
                  std::uint64_t batch_index) {
  Model<float>& model = state.model;
  model.zero_grad();
  Tape<float> tape;
  std::vector<std::string> frozen;
  if (state.config.freeze_encoder) frozen.push_back(kEncoderPrefix);
  BoundModel<float> bound(tape, model, true, frozen);
  if (state.frozen_embedding) {
    bound.set_encoder_embedding(tape.constant(*state.frozen_embedding));
  }
  Rng rng = step_rng(state.config.seed, state.step);
  const Var loss = model_loss(bound, batch, &rng);
  const double value = tape.value(loss)[0];
  if (!std::isfinite(value)) {
    throw NumericError("non-finite loss at batch " + std::to_string(batch_index) +
                       " (step " + std::to_string(state.step) + ")");
  }
  tape.backward(loss);

  // Check every gradient first so a failure leaves all parameters untouched.
  for (std::size_t i = 0; i < model.num_tensors(); ++i) {
    if (is_frozen(state, model.name(i))) continue;
    const auto grad = model.param(i).grad();
    const Eigen::Map<const Eigen::ArrayXf> g(grad.data(), static_cast<Eigen::Index>(grad.size()));
    if (!g.allFinite()) {
      throw NumericError("non-finite gradient for " + model.name(i) +
                         " at batch " + std::to_string(batch_index));
    }
  }

  AdamOptions options;
  options.lr = state.config.lr;
  state.adam.resize(model.num_tensors());
  for (std::size_t i = 0; i < model.num_tensors(); ++i) {
    if (is_frozen(state, model.name(i))) continue;
    Tensor<float>& p = model.param(i);
    if (!state.adam[i]) state.adam[i].emplace(p.dims());
    adam_step<float>(p, p.grad(), *state.adam[i], options, model.name(i));
  }
  ++state.step;
  return value;
}

void train(TrainState& state, const std::vector<TrainingPair>& pairs,
           const TrainOptions& options) {
  const TrainConfig& config = state.config;
  if (pairs.empty() && state.step < config.steps) {
    throw ConfigError("corpus yields no training pairs (need more than " +
                      std::to_string(config.model.target_len) +
                      " tokens after the first sentence)");
  }
  const std::size_t per_epoch =
      pairs.empty() ? 1 : (pairs.size() + config.batch_size - 1) / config.batch_size;
  std::uint64_t cached_epoch = 0;
  std::vector<Batch> batches;
  char line[64];
  while (state.step < config.steps) {
    const std::uint64_t epoch = state.step / per_epoch;
    const std::uint64_t index = state.step % per_epoch;
    if (batches.empty() || epoch != cached_epoch) {
      batches = batchify(pairs, config.batch_size, config.seed, epoch);
      cached_epoch = epoch;
    }
    const double loss = train_step(state, batches[index], state.step);
    if (options.loss_log) {
      std::snprintf(line, sizeof line, "%llu\t%.9g\n",
                    static_cast<unsigned long long>(state.step), loss);
      *options.loss_log << line;
    }
    if (options.on_step) options.on_step(state.step, loss);
    if (!options.checkpoint_path.empty() && state.step % config.checkpoint_every == 0 &&
        state.step < config.steps) {
      save_checkpoint(state, options.checkpoint_path);
    }
  }
  if (options.loss_log) options.loss_log->flush();
  if (!options.checkpoint_path.empty()) save_checkpoint(state, options.checkpoint_path);
}

std::vector<TrainingPair> load_training_pairs(const std::string& corpus_path,
                                              const Vocabulary& vocab,
                                              const ModelConfig& config) {
  return make_pairs(read_corpus(corpus_path), vocab, config.target_len,
                    config.max_src_len);
}

}  // namespace rnncnn
