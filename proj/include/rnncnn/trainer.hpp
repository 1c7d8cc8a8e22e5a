#pragma once

#include <functional>
#include <iosfwd>
#include <string>

#include "rnncnn/checkpoint.hpp"
#include "rnncnn/decoder.hpp"

namespace rnncnn {

// Fresh state: vocab_size is taken from `vocab`, weights are drawn from
// config.seed, and the embedding rows of words found in config.pretrained
// (if set) are overwritten with their pretrained vectors.
TrainState init_train_state(TrainConfig config, Vocabulary vocab);

// Generator for the decoder's input sampling at global step `step`.
Rng step_rng(std::uint64_t seed, std::uint64_t step);

// One forward/backward pass and Adam update over every trainable tensor.
// Returns the loss before the update. A non-finite loss raises NumericError
// naming `batch_index` and leaves the parameters untouched.
double train_step(TrainState& state, const Batch& batch,
                  std::uint64_t batch_index);

struct TrainOptions {
  std::ostream* loss_log = nullptr;  // "step<TAB>loss" per step
  std::string checkpoint_path;       // empty: no checkpoints
  std::function<void(std::uint64_t step, double loss)> on_step;
};

// Continues from state.step until state.config.steps. Step s uses batch
// s mod B of epoch s / B, where B is the number of batches per epoch, so an
// interrupted run resumed from its checkpoint replays the same sequence.
// Checkpoints every config.checkpoint_every steps and once at the end.
void train(TrainState& state, const std::vector<TrainingPair>& pairs,
           const TrainOptions& options = {});

// Training pairs for `corpus_path` under `config`.
std::vector<TrainingPair> load_training_pairs(const std::string& corpus_path,
                                              const Vocabulary& vocab,
                                              const ModelConfig& config);

}  // namespace rnncnn
