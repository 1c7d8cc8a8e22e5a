#pragma once

#include "rnncnn/corpus.hpp"
#include "rnncnn/model.hpp"

namespace rnncnn {

// Bi-directional GRU over the true tokens of each row, both directions
// starting from a zero state. Returns B x L x 2*d_h_dir where position m holds
// [forward h^m ; backward h^m]; positions past a row's length are zero.
template <typename T>
Var bigru_forward(const BoundModel<T>& m, const Batch& batch);

// [mean over valid positions ; max over valid positions] -> B x 2C.
template <typename T>
Var mean_max_pool(Tape<T>& tape, Var states,
                  std::span<const std::int32_t> lengths);

// Max over valid positions only -> B x C.
template <typename T>
Var max_only_pool(Tape<T>& tape, Var states,
                  std::span<const std::int32_t> lengths);

// Four same-padded width-3 convolutions with tanh, each globally max-pooled
// over valid positions; the pooled vectors are concatenated.
template <typename T>
Var cnn_encoder_forward(const BoundModel<T>& m, const Batch& batch);

// Sentence representations (B x repr_dim) for the configured encoder/pooling.
template <typename T>
Var encode(const BoundModel<T>& m, const Batch& batch);

// Inference helper: representations for every row of `batch`.
template <typename T>
Tensor<T> encode_batch(Model<T>& model, const Batch& batch);

}  // namespace rnncnn
