#pragma once

#include <random>

#include "rnncnn/corpus.hpp"
#include "rnncnn/model.hpp"

namespace rnncnn {

using Rng = std::mt19937_64;

template <typename T>
struct Decoded {
  Var features;                  // U: B x N x d_e
  std::vector<TokenId> fed_ids;  // AR only: B x N input ids, column 0 = SOS
};

// z (B x repr) -> B x N x c1 with an independent affine map per position.
template <typename T>
Var linear_expand(const BoundModel<T>& m, Var z);

template <typename T>
Var paw_cnn_decode(const BoundModel<T>& m, Var z);

template <typename T>
Var paw_rnn_decode(const BoundModel<T>& m, Var z);

// `targets` is B x N row-major. Sampling modes draw from `rng`, in order of
// time step then batch row; teacher forcing never touches it.
template <typename T>
Decoded<T> ar_rnn_decode(const BoundModel<T>& m, Var z,
                         std::span<const TokenId> targets, Rng* rng);

template <typename T>
Decoded<T> ar_cnn_decode(const BoundModel<T>& m, Var z,
                         std::span<const TokenId> targets, Rng* rng);

// Dispatches on the configured decoder kind.
template <typename T>
Decoded<T> decode(const BoundModel<T>& m, Var z,
                  std::span<const TokenId> targets, Rng* rng);

// Logits E u^n for every position: (B*N) x |V|.
template <typename T>
Var predict_logits(Tape<T>& tape, Var features, Var embedding);

// (1 / batch_size) * sum over rows of -log p(target).
template <typename T>
Var sequence_nll(Tape<T>& tape, Var logits, std::span<const TokenId> targets,
                 std::size_t batch_size);

// Full objective for one batch: encode, decode, predict, sequence NLL.
template <typename T>
Var model_loss(const BoundModel<T>& m, const Batch& batch, Rng* rng);

}  // namespace rnncnn
