#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rnncnn/tape.hpp"

// Differentiable primitives recorded on a Tape. Batched tensors are row-major
// with the batch axis first; sequences are laid out B x L x C (channels last).
namespace rnncnn::op {

// Rows of `table` (V x D) selected by `ids`; result dims are `out_dims`, whose
// product must equal ids.size() * D.
template <typename T>
Var embed(Tape<T>& tape, Var table, std::span<const std::int32_t> ids,
          Dims out_dims);

// y = x W^T + b over the last axis of x. `bias` may be an invalid Var.
template <typename T>
Var affine(Tape<T>& tape, Var x, Var weight, Var bias);

struct GruVars {
  Var w_z, w_r, w_h;
  Var u_z, u_r, u_h;
  Var b_z, b_r, b_h;
};

// One batched GRU step:
//   z = sigmoid(W_z x + U_z h + b_z), r = sigmoid(W_r x + U_r h + b_r)
//   c = tanh(W_h x + U_h (r * h) + b_h), h' = (1 - z) * h + z * c
// Rows with active[b] == 0 pass h through unchanged. An empty `active` means
// every row is active.
template <typename T>
Var gru_step(Tape<T>& tape, Var x, Var h, const GruVars& p,
             std::span<const std::uint8_t> active = {});

enum class ConvPadding { kSame, kCausal };

// Width-3, stride-1 convolution over x (B x L x Cin) with kernel
// (Cout x Cin x 3) and bias (Cout). kSame reads positions i-1, i, i+1;
// kCausal reads i-2, i-1, i. Out-of-range positions read as zero.
template <typename T>
Var conv1d(Tape<T>& tape, Var x, Var kernel, Var bias, ConvPadding padding);

template <typename T>
Var tanh(Tape<T>& tape, Var x);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);

template <typename T>
Var sum(Tape<T>& tape, Var x);

template <typename T>
Var reshape(Tape<T>& tape, Var x, Dims dims);

// Concatenation along the last axis; leading dims must agree.
template <typename T>
Var concat_last(Tape<T>& tape, Var a, Var b);

// Stacks B x C steps into B x L x C.
template <typename T>
Var stack_steps(Tape<T>& tape, const std::vector<Var>& steps);

// Slice x[:, t, :] of a B x L x C tensor.
template <typename T>
Var select_step(Tape<T>& tape, Var x, std::size_t t);

// For each row b reverses positions [0, lengths[b]) of a B x L x C tensor;
// positions past the length are zeroed.
template <typename T>
Var reverse_within_length(Tape<T>& tape, Var x,
                          std::span<const std::int32_t> lengths);

// Zeroes positions >= lengths[b] of a B x L x C tensor.
template <typename T>
Var zero_invalid(Tape<T>& tape, Var x, std::span<const std::int32_t> lengths);

// Mean / max over the first lengths[b] positions of B x L x C -> B x C.
// Throws EmptySentenceError when a length is < 1.
template <typename T>
Var masked_mean(Tape<T>& tape, Var x, std::span<const std::int32_t> lengths);

template <typename T>
Var masked_max(Tape<T>& tape, Var x, std::span<const std::int32_t> lengths);

// scale * sum_r -log softmax(logits[r])[targets[r]] over rows of an R x V
// logit matrix. Returns a scalar.
template <typename T>
Var softmax_xent(Tape<T>& tape, Var logits,
                 std::span<const std::int32_t> targets, T scale = T(1));

// Row-wise softmax with max subtraction, no recording.
template <typename T>
void softmax_rows(std::span<const T> logits, std::size_t cols,
                  std::span<T> probs);

}  // namespace rnncnn::op
