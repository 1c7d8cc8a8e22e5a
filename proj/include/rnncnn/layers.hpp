#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rnncnn/ops.hpp"

// Unbatched entry points to the learned-layer primitives. They record onto a
// private tape and share the batched kernels in ops.hpp.
namespace rnncnn {

template <typename T>
struct GruCellParams {
  Tensor<T> w_z, w_r, w_h;  // hidden x input
  Tensor<T> u_z, u_r, u_h;  // hidden x hidden
  Tensor<T> b_z, b_r, b_h;  // hidden

  static GruCellParams zeros(std::size_t input, std::size_t hidden);

  std::size_t input_dim() const { return w_z.dim(1); }
  std::size_t hidden_dim() const { return w_z.dim(0); }

  // Registers all nine tensors on `tape` as parameter leaves.
  op::GruVars bind(Tape<T>& tape, bool requires_grad = true);
};

template <typename T>
std::vector<T> gru_cell(std::span<const T> x, std::span<const T> h_prev,
                        GruCellParams<T>& params);

// input: C_in x L, kernel: C_out x C_in x 3, bias: C_out. Returns C_out x L.
template <typename T>
Tensor<T> conv1d_same(const Tensor<T>& input, const Tensor<T>& kernel,
                      const Tensor<T>& bias);

template <typename T>
struct SoftmaxXent {
  T loss;
  std::vector<T> probabilities;
};

template <typename T>
SoftmaxXent<T> softmax_xent(std::span<const T> logits, std::int32_t target);

}  // namespace rnncnn
