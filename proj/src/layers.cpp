#include "rnncnn/layers.hpp"

#include <string>

namespace rnncnn {

template <typename T>
GruCellParams<T> GruCellParams<T>::zeros(std::size_t input,
                                         std::size_t hidden) {
  GruCellParams p;
  p.w_z = p.w_r = p.w_h = Tensor<T>({hidden, input});
  p.u_z = p.u_r = p.u_h = Tensor<T>({hidden, hidden});
  p.b_z = p.b_r = p.b_h = Tensor<T>({hidden});
  return p;
}

template <typename T>
op::GruVars GruCellParams<T>::bind(Tape<T>& tape, bool requires_grad) {
  return op::GruVars{tape.param(w_z, requires_grad),
                     tape.param(w_r, requires_grad),
                     tape.param(w_h, requires_grad),
                     tape.param(u_z, requires_grad),
                     tape.param(u_r, requires_grad),
                     tape.param(u_h, requires_grad),
                     tape.param(b_z, requires_grad),
                     tape.param(b_r, requires_grad),
                     tape.param(b_h, requires_grad)};
}

template <typename T>
std::vector<T> gru_cell(std::span<const T> x, std::span<const T> h_prev,
                        GruCellParams<T>& params) {
  if (x.size() != params.input_dim() || h_prev.size() != params.hidden_dim()) {
    throw ShapeError("gru_cell expects input " +
                     std::to_string(params.input_dim()) + " and state " +
                     std::to_string(params.hidden_dim()) + ", got " +
                     std::to_string(x.size()) + " and " +
                     std::to_string(h_prev.size()));
  }
  Tape<T> tape;
  const op::GruVars vars = params.bind(tape, false);
  Var xv = tape.constant(Tensor<T>({1, x.size()}, {x.begin(), x.end()}));
  Var hv = tape.constant(
      Tensor<T>({1, h_prev.size()}, {h_prev.begin(), h_prev.end()}));
  const Tensor<T>& out = tape.value(op::gru_step(tape, xv, hv, vars));
  return {out.data().begin(), out.data().end()};
}

template <typename T>
Tensor<T> conv1d_same(const Tensor<T>& input, const Tensor<T>& kernel,
                      const Tensor<T>& bias) {
  if (input.rank() != 2) throw ShapeError("conv1d_same input must be C x L");
  const std::size_t c_in = input.dim(0);
  const std::size_t len = input.dim(1);
  Tensor<T> transposed({1, len, c_in});
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t i = 0; i < len; ++i) {
      transposed[i * c_in + c] = input[c * len + i];
    }
  }
  Tape<T> tape;
  Tensor<T> k = kernel;
  Tensor<T> b = bias;
  Var x = tape.constant(std::move(transposed));
  Var y = op::conv1d(tape, x, tape.param(k, false), tape.param(b, false),
                     op::ConvPadding::kSame);
  const Tensor<T>& out = tape.value(y);
  const std::size_t c_out = out.dim(2);
  Tensor<T> result({c_out, len});
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t c = 0; c < c_out; ++c) {
      result[c * len + i] = out[i * c_out + c];
    }
  }
  return result;
}

template <typename T>
SoftmaxXent<T> softmax_xent(std::span<const T> logits, std::int32_t target) {
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw IndexError("target id " + std::to_string(target) +
                     " outside vocabulary of size " +
                     std::to_string(logits.size()));
  }
  Tape<T> tape;
  Var lv = tape.constant(
      Tensor<T>({1, logits.size()}, {logits.begin(), logits.end()}));
  const std::int32_t targets[] = {target};
  const T loss = tape.value(op::softmax_xent<T>(tape, lv, targets))[0];
  std::vector<T> probs(logits.size());
  op::softmax_rows<T>(logits, logits.size(), probs);
  return {loss, std::move(probs)};
}

template struct GruCellParams<float>;
template struct GruCellParams<double>;
template std::vector<float> gru_cell(std::span<const float>,
                                     std::span<const float>,
                                     GruCellParams<float>&);
template std::vector<double> gru_cell(std::span<const double>,
                                      std::span<const double>,
                                      GruCellParams<double>&);
template Tensor<float> conv1d_same(const Tensor<float>&, const Tensor<float>&,
                                   const Tensor<float>&);
template Tensor<double> conv1d_same(const Tensor<double>&,
                                    const Tensor<double>&,
                                    const Tensor<double>&);
template SoftmaxXent<float> softmax_xent(std::span<const float>, std::int32_t);
template SoftmaxXent<double> softmax_xent(std::span<const double>,
                                          std::int32_t);

}  // namespace rnncnn
