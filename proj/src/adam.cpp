#include "rnncnn/adam.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

namespace rnncnn {

template <typename T>
void adam_step(Tensor<T>& param, std::span<const T> grad, AdamState<T>& state,
               const AdamOptions& options, std::string_view name) {
  if (grad.size() != param.size() || state.m.dims() != param.dims() ||
      state.v.dims() != param.dims()) {
    throw ShapeError("adam state for '" + std::string(name) +
                     "' does not match parameter dims " +
                     dims_to_string(param.dims()));
  }
  using Array = Eigen::Array<T, Eigen::Dynamic, 1>;
  const Eigen::Map<const Array> g(grad.data(), static_cast<Eigen::Index>(grad.size()));
  if (!g.allFinite()) {
    std::size_t i = 0;
    while (std::isfinite(grad[i])) ++i;
    throw NumericError("non-finite gradient in parameter '" +
                       std::string(name) + "' at index " + std::to_string(i));
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const T b1 = static_cast<T>(options.beta1);
  const T b2 = static_cast<T>(options.beta2);
  const T corr1 = static_cast<T>(1.0 - std::pow(options.beta1, t));
  const T corr2 = static_cast<T>(1.0 - std::pow(options.beta2, t));
  const T lr = static_cast<T>(options.lr);
  const T eps = static_cast<T>(options.eps);
  const auto n = static_cast<Eigen::Index>(grad.size());
  Eigen::Map<Array> p(param.ptr(), n);
  Eigen::Map<Array> m(state.m.ptr(), n);
  Eigen::Map<Array> v(state.v.ptr(), n);
  m = b1 * m + (T(1) - b1) * g;
  v = b2 * v + (T(1) - b2) * g * g;
  p -= lr * (m / corr1) / ((v / corr2).sqrt() + eps);
}

template void adam_step(Tensor<float>&, std::span<const float>,
                        AdamState<float>&, const AdamOptions&,
                        std::string_view);
template void adam_step(Tensor<double>&, std::span<const double>,
                        AdamState<double>&, const AdamOptions&,
                        std::string_view);

}  // namespace rnncnn
