#pragma once

#include <cstdint>
#include <string_view>

#include "rnncnn/tensor.hpp"

namespace rnncnn {

struct AdamOptions {
  double lr = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::int64_t step_count = 0;
  Tensor<T> m;
  Tensor<T> v;

  explicit AdamState(const Dims& dims) : m(dims), v(dims) {}
};

// Bias-corrected Adam update of `param` in place. Throws NumericError naming
// `name` if `grad` holds a non-finite entry; the parameter is left untouched
// in that case.
template <typename T>
void adam_step(Tensor<T>& param, std::span<const T> grad, AdamState<T>& state,
               const AdamOptions& options, std::string_view name = "param");

}  // namespace rnncnn
