#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "rnncnn/errors.hpp"

namespace rnncnn {

using Dims = std::vector<std::size_t>;

inline std::size_t num_elements(const Dims& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

std::string dims_to_string(const Dims& dims);

// 64-byte aligned storage. Eigen peels unaligned leading elements before its
// vector loops, so with plain malloc alignment the summation order (and the
// last bits of results) would depend on where the heap placed a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Dense row-major array with an optional gradient buffer of the same shape.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Dims dims, T fill = T(0))
      : dims_(std::move(dims)), data_(num_elements(dims_), fill) {
    check_dims();
  }
  Tensor(Dims dims, const std::vector<T>& data)
      : dims_(std::move(dims)), data_(data.begin(), data.end()) {
    check_dims();
    if (data_.size() != num_elements(dims_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims " + dims_to_string(dims_));
    }
  }

  const Dims& dims() const { return dims_; }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool has_grad() const { return !grad_.empty(); }
  // Allocates a zero gradient on first use.
  std::span<T> grad() {
    if (grad_.empty()) grad_.assign(data_.size(), T(0));
    return grad_;
  }
  std::span<const T> grad() const { return grad_; }
  void zero_grad() {
    if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), T(0));
  }
  void drop_grad() { grad_.clear(); grad_.shrink_to_fit(); }

  // Same storage, new shape.
  void reshape(Dims dims) {
    if (num_elements(dims) != data_.size()) {
      throw ShapeError("cannot reshape " + dims_to_string(dims_) + " to " +
                       dims_to_string(dims));
    }
    dims_ = std::move(dims);
  }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(dims_, std::vector<U>(data_.begin(), data_.end()));
  }

 private:
  void check_dims() const {
    for (std::size_t d : dims_) {
      if (d == 0) {
        throw ShapeError("tensor dims must be positive, got " +
                         dims_to_string(dims_));
      }
    }
  }

  Dims dims_;
  AlignedVector<T> data_;
  AlignedVector<T> grad_;
};

}  // namespace rnncnn
