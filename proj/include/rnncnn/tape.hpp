#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

#include "rnncnn/tensor.hpp"

namespace rnncnn {

// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode record of one forward computation. Values live on the tape;
// parameter leaves reference external tensors so their gradients accumulate
// in place. Nodes are appended in evaluation order, so reverse insertion
// order is a valid topological order for the backward sweep.
template <typename T>
class Tape {
 public:
  // Receives the tape and the handle of the node being differentiated.
  using BackwardFn = std::function<void(Tape&, Var)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var param(Tensor<T>& tensor, bool requires_grad = true) {
    Node node;
    node.external = &tensor;
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var constant(Tensor<T> value) {
    Node node;
    node.owned = std::move(value);
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  // `backward` is stored only when some input needs a gradient.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs,
             BackwardFn backward) {
    return record(std::move(value), std::vector<Var>(inputs),
                  std::move(backward));
  }

  Var record(Tensor<T> value, const std::vector<Var>& inputs,
             BackwardFn backward) {
    const int id = static_cast<int>(nodes_.size());
    Node node;
    node.owned = std::move(value);
    for (Var in : inputs) {
      if (in.id < 0 || in.id >= id) {
        throw InternalError("computation record refers to node " +
                            std::to_string(in.id) + " from node " +
                            std::to_string(id) + " (cycle or stale handle)");
      }
      node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{id};
  }

  const Tensor<T>& value(Var v) const { return at(v).tensor(); }
  const Dims& dims(Var v) const { return value(v).dims(); }
  bool requires_grad(Var v) const { return at(v).requires_grad; }

  // Gradient buffer of `v`, zero-initialized on first access.
  std::span<T> grad(Var v) { return at(v).tensor().grad(); }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and sweeps the record in reverse. Parameter
  // gradients are accumulated, never overwritten.
  void backward(Var root) {
    if (value(root).size() != 1) {
      throw ShapeError("backward root must be a scalar, got dims " +
                       dims_to_string(dims(root)));
    }
    if (!requires_grad(root)) return;
    grad(root)[0] += T(1);
    for (int id = root.id; id >= 0; --id) {
      Node& node = nodes_[id];
      if (!node.backward || !node.owned.has_grad()) continue;
      node.backward(*this, Var{id});
    }
  }

 private:
  struct Node {
    Tensor<T> owned;
    Tensor<T>* external = nullptr;
    bool requires_grad = false;
    BackwardFn backward;

    Tensor<T>& tensor() { return external ? *external : owned; }
    const Tensor<T>& tensor() const { return external ? *external : owned; }
  };

  Node& at(Var v) {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
      throw InternalError("invalid tape handle " + std::to_string(v.id));
    }
    return nodes_[v.id];
  }
  const Node& at(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
      throw InternalError("invalid tape handle " + std::to_string(v.id));
    }
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
};

}  // namespace rnncnn
