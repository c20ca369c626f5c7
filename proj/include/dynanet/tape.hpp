#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "dynanet/tensor.hpp"

namespace dynanet {

template <class Scalar>
class Tape;

using NodeId = std::size_t;

// Handle to a value recorded on a tape.
template <class Scalar>
class Var {
 public:
  using scalar_type = Scalar;

  Var() = default;
  Var(Tape<Scalar>* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  NodeId id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<Scalar>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  Scalar item() const { return value().item(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  NodeId id_ = 0;
};

// Gradients produced by one backward pass, keyed by node id.
template <class Scalar>
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<Tensor<Scalar>> grads, std::vector<Shape> shapes)
      : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  bool has(NodeId id) const { return id < grads_.size() && !grads_[id].empty(); }

  // Gradient for `id`; zeros of the node's shape when no path reached it.
  Tensor<Scalar> operator[](NodeId id) const {
    if (has(id)) return grads_[id];
    return Tensor<Scalar>::zeros(shapes_.at(id));
  }
  Tensor<Scalar> operator[](const Var<Scalar>& v) const { return (*this)[v.id()]; }

  // Moves a gradient out without a copy. Returns an empty tensor when absent.
  Tensor<Scalar> take(NodeId id) {
    if (!has(id)) return {};
    return std::move(grads_[id]);
  }

 private:
  std::vector<Tensor<Scalar>> grads_;
  std::vector<Shape> shapes_;
};

// Define-by-run record of operations. Node ids follow creation order, so
// every node's inputs precede it and reverse id order is a valid reverse
// topological order. A tape belongs to a single thread.
template <class Scalar>
class Tape {
 public:
  // Receives the node's accumulated output gradient and pushes gradients
  // into its inputs through `accumulate`.
  using BackwardFn = std::function<void(Tape&, const Tensor<Scalar>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> leaf(Tensor<Scalar> value, bool requires_grad = true) {
    return push(std::move(value), requires_grad, nullptr);
  }

  Var<Scalar> constant(Tensor<Scalar> value) { return push(std::move(value), false, nullptr); }

  // Records an op output. The node requires grad iff any input does; the
  // backward function is dropped otherwise.
  Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      if (!in.valid() || &in.tape() != this) throw UsageError("op input belongs to a different tape");
      needs = needs || requires_grad(in.id());
    }
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  const Tensor<Scalar>& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Adds `g` into the gradient buffer of `target` (no-op for nodes without grad).
  template <class Derived>
  void accumulate(const Var<Scalar>& target, const Eigen::DenseBase<Derived>& g) {
    const NodeId id = target.id();
    if (!nodes_[id].requires_grad) return;
    Tensor<Scalar>& buf = grads_[id];
    if (buf.empty()) {
      buf = Tensor<Scalar>(nodes_[id].value.shape(), Vec<Scalar>(g.derived().matrix()));
    } else {
      buf.data() += g.derived().matrix();
    }
  }

  void accumulate(const Var<Scalar>& target, const Tensor<Scalar>& g) { accumulate(target, g.data()); }

  // Reverse sweep from a scalar output; each node is visited once.
  Gradients<Scalar> backward(const Var<Scalar>& output) {
    if (output.value().size() != 1) {
      throw UsageError("backward requires a scalar output, got shape " + shape_string(output.shape()));
    }
    grads_.assign(nodes_.size(), Tensor<Scalar>{});
    if (nodes_[output.id()].requires_grad) {
      grads_[output.id()] = Tensor<Scalar>::constant(output.shape(), Scalar(1));
    }
    for (NodeId i = output.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.backward || grads_[i].empty()) continue;
      node.backward(*this, grads_[i]);
    }
    std::vector<Shape> shapes;
    shapes.reserve(nodes_.size());
    for (const auto& n : nodes_) shapes.push_back(n.value.shape());
    return Gradients<Scalar>(std::move(grads_), std::move(shapes));
  }

 private:
  struct Node {
    Tensor<Scalar> value;
    bool requires_grad;
    BackwardFn backward;
  };

  Var<Scalar> push(Tensor<Scalar> value, bool requires_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), requires_grad, std::move(backward)});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  // deque keeps value references stable while new nodes are appended.
  std::deque<Node> nodes_;
  std::vector<Tensor<Scalar>> grads_;
};

}  // namespace dynanet
