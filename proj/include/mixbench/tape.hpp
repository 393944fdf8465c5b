#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

#include "mixbench/tensor.hpp"

namespace mixbench {

template <typename Real>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// tape is alive. References returned by value() survive later recordings.
template <typename Real>
class Var {
 public:
  Var() = default;
  Var(Tape<Real>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<Real>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor<Real>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<Real>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Operations are appended in execution order, so every
// node's inputs precede it; backward() walks the list once in reverse.
// A tape belongs to a single thread.
template <typename Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Owned value that never receives gradient.
  Var<Real> constant(Tensor<Real> value);

  // Binds an external tensor (a parameter or an input under attack). The
  // tensor must outlive the tape; backward() accumulates into its grad().
  Var<Real> leaf(Tensor<Real>& bound, bool requires_grad = true);

  // Appends an operation result. `backward` reads this node's output gradient
  // and accumulates into its inputs; it only runs when the node requires grad.
  Var<Real> record(Tensor<Real> value, std::initializer_list<Var<Real>> inputs, BackwardFn backward);
  Var<Real> record(Tensor<Real> value, const std::vector<Var<Real>>& inputs, BackwardFn backward);

  const Tensor<Real>& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient of the loss w.r.t. node `id` (valid inside backward rules).
  std::span<const Real> grad(std::size_t id) const { return nodes_[id].grad; }

  // Zero-initialized accumulation buffer for an input's gradient.
  std::span<Real> accumulator(std::size_t id);

  // Populates grad() of every bound leaf reachable from `loss`. Calling it
  // twice accumulates twice into the bound tensors.
  void backward(const Var<Real>& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::optional<Tensor<Real>> owned;
    Tensor<Real>* bound = nullptr;
    std::vector<Real> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<Real> push(Node node);

  std::deque<Node> nodes_;  // deque: values stay put while the tape grows
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace mixbench
