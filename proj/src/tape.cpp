#include "mixbench/tape.hpp"

#include <algorithm>
#include <stdexcept>

namespace mixbench {

template <typename Real>
Var<Real> Tape<Real>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<Real>(this, nodes_.size() - 1);
}

template <typename Real>
Var<Real> Tape<Real>::constant(Tensor<Real> value) {
  Node node;
  node.owned = std::move(value);
  return push(std::move(node));
}

template <typename Real>
Var<Real> Tape<Real>::leaf(Tensor<Real>& bound, bool requires_grad) {
  Node node;
  node.bound = &bound;
  node.requires_grad = requires_grad;
  return push(std::move(node));
}

template <typename Real>
Var<Real> Tape<Real>::record(Tensor<Real> value, std::initializer_list<Var<Real>> inputs,
                             BackwardFn backward) {
  return record(std::move(value), std::vector<Var<Real>>(inputs), std::move(backward));
}

template <typename Real>
Var<Real> Tape<Real>::record(Tensor<Real> value, const std::vector<Var<Real>>& inputs,
                             BackwardFn backward) {
  Node node;
  node.owned = std::move(value);
  for (const auto& in : inputs) {
    if (&in.tape() != this || in.id() >= nodes_.size()) {
      throw std::logic_error("operation input does not belong to this tape");
    }
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

template <typename Real>
const Tensor<Real>& Tape<Real>::value(std::size_t id) const {
  const Node& node = nodes_[id];
  return node.bound ? *node.bound : *node.owned;
}

template <typename Real>
std::span<Real> Tape<Real>::accumulator(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad.assign(value(id).numel(), Real(0));
  return node.grad;
}

template <typename Real>
void Tape<Real>::backward(const Var<Real>& loss) {
  if (&loss.tape() != this) throw std::logic_error("loss is not on this tape");
  if (value(loss.id()).numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     shape_string(value(loss.id()).shape()));
  }
  for (auto& node : nodes_) node.grad.clear();
  if (!nodes_[loss.id()].requires_grad) return;
  accumulator(loss.id())[0] = Real(1);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty() || !node.requires_grad) continue;
    if (node.backward) node.backward(*this, i);
    if (node.bound) {
      auto dst = node.bound->grad();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += node.grad[j];
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace mixbench
