#include "lorafit/tape.hpp"

#include <string>

#include "lorafit/error.hpp"

namespace lorafit::ad {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("access through an empty Var");
  return tape_->nodes_.at(id_).value;
}

const Tensor& Var::grad() const {
  if (!tape_) throw ContractError("access through an empty Var");
  return tape_->grad_of(id_);
}

bool Var::requires_grad() const {
  if (!tape_) throw ContractError("access through an empty Var");
  return tape_->nodes_.at(id_).requires_grad;
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::Constant, {}, std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{OpKind::Variable, {}, std::move(value), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(const Var& v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw ContractError("Var does not belong to this tape");
  }
}

Var Tape::record(OpKind kind, std::span<const Var> inputs, Tensor value, BackwardFn backward) {
  Node node{kind, {}, std::move(value), {}, false, {}};
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad_of(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  check_owned(loss);
  if (nodes_[loss.id_].value.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        to_string(nodes_[loss.id_].value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();

  std::vector<bool> reached(loss.id_ + 1, false);
  reached[loss.id_] = true;
  nodes_[loss.id_].grad = Tensor::filled(nodes_[loss.id_].value.shape(), 1.0);

  BackwardContext ctx;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!reached[id] || !node.requires_grad || !node.backward) continue;
    ctx.out_grad_ = &node.grad;
    ctx.output_ = &node.value;
    ctx.inputs_.assign(node.inputs.size(), nullptr);
    ctx.input_grads_.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      Node& in = nodes_[node.inputs[k]];
      ctx.inputs_[k] = &in.value;
      if (in.requires_grad) {
        if (in.grad.empty()) in.grad = Tensor::zeros(in.value.shape());
        ctx.input_grads_[k] = &in.grad;
        reached[node.inputs[k]] = true;
      }
    }
    node.backward(ctx);
  }
}

}  // namespace lorafit::ad
