// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/numerics/tape.hpp"

#include "echomoe/errors.hpp"

namespace echomoe {

const Tensor* Gradients::param(ParamId id) const {
  auto it = params_.find(id);
  return it == params_.end() ? nullptr : &it->second;
}

const Tensor& Gradients::wrt(Var v) const {
  if (v.id() >= nodes_.size() || !nodes_[v.id()]) {
    throw ContractError("no gradient recorded for tape node " +
                        std::to_string(v.id()));
  }
  return *nodes_[v.id()];
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false, std::nullopt});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, grad_enabled_, std::nullopt});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const ParameterStore& store, ParamId id) {
  const auto key = std::make_pair(&store, id);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  const Parameter& p = store.at(id);
  nodes_.push_back(Node{p.value, {}, nullptr, grad_enabled_ && !p.frozen, id});
  param_nodes_.emplace(key, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  bool needs = false;
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw ContractError("op mixes vars from different tapes");
    node.inputs.push_back(v.id());
    needs = needs || nodes_[v.id()].requires_grad;
  }
  node.requires_grad = grad_enabled_ && needs;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var loss) {
  if (!grad_enabled_) throw ContractError("backward() on a tape with gradients disabled");
  if (&loss.tape() != this) throw ContractError("loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        to_string(loss.shape()));
  }

  std::vector<std::optional<Tensor>> grads(nodes_.size());
  grads[loss.id()] = Tensor(loss.shape(), 1.0);

  std::vector<Tensor*> input_grads;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!grads[i] || !node.backward) continue;
    input_grads.assign(node.inputs.size(), nullptr);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const std::size_t in = node.inputs[j];
      if (!nodes_[in].requires_grad) continue;
      if (!grads[in]) grads[in] = Tensor(nodes_[in].value.shape());
      input_grads[j] = &*grads[in];
    }
    node.backward(*grads[i], input_grads);
  }

  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    if (!node.param || !node.requires_grad || !grads[i]) continue;
    auto [it, inserted] = out.params_.emplace(*node.param, *grads[i]);
    if (!inserted) add_into(it->second, *grads[i]);
  }
  out.nodes_ = std::move(grads);
  return out;
}

}  // namespace echomoe
