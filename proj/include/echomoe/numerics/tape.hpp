// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "echomoe/numerics/parameters.hpp"
#include "echomoe/numerics/tensor.hpp"

namespace echomoe {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Called during the reverse sweep with the node's output gradient. Entry i of
/// `input_grads` accumulates into input i, or is null when input i does not
/// require a gradient.
using BackwardFn =
    std::function<void(const Tensor& grad_out, std::span<Tensor* const> input_grads)>;

/// Result of a reverse sweep.
class Gradients {
 public:
  /// Gradient of a parameter, absent when the parameter is frozen or was
  /// never touched by the loss.
  const Tensor* param(ParamId id) const;
  /// Gradient of a tape variable created with Tape::variable().
  const Tensor& wrt(Var v) const;

  const std::map<ParamId, Tensor>& params() const { return params_; }

 private:
  friend class Tape;
  std::map<ParamId, Tensor> params_;
  std::vector<std::optional<Tensor>> nodes_;
};

/// Reverse-mode gradient tape. Nodes are appended in execution order, which
/// is a topological order; backward() walks it in reverse exactly once.
/// Confined to one thread.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor value);
  /// Differentiable leaf not backed by a parameter.
  Var variable(Tensor value);
  /// Leaf bound to a stored parameter. Frozen parameters are recorded as
  /// constants. Repeated calls return the same node.
  Var parameter(const ParameterStore& store, ParamId id);

  /// Appends an op node. `backward` is dropped when no input needs a gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  Gradients backward(Var loss);

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::optional<ParamId> param;
  };

  bool grad_enabled_;
  std::deque<Node> nodes_;
  std::map<std::pair<const ParameterStore*, ParamId>, std::size_t> param_nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace echomoe
