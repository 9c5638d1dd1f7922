// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "echomoe/numerics/tensor.hpp"

namespace echomoe {

using ParamId = std::size_t;

struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;
};

/// Ordered, name-indexed collection of model parameters. Ids are stable
/// insertion indices so modules can hold them by value.
class ParameterStore {
 public:
  ParamId add(std::string name, Tensor value, bool frozen = false);

  Parameter& at(ParamId id) { return params_.at(id); }
  const Parameter& at(ParamId id) const { return params_.at(id); }
  const Tensor& value(ParamId id) const { return params_.at(id).value; }
  bool frozen(ParamId id) const { return params_.at(id).frozen; }

  std::optional<ParamId> find(const std::string& name) const;
  ParamId id_of(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  std::size_t trainable_scalar_count() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, ParamId> by_name_;
};

}  // namespace echomoe
