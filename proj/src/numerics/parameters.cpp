// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/numerics/parameters.hpp"

#include "echomoe/errors.hpp"

namespace echomoe {

ParamId ParameterStore::add(std::string name, Tensor value, bool frozen) {
  if (by_name_.contains(name)) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  const ParamId id = params_.size();
  by_name_.emplace(name, id);
  params_.push_back(Parameter{std::move(name), std::move(value), frozen});
  return id;
}

std::optional<ParamId> ParameterStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

ParamId ParameterStore::id_of(const std::string& name) const {
  auto id = find(name);
  if (!id) throw ConfigError("unknown parameter '" + name + "'");
  return *id;
}

std::size_t ParameterStore::trainable_scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (!p.frozen) n += p.value.size();
  return n;
}

}  // namespace echomoe
