// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "echomoe/numerics/parameters.hpp"
#include "echomoe/numerics/rng.hpp"
#include "echomoe/numerics/tape.hpp"

namespace echomoe::moe {

/// Two-matrix feed-forward block: silu(x·W_inᵀ + b_in)·W_outᵀ + b_out.
/// W_in is hidden×D and W_out is D×hidden.
struct FfnWeights {
  ParamId w_in = 0;
  ParamId b_in = 0;
  ParamId w_out = 0;
  ParamId b_out = 0;
};

FfnWeights add_ffn(ParameterStore& store, const std::string& prefix, std::size_t d_model,
                   std::size_t hidden, SplitMix64& rng, bool frozen);

Var ffn_forward(Tape& tape, const ParameterStore& store, const FfnWeights& w, Var x);

/// Overwrites `w` so that the block computes the identity map exactly in real
/// arithmetic: hidden width 2D, W_in = [I; -I], W_out = [I, -I], using
/// silu(x) - silu(-x) = x.
void make_identity_ffn(ParameterStore& store, const FfnWeights& w);

}  // namespace echomoe::moe
