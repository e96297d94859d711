// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "hafx/autodiff.hpp"

namespace hafx {

/// Builds a scalar loss on `tape` from the given input variables.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> inputs)>;

/// Compares reverse-mode gradients of `f` against central differences.
/// Returns max over all input elements of
///   |analytic - numeric| / (|numeric| + 1e-8).
double finite_diff_check(const ScalarFn& f, std::span<const Tensor> inputs, double step);

/// Single-input convenience overload.
double finite_diff_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x,
                         double step);

}  // namespace hafx
