#pragma once

#include <functional>

#include "condensor/tensor.hpp"

namespace condensor {

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate of x.
// f must return a scalar and be deterministic; it is evaluated without a tape.
Tensor finite_difference_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h);

// Largest |a_i - b_i| / max(|a_i|, |b_i|, floor) where floor = floor_frac * max_j max(|a_j|, |b_j|).
// The floor keeps coordinates that are zero up to rounding from dominating.
double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor_frac = 1e-3);

}  // namespace condensor
