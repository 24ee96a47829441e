#pragma once

#include <functional>
#include <vector>

#include "robarch/tensor.hpp"

namespace robarch {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_leaf = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares backward() gradients of the scalar f(x) with central differences
/// (f(x + h e) - f(x - h e)) / 2h. Returns max |a - n| / max(|a|, |n|, 1e-8).
/// Callers must keep x away from nondifferentiable points (ReLU at 0,
/// max-pool ties).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

/// Same check over tensors captured by `f` (typically parameters). Their
/// values are perturbed in place and restored; their gradients are zeroed.
GradCheckReport grad_check_leaves(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double h = 1e-5);

}  // namespace robarch
