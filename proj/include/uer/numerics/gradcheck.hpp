#pragma once

#include <functional>
#include <span>

#include "uer/numerics/tensor.hpp"

namespace uer {

// Compares the taped gradient of op(input) against central differences with
// step h. Non-scalar outputs are reduced by summation. Returns the maximum
// over coordinates of |analytic - numeric| / max(|analytic|, 1e-8).
double finite_difference_check(const std::function<Tensor(const Tensor&)>& op, const Tensor& input,
                               double h = 1e-5);

// Same measure for a closure that reads the tensors in `wrt` (typically
// module parameters), perturbed in place one coordinate at a time. The
// closure must be deterministic. Existing gradients on `wrt` are cleared.
double gradient_check(const std::function<Tensor()>& loss, std::span<Tensor> wrt, double h = 1e-5);

}  // namespace uer
