#pragma once

#include <functional>

#include "qrestore/tensor.hpp"

namespace qrestore {

// Compares analytic gradients of scalar-valued f against central finite
// differences at x. Returns the maximum over coordinates of
//   |analytic - numeric| / max(1, |analytic|).
// Throws std::runtime_error if f produces a non-finite value or gradient.
// The input tensor is used as scratch (values restored on exit).
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double h = 1e-5);

}  // namespace qrestore
