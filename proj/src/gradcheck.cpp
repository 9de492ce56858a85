#include "qrestore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace qrestore {

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double h) {
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor y = f(x);
  if (y.numel() != 1)
    throw std::invalid_argument("grad_check: f must return a scalar");
  if (!std::isfinite(y.item()))
    throw std::runtime_error("grad_check: f(x) is not finite");
  backward(y);
  std::vector<double> analytic(x.grad().begin(), x.grad().end());

  const int64_t n = x.numel();
  double worst = 0.0;
  {
    NoGradGuard ng;
    auto vals = x.data_mut();
    for (int64_t i = 0; i < n; ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = f(x).item();
      vals[i] = orig - h;
      const double fm = f(x).item();
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      if (!std::isfinite(numeric) || !std::isfinite(analytic[i]))
        throw std::runtime_error("grad_check: non-finite derivative at index " +
                                 std::to_string(i));
      const double err = std::fabs(analytic[i] - numeric) /
                         std::max(1.0, std::fabs(analytic[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace qrestore
