#pragma once

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <vector>

#include "segcode/tensor.hpp"

namespace segcode {

/// Central-difference gradient oracle. `f` maps a tensor to a scalar tensor;
/// the analytic gradient of f at x is compared entry by entry against
/// (f(x+eps) - f(x-eps)) / (2 eps). Returns the maximum relative error
///   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
/// Runs in 64-bit only; float has too little headroom for the quotient.
template <typename F>
double grad_check(F&& f, Tensor<double> x, double eps) {
  x.set_requires_grad(true);
  std::vector<double> analytic;
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    x.zero_grad();
    Tensor<double> y = f(x);
    tape.backward(y);
    analytic = x.grad();
  }

  double max_err = 0.0;
  double* xv = x.data();
  for (Index i = 0; i < x.numel(); ++i) {
    const double keep = xv[i];
    xv[i] = keep + eps;
    const double hi = f(x).item();
    xv[i] = keep - eps;
    const double lo = f(x).item();
    xv[i] = keep;
    const double numeric = (hi - lo) / (2.0 * eps);
    const double a = analytic[static_cast<std::size_t>(i)];
    const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace segcode
