#pragma once

// Central finite differences over a list of tensors, test-only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pebg/tensor.hpp"

namespace pebg::testing {

struct GradientMismatch {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative = 0.0;
};

/// Relative error |a - n| / max(|a|, |n|, floor).
inline double relative_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Compares `analytic[k]` with central differences of `loss` over every entry
/// of `params[k]`; returns the worst entry found.
inline GradientMismatch check_gradients(const std::vector<std::pair<std::string, Matrix*>>& params,
                                        const std::vector<const Matrix*>& analytic,
                                        const std::function<double()>& loss, double step = 1e-5) {
  GradientMismatch worst;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].second->values();
    auto grad = analytic[k]->values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss();
      values[i] = saved - step;
      const double down = loss();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double rel = relative_error(grad[i], numeric);
      if (rel > worst.relative) worst = {params[k].first, i, grad[i], numeric, rel};
    }
  }
  return worst;
}

}  // namespace pebg::testing
