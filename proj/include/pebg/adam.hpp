#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pebg/tensor.hpp"

namespace pebg {

struct AdamOptions {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers are allocated on the first step
/// and matched to tensors by position, so callers must pass tensors in the
/// same order every step.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamOptions options) : options_(options) {}

  const AdamOptions& options() const noexcept { return options_; }
  std::size_t steps() const noexcept { return step_; }

  void step(std::span<Matrix* const> params, std::span<const Matrix* const> grads) {
    if (first_moment_.empty()) {
      for (const Matrix* p : params) {
        first_moment_.emplace_back(p->rows(), p->cols());
        second_moment_.emplace_back(p->rows(), p->cols());
      }
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double correction1 = 1.0 - std::pow(options_.beta1, t);
    const double correction2 = 1.0 - std::pow(options_.beta2, t);
    const double step_size = options_.learning_rate / correction1;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto x = params[k]->values();
      auto g = grads[k]->values();
      auto m = first_moment_[k].values();
      auto v = second_moment_[k].values();
      for (std::size_t i = 0; i < x.size(); ++i) {
        m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
        v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
        x[i] -= step_size * m[i] / (std::sqrt(v[i] / correction2) + options_.epsilon);
      }
    }
  }

 private:
  AdamOptions options_;
  std::size_t step_ = 0;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
};

}  // namespace pebg
