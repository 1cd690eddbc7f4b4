#pragma once

#include <functional>
#include <vector>

#include "dmn/tensor.hpp"

namespace dmn {

struct NonFiniteGradient : Error {
  using Error::Error;
};

// Compares reverse-mode gradients against central finite differences.
// `f` must rebuild its computation graph from the current values of `inputs`
// and return a scalar. Returns the maximum elementwise relative error with
// denominator max(|analytic|, |numeric|, 1e-8). Throws NonFiniteGradient when
// either side is non-finite.
double grad_check(const std::function<Tensor()>& f,
                  const std::vector<Tensor>& inputs, double h = 1e-5);

// Multi-step variant for deep compositions: per element, takes the best
// agreement over the candidate steps and returns the maximum of those.
// Rationale: cancellation noise needs a large step while piecewise-linear
// kinks (max pooling) need a small one, and no single step serves both —
// whereas a genuinely wrong gradient disagrees at every step size.
double grad_check_multi(const std::function<Tensor()>& f,
                        const std::vector<Tensor>& inputs,
                        const std::vector<double>& steps);

}  // namespace dmn
