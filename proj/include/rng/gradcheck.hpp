#pragma once

#include <functional>
#include <stdexcept>
#include <string>

#include "rng/params.hpp"

namespace rng {

/// Loss callback for grad_check: evaluates the loss at the current values
/// in the store and adds the analytic gradient into each Param::grad
/// (the checker zeroes them first). It must be deterministic.
using LossFn = std::function<double(ParamStore&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

class NonDeterministicLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Compares analytic gradients against central differences
/// (f(θ+eps) − f(θ−eps)) / (2·eps) for every entry of every parameter.
/// Relative error uses the denominator max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params, double eps = 1e-5,
                           double tol = 1e-4);

}  // namespace rng
