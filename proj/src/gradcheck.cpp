#include "rng/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace rng {

GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params, double eps, double tol) {
  if (eps < 1e-7 || eps > 1e-3) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-3]");
  }
  params.zero_grad();
  const double f0 = loss_fn(params);
  params.zero_grad();
  const double f1 = loss_fn(params);
  if (f0 != f1) {
    throw NonDeterministicLoss("grad_check: loss differs between two evaluations at the same point");
  }

  // Snapshot analytic gradients before perturbation evaluations overwrite them.
  std::map<std::string, Matrix> analytic;
  for (auto& [name, p] : params) analytic.emplace(name, p.grad);

  GradCheckReport report;
  for (auto& [name, p] : params) {
    const Matrix& ga = analytic.at(name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double fp = loss_fn(params);
      p.value[i] = saved - eps;
      const double fm = loss_fn(params);
      p.value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = ga[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (rel > report.max_rel_error || report.worst_param.empty()) {
        report.max_rel_error = std::max(rel, report.max_rel_error);
        if (rel >= report.max_rel_error) {
          report.worst_param = name;
          report.worst_index = i;
          report.worst_analytic = a;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  params.zero_grad();
  for (auto& [name, p] : params) p.grad = analytic.at(name);
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace rng
