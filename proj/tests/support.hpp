#pragma once

#include <functional>

#include "rng/autodiff.hpp"
#include "rng/gradcheck.hpp"
#include "rng/matrix.hpp"
#include "rng/params.hpp"
#include "rng/random.hpp"

namespace rng::test {

inline Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = lo + (hi - lo) * rng.uniform();
  return m;
}

/// Builds a scalar graph from the store on a fresh tape for every evaluation.
using GraphFn = std::function<ad::Var(ad::Binder&)>;

inline GradCheckReport check_graph(ParamStore& params, const GraphFn& build, double eps = 1e-5,
                                   double tol = 1e-4) {
  auto fn = [&](ParamStore& p) {
    ad::Tape tape;
    ad::Binder bind(tape, p);
    ad::Var loss = build(bind);
    tape.backward(loss);
    return loss.scalar();
  };
  return grad_check(fn, params, eps, tol);
}

/// Fixed random readout so the checked scalar depends on every output entry.
inline ad::Var readout(ad::Var out, std::uint64_t seed) {
  Rng r(seed);
  Matrix w = uniform_matrix(r, out.rows(), out.cols());
  return ad::sum(ad::mul(out, out.tape().constant(std::move(w))));
}

}  // namespace rng::test
