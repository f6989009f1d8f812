#include "rng/bottleneck.hpp"

#include <cmath>
#include <stdexcept>

#include "rng/numerics.hpp"

namespace rng {

VibParams VibParams::bind(ad::Binder& b, const std::string& prefix, std::size_t max_offset) {
  return VibParams{GauParams::bind(b, prefix + ".mu", max_offset),
                   GauParams::bind(b, prefix + ".sigma", max_offset)};
}

void add_vib_params(ParamStore& store, const std::string& prefix, const AttentionShape& shape,
                    Rng& init, double std) {
  add_gau_params(store, prefix + ".mu", shape, init, std);
  add_gau_params(store, prefix + ".sigma", shape, init, std);
}

VibVars variational_encode(ad::Var x, const VibParams& p, Rng& noise, const SeqMask* mask,
                           VibMode mode, double sigma_min) {
  VibVars out;
  out.mu = gau_forward(x, p.mu_head, mask);
  out.sigma = ad::add_scalar(ad::softplus(gau_forward(x, p.sigma_head, mask)), sigma_min);
  const std::size_t n = x.rows(), d = out.mu.cols();
  if (mode == VibMode::kInfer) {
    out.eps = Matrix(n, d);
    out.z = out.mu;
    return out;
  }
  out.eps = gauss_sample(noise, n, d);
  if (mask) {
    for (std::size_t r = 0; r < n; ++r)
      if (!(*mask)[r])
        for (double& v : out.eps.row(r)) v = 0.0;
  }
  ad::Tape& tape = x.tape();
  out.z = ad::add(out.mu, ad::mul(out.sigma, tape.constant(out.eps)));
  return out;
}

VibOutput variational_encode(const Matrix& x, const ParamStore& params, const std::string& prefix,
                             std::size_t max_offset, Rng& noise, const SeqMask* mask,
                             VibMode mode, double sigma_min) {
  ad::Tape tape;
  ad::Binder bind(tape, params);
  const VibParams p = VibParams::bind(bind, prefix, max_offset);
  VibVars v = variational_encode(tape.constant(x), p, noise, mask, mode, sigma_min);
  return VibOutput{v.z.value(), v.mu.value(), v.sigma.value(), std::move(v.eps)};
}

double kl_to_standard_normal(const Matrix& mu, const Matrix& sigma, const SeqMask* mask) {
  require_same_shape(mu, sigma, "kl_to_standard_normal");
  if (mask && mask->size() != mu.rows()) throw ShapeError("kl_to_standard_normal: mask length");
  double kl = 0.0;
  for (std::size_t r = 0; r < mu.rows(); ++r) {
    if (mask && !(*mask)[r]) continue;
    for (std::size_t c = 0; c < mu.cols(); ++c) {
      const double m = mu(r, c), s = sigma(r, c);
      if (!(s > 0.0)) throw std::domain_error("kl_to_standard_normal: sigma must be > 0");
      kl += 0.5 * (m * m + s * s - 1.0 - 2.0 * std::log(s));
    }
  }
  return kl;
}

ad::Var kl_to_standard_normal(ad::Var mu, ad::Var sigma, const SeqMask* mask) {
  const double kl = kl_to_standard_normal(mu.value(), sigma.value(), mask);
  const int im = mu.id(), is = sigma.id();
  SeqMask live = mask ? *mask : SeqMask(mu.rows(), 1);
  return mu.tape().push(Matrix(1, 1, kl), {mu, sigma},
                        [im, is, live = std::move(live)](ad::Tape& tp, const Matrix& g) {
                          const Matrix& m = tp.value(im);
                          const Matrix& s = tp.value(is);
                          const bool gm = tp.requires_grad(im), gs = tp.requires_grad(is);
                          for (std::size_t r = 0; r < m.rows(); ++r) {
                            if (!live[r]) continue;
                            for (std::size_t c = 0; c < m.cols(); ++c) {
                              if (gm) tp.grad_slot(im)(r, c) += g[0] * m(r, c);
                              if (gs) tp.grad_slot(is)(r, c) += g[0] * (s(r, c) - 1.0 / s(r, c));
                            }
                          }
                        });
}

}  // namespace rng
