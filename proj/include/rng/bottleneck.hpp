#pragma once

#include <string>

#include "rng/attention.hpp"
#include "rng/random.hpp"

namespace rng {

enum class VibMode { kTrain, kInfer };

inline constexpr double kSigmaMin = 1e-4;

/// Mean and spread heads of the variational attention layer.
struct VibParams {
  GauParams mu_head;
  GauParams sigma_head;

  static VibParams bind(ad::Binder& bind, const std::string& prefix, std::size_t max_offset);
};

void add_vib_params(ParamStore& store, const std::string& prefix, const AttentionShape& shape,
                    Rng& init, double std = 0.02);

struct VibVars {
  ad::Var z;
  ad::Var mu;
  ad::Var sigma;
  Matrix eps;  // the noise actually used; all zero in inference mode
};

/// mu = GAU^μ(x); sigma = softplus(GAU^σ(x)) + sigma_min;
/// z = mu + sigma ⊙ ε with ε ~ N(0, I) drawn row-major from `noise` in
/// training mode, z = mu in inference mode. Dead rows get ε = 0.
VibVars variational_encode(ad::Var x, const VibParams& p, Rng& noise, const SeqMask* mask,
                           VibMode mode, double sigma_min = kSigmaMin);

struct VibOutput {
  Matrix z;
  Matrix mu;
  Matrix sigma;
  Matrix eps;
};

VibOutput variational_encode(const Matrix& x, const ParamStore& params, const std::string& prefix,
                             std::size_t max_offset, Rng& noise, const SeqMask* mask,
                             VibMode mode, double sigma_min = kSigmaMin);

/// Σ over live rows i, dims j of ½(μ² + σ² − 1 − 2 ln σ).
double kl_to_standard_normal(const Matrix& mu, const Matrix& sigma, const SeqMask* mask = nullptr);
inline double kl_to_standard_normal(const VibOutput& out, const SeqMask* mask = nullptr) {
  return kl_to_standard_normal(out.mu, out.sigma, mask);
}
ad::Var kl_to_standard_normal(ad::Var mu, ad::Var sigma, const SeqMask* mask = nullptr);

}  // namespace rng
