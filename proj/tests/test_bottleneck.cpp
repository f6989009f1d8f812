#include <cmath>

#include "doctest.h"
#include "rng/bottleneck.hpp"
#include "support.hpp"

using namespace rng;

namespace {

ParamStore vib_store(std::uint64_t seed) {
  ParamStore ps;
  Rng r(seed);
  add_vib_params(ps, "vib", AttentionShape{5, 10, 3, 2}, r, 0.6);
  Rng t(seed + 1);
  ps.at("vib.mu.rel_bias").value = test::uniform_matrix(t, 1, 5);
  ps.at("vib.sigma.rel_bias").value = test::uniform_matrix(t, 1, 5);
  return ps;
}

// Monte-Carlo estimate of KL(N(μ,σ²) ‖ N(0,1)) for one coordinate.
struct McEstimate {
  double mean, se;
};

McEstimate mc_kl(double mu, double sigma, std::size_t n, Rng& r) {
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = r.normal();
    const double z = mu + sigma * e;
    const double v = -std::log(sigma) - 0.5 * e * e + 0.5 * z * z;
    s += v;
    s2 += v * v;
  }
  const double m = s / static_cast<double>(n);
  const double var = (s2 - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
  return {m, std::sqrt(var / static_cast<double>(n))};
}

}  // namespace

TEST_CASE("KL closed-form examples") {
  CHECK(kl_to_standard_normal(Matrix(3, 2), Matrix(3, 2, 1.0)) == 0.0);
  CHECK(kl_to_standard_normal(Matrix{{1.0}}, Matrix{{1.0}}) == 0.5);
  CHECK(kl_to_standard_normal(Matrix{{0.0}}, Matrix{{2.0}}) ==
        doctest::Approx(0.8068528194400547).epsilon(1e-15));
  const SeqMask mask{1, 0};
  CHECK(kl_to_standard_normal(Matrix{{1.0}, {5.0}}, Matrix{{1.0}, {3.0}}, &mask) == 0.5);
  CHECK_THROWS_AS(kl_to_standard_normal(Matrix(1, 2), Matrix(2, 1, 1.0)), ShapeError);
  CHECK_THROWS_AS(kl_to_standard_normal(Matrix{{0.0}}, Matrix{{0.0}}), std::domain_error);
}

TEST_CASE("KL is non-negative and additive over coordinates") {
  Rng r(3);
  for (int t = 0; t < 50; ++t) {
    const Matrix mu = test::uniform_matrix(r, 3, 4, -2, 2);
    const Matrix sigma = test::uniform_matrix(r, 3, 4, 0.05, 3);
    const double kl = kl_to_standard_normal(mu, sigma);
    CHECK(kl >= 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i)
      sum += kl_to_standard_normal(Matrix{{mu[i]}}, Matrix{{sigma[i]}});
    CHECK(kl == doctest::Approx(sum).epsilon(1e-12));
  }
}

TEST_CASE("KL agrees with Monte Carlo") {
  Rng draw(4), noise(5);
  for (int t = 0; t < 5; ++t) {
    const double mu = -1.5 + 3.0 * draw.uniform();
    const double sigma = 0.2 + 2.0 * draw.uniform();
    const McEstimate mc = mc_kl(mu, sigma, 100000, noise);
    const double exact = kl_to_standard_normal(Matrix{{mu}}, Matrix{{sigma}});
    CHECK(std::abs(mc.mean - exact) <= 3.0 * mc.se);
  }
}

TEST_CASE("inference mode returns the mean") {
  const ParamStore ps = vib_store(6);
  Rng r(7), noise(8);
  const Matrix x = test::uniform_matrix(r, 4, 5);
  const VibOutput out = variational_encode(x, ps, "vib", 2, noise, nullptr, VibMode::kInfer);
  CHECK(out.z == out.mu);
  CHECK(out.eps == Matrix(4, 5));
  CHECK(out.mu == gau_forward(x, ps, "vib.mu", 2));
}

TEST_CASE("training mode reparameterizes deterministically") {
  const ParamStore ps = vib_store(9);
  Rng r(10);
  const Matrix x = test::uniform_matrix(r, 4, 5);
  Rng n1(11), n2(11), n3(12);
  const SeqMask mask{1, 1, 1, 0};
  const VibOutput a = variational_encode(x, ps, "vib", 2, n1, &mask, VibMode::kTrain);
  const VibOutput b = variational_encode(x, ps, "vib", 2, n2, &mask, VibMode::kTrain);
  const VibOutput c = variational_encode(x, ps, "vib", 2, n3, &mask, VibMode::kTrain);
  CHECK(a.z == b.z);
  CHECK_FALSE(a.z == c.z);
  for (std::size_t i = 0; i < a.z.size(); ++i) {
    CHECK(a.sigma[i] >= kSigmaMin);
    CHECK(a.z[i] == doctest::Approx(a.mu[i] + a.sigma[i] * a.eps[i]).epsilon(1e-14));
  }
  for (std::size_t j = 0; j < 5; ++j) CHECK(a.eps(3, j) == 0.0);
}

TEST_CASE("sample mean approaches mu") {
  const ParamStore ps = vib_store(13);
  Rng r(14);
  const Matrix x = test::uniform_matrix(r, 2, 5);
  Rng noise(15);
  const std::size_t n = 2000;
  Matrix sum(2, 5);
  VibOutput first;
  for (std::size_t k = 0; k < n; ++k) {
    const VibOutput o = variational_encode(x, ps, "vib", 2, noise, nullptr, VibMode::kTrain);
    if (k == 0) first = o;
    sum += o.z;
  }
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double m = sum[i] / n;
    const double se = first.sigma[i] / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(m - first.mu[i]) <= 4.0 * se);
  }
}

TEST_CASE("variational encoder and KL gradients") {
  ParamStore ps = vib_store(16);
  Rng r(17);
  ps.add("x", test::uniform_matrix(r, 4, 5));
  const SeqMask mask{1, 1, 1, 0};
  const GradCheckReport rep = test::check_graph(ps, [&](ad::Binder& b) {
    const VibParams p = VibParams::bind(b, "vib", 2);
    Rng noise(18);
    const VibVars v = variational_encode(b("x"), p, noise, &mask, VibMode::kTrain);
    return ad::add(test::readout(v.z, 19), kl_to_standard_normal(v.mu, v.sigma, &mask));
  });
  CHECK(rep.passed);

  ParamStore ks;
  Rng k(20);
  ks.add("mu", test::uniform_matrix(k, 3, 2));
  ks.add("sigma", test::uniform_matrix(k, 3, 2, 0.3, 2.0));
  CHECK(test::check_graph(ks, [](ad::Binder& b) { return kl_to_standard_normal(b("mu"), b("sigma")); }).passed);
}
