#include "rng/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rng {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() + " x " + b.shape_str());
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix out(n, m);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = po + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions differ, " + a.shape_str() + " x " +
                     b.shape_str() + "^T");
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.data().data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = b.data().data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out(i, j) = s;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: inner dimensions differ, " + a.shape_str() + "^T x " +
                     b.shape_str());
  }
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  Matrix out(n, m);
  double* po = out.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.data().data() + p * n;
    const double* brow = b.data().data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = po + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Matrix softmax_rows(const Matrix& m, const std::optional<Mask>& mask) {
  if (mask && (mask->rows != m.rows() || mask->cols != m.cols())) {
    throw ShapeError("softmax_rows: mask " + std::to_string(mask->rows) + "x" +
                     std::to_string(mask->cols) + " does not match " + m.shape_str());
  }
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (mask && !(*mask)(r, c)) continue;
      mx = std::max(mx, m(r, c));
      any = true;
    }
    if (!any) {
      throw std::invalid_argument("softmax_rows: row " + std::to_string(r) + " is fully masked");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (mask && !(*mask)(r, c)) continue;
      const double e = std::exp(m(r, c) - mx);
      out(r, c) = e;
      total += e;
    }
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) /= total;
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double log_sum_exp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : xs) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : xs) s += std::exp(v - mx);
  return mx + std::log(s);
}

Matrix gauss_sample(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix out(rows, cols);
  for (double& v : out.data()) v = rng.normal();
  return out;
}

}  // namespace rng
