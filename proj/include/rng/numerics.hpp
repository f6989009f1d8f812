#pragma once

#include <optional>

#include "rng/matrix.hpp"
#include "rng/random.hpp"

namespace rng {

/// Standard product a·b. Throws ShapeError when a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

/// Row-wise softmax with max subtraction. Masked entries come out as exact
/// zeros; a row with no live entry is rejected.
Matrix softmax_rows(const Matrix& m, const std::optional<Mask>& mask = std::nullopt);

double sigmoid(double x);
double silu(double x);
/// ln(1 + eˣ), overflow-safe for large |x|.
double softplus(double x);
/// log Σ exp(xᵢ) over a span; returns -inf when every entry is -inf.
double log_sum_exp(std::span<const double> xs);

/// I.i.d. standard normal entries drawn from `rng`.
Matrix gauss_sample(Rng& rng, std::size_t rows, std::size_t cols);

}  // namespace rng
