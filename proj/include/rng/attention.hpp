#pragma once

#include <string>

#include "rng/autodiff.hpp"
#include "rng/matrix.hpp"
#include "rng/params.hpp"

namespace rng {

/// Dimensions shared by the intra-modal GAU and the Cross-GAU.
/// `e` is the expanded gate width (2d by default), `l` the shared
/// query/key width.
struct AttentionShape {
  std::size_t d = 32;
  std::size_t e = 64;
  std::size_t l = 16;
  std::size_t max_offset = 16;
};

/// Parameter nodes of one Gated Attention Unit:
///   H' = [silu(H W_u) ⊙ (A · silu(H W_r))] W_h
///   A  = softmax(Q(O) K(O)ᵀ + b),  O = silu(H W_o)
/// where Q and K are per-dimension affine maps (scale, offset) on O.
struct GauParams {
  ad::Var w_u, w_r, w_h, w_o;
  ad::Var q_scale, q_offset, k_scale, k_offset;
  ad::Var rel_bias;
  std::size_t max_offset = 16;

  static GauParams bind(ad::Binder& bind, const std::string& prefix, std::size_t max_offset);
};

/// Cross-modal GAU: text rows query image rows.
///   Z^M = [silu(Z^T W_u) ⊙ ((c·A') · silu(Z^V W_r))] W_z
///   A'  = softmax(Q(silu(Z^T W_t)) K(silu(Z^V W_v))ᵀ + b)
struct CrossGauParams {
  ad::Var w_u, w_r, w_z, w_t, w_v;
  ad::Var q_scale, q_offset, k_scale, k_offset;
  ad::Var rel_bias;
  std::size_t max_offset = 16;

  static CrossGauParams bind(ad::Binder& bind, const std::string& prefix, std::size_t max_offset);
};

/// Weights N(0, std²); Q/K scales start at 1, offsets and bias table at 0.
void add_gau_params(ParamStore& store, const std::string& prefix, const AttentionShape& shape,
                    Rng& init, double std = 0.02);
void add_cross_gau_params(ParamStore& store, const std::string& prefix,
                          const AttentionShape& shape, Rng& init, double std = 0.02);

/// b[i][j] = table[clip(i − j, −K, K) + K].
Matrix relative_position_bias(std::size_t rows, std::size_t cols, const Matrix& table,
                              std::size_t max_offset);

/// `mask` (optional) marks live rows of a right-padded sequence. Dead
/// rows attend to nothing and emit zeros.
ad::Var gau_forward(ad::Var h, const GauParams& p, const SeqMask* mask = nullptr);
Matrix gau_forward(const Matrix& h, const ParamStore& params, const std::string& prefix,
                   std::size_t max_offset, const SeqMask* mask = nullptr);

/// C = sigmoid(⟨x_T, x_V⟩) for two 1×d global rows.
ad::Var relevance_gate(ad::Var text_global, ad::Var image_global);
double relevance_gate(std::span<const double> text_global, std::span<const double> image_global);

/// Attention weights A' of the Cross-GAU, exposed for inspection.
ad::Var cross_attention_weights(ad::Var zt, ad::Var zv, const CrossGauParams& p,
                                const SeqMask* text_mask, const SeqMask* image_mask);
ad::Var cross_gau_forward(ad::Var zt, ad::Var zv, ad::Var gate, const CrossGauParams& p,
                          const SeqMask* text_mask = nullptr,
                          const SeqMask* image_mask = nullptr);
Matrix cross_gau_forward(const Matrix& zt, const Matrix& zv, double gate,
                         const ParamStore& params, const std::string& prefix,
                         std::size_t max_offset, const SeqMask* text_mask = nullptr,
                         const SeqMask* image_mask = nullptr);

}  // namespace rng
