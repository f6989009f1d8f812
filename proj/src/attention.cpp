#include "rng/attention.hpp"

#include <algorithm>
#include <stdexcept>

#include "rng/numerics.hpp"

namespace rng {

GauParams GauParams::bind(ad::Binder& b, const std::string& prefix, std::size_t max_offset) {
  GauParams p;
  p.w_u = b(prefix + ".w_u");
  p.w_r = b(prefix + ".w_r");
  p.w_h = b(prefix + ".w_h");
  p.w_o = b(prefix + ".w_o");
  p.q_scale = b(prefix + ".q_scale");
  p.q_offset = b(prefix + ".q_offset");
  p.k_scale = b(prefix + ".k_scale");
  p.k_offset = b(prefix + ".k_offset");
  p.rel_bias = b(prefix + ".rel_bias");
  p.max_offset = max_offset;
  return p;
}

CrossGauParams CrossGauParams::bind(ad::Binder& b, const std::string& prefix,
                                    std::size_t max_offset) {
  CrossGauParams p;
  p.w_u = b(prefix + ".w_u");
  p.w_r = b(prefix + ".w_r");
  p.w_z = b(prefix + ".w_z");
  p.w_t = b(prefix + ".w_t");
  p.w_v = b(prefix + ".w_v");
  p.q_scale = b(prefix + ".q_scale");
  p.q_offset = b(prefix + ".q_offset");
  p.k_scale = b(prefix + ".k_scale");
  p.k_offset = b(prefix + ".k_offset");
  p.rel_bias = b(prefix + ".rel_bias");
  p.max_offset = max_offset;
  return p;
}

namespace {

void add_qk(ParamStore& store, const std::string& prefix, const AttentionShape& s) {
  store.add(prefix + ".q_scale", Matrix(1, s.l, 1.0));
  store.add(prefix + ".q_offset", Matrix(1, s.l));
  store.add(prefix + ".k_scale", Matrix(1, s.l, 1.0));
  store.add(prefix + ".k_offset", Matrix(1, s.l));
  store.add(prefix + ".rel_bias", Matrix(1, 2 * s.max_offset + 1));
}

Mask key_mask(std::size_t rows, std::size_t cols, const SeqMask* qmask, const SeqMask* kmask) {
  if (qmask && qmask->size() != rows) throw ShapeError("attention: query mask length mismatch");
  if (kmask && kmask->size() != cols) throw ShapeError("attention: key mask length mismatch");
  return pair_mask(qmask ? *qmask : SeqMask(rows, 1), kmask ? *kmask : SeqMask(cols, 1));
}

void require_cols(ad::Var x, std::size_t cols, const char* what) {
  if (x.cols() != cols) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(x.cols()) +
                     " columns, weights expect " + std::to_string(cols));
  }
}

}  // namespace

void add_gau_params(ParamStore& store, const std::string& prefix, const AttentionShape& s,
                    Rng& init, double std) {
  store.add_gaussian(prefix + ".w_u", s.d, s.e, std, init);
  store.add_gaussian(prefix + ".w_r", s.d, s.e, std, init);
  store.add_gaussian(prefix + ".w_h", s.e, s.d, std, init);
  store.add_gaussian(prefix + ".w_o", s.d, s.l, std, init);
  add_qk(store, prefix, s);
}

void add_cross_gau_params(ParamStore& store, const std::string& prefix, const AttentionShape& s,
                          Rng& init, double std) {
  store.add_gaussian(prefix + ".w_u", s.d, s.d, std, init);
  store.add_gaussian(prefix + ".w_r", s.d, s.d, std, init);
  store.add_gaussian(prefix + ".w_z", s.d, s.d, std, init);
  store.add_gaussian(prefix + ".w_t", s.d, s.l, std, init);
  store.add_gaussian(prefix + ".w_v", s.d, s.l, std, init);
  add_qk(store, prefix, s);
}

Matrix relative_position_bias(std::size_t rows, std::size_t cols, const Matrix& table,
                              std::size_t max_offset) {
  if (table.size() != 2 * max_offset + 1) {
    throw ShapeError("relative_position_bias: table has " + std::to_string(table.size()) +
                     " entries, expected " + std::to_string(2 * max_offset + 1));
  }
  const auto k = static_cast<long>(max_offset);
  Matrix b(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const long off = std::clamp(static_cast<long>(i) - static_cast<long>(j), -k, k);
      b(i, j) = table[static_cast<std::size_t>(off + k)];
    }
  }
  return b;
}

ad::Var gau_forward(ad::Var h, const GauParams& p, const SeqMask* mask) {
  require_cols(h, p.w_u.rows(), "gau_forward");
  const std::size_t n = h.rows();
  const Mask live = key_mask(n, n, mask, mask);

  ad::Var u = ad::silu(ad::matmul(h, p.w_u));
  ad::Var v = ad::silu(ad::matmul(h, p.w_r));
  ad::Var o = ad::silu(ad::matmul(h, p.w_o));
  ad::Var q = ad::add_row(ad::mul_row(o, p.q_scale), p.q_offset);
  // The key offset only adds q_i·k_offset to every logit of row i, which the
  // row softmax cancels exactly, so it is left out of the graph.
  ad::Var k = ad::mul_row(o, p.k_scale);
  ad::Var logits = ad::add(ad::matmul_nt(q, k), ad::relative_bias(p.rel_bias, n, n, p.max_offset));
  ad::Var a = ad::masked_softmax(logits, &live);
  return ad::matmul(ad::mul(u, ad::matmul(a, v)), p.w_h);
}

Matrix gau_forward(const Matrix& h, const ParamStore& params, const std::string& prefix,
                   std::size_t max_offset, const SeqMask* mask) {
  ad::Tape tape;
  ad::Binder bind(tape, params);
  const GauParams p = GauParams::bind(bind, prefix, max_offset);
  return gau_forward(tape.constant(h), p, mask).value();
}

ad::Var relevance_gate(ad::Var text_global, ad::Var image_global) {
  return ad::sigmoid(ad::dot(text_global, image_global));
}

double relevance_gate(std::span<const double> text_global, std::span<const double> image_global) {
  if (text_global.size() != image_global.size()) {
    throw ShapeError("relevance_gate: vectors of length " + std::to_string(text_global.size()) +
                     " and " + std::to_string(image_global.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < text_global.size(); ++i) s += text_global[i] * image_global[i];
  return sigmoid(s);
}

ad::Var cross_attention_weights(ad::Var zt, ad::Var zv, const CrossGauParams& p,
                                const SeqMask* text_mask, const SeqMask* image_mask) {
  require_cols(zt, p.w_t.rows(), "cross_gau_forward (text)");
  require_cols(zv, p.w_v.rows(), "cross_gau_forward (image)");
  const std::size_t n = zt.rows(), m = zv.rows();
  const Mask live = key_mask(n, m, text_mask, image_mask);
  ad::Var ot = ad::silu(ad::matmul(zt, p.w_t));
  ad::Var ov = ad::silu(ad::matmul(zv, p.w_v));
  ad::Var q = ad::add_row(ad::mul_row(ot, p.q_scale), p.q_offset);
  ad::Var k = ad::mul_row(ov, p.k_scale);  // key offset cancels in the softmax
  ad::Var logits = ad::add(ad::matmul_nt(q, k), ad::relative_bias(p.rel_bias, n, m, p.max_offset));
  return ad::masked_softmax(logits, &live);
}

ad::Var cross_gau_forward(ad::Var zt, ad::Var zv, ad::Var gate, const CrossGauParams& p,
                          const SeqMask* text_mask, const SeqMask* image_mask) {
  ad::Var a = cross_attention_weights(zt, zv, p, text_mask, image_mask);
  ad::Var u = ad::silu(ad::matmul(zt, p.w_u));
  ad::Var r = ad::silu(ad::matmul(zv, p.w_r));
  ad::Var gated = ad::scale_by(a, gate);
  return ad::matmul(ad::mul(u, ad::matmul(gated, r)), p.w_z);
}

Matrix cross_gau_forward(const Matrix& zt, const Matrix& zv, double gate,
                         const ParamStore& params, const std::string& prefix,
                         std::size_t max_offset, const SeqMask* text_mask,
                         const SeqMask* image_mask) {
  if (gate < 0.0 || gate > 1.0) throw std::invalid_argument("cross_gau_forward: gate outside [0,1]");
  ad::Tape tape;
  ad::Binder bind(tape, params);
  const CrossGauParams p = CrossGauParams::bind(bind, prefix, max_offset);
  return cross_gau_forward(tape.constant(zt), tape.constant(zv), tape.constant(Matrix(1, 1, gate)),
                           p, text_mask, image_mask)
      .value();
}

}  // namespace rng
