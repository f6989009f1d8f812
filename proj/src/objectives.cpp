#include "rng/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "rng/numerics.hpp"

namespace rng {

void add_projector_params(ParamStore& store, std::size_t d, std::size_t proj_dim, Rng& init,
                          double std) {
  const std::size_t p = proj_dim == 0 ? d : proj_dim;
  store.add_gaussian("proj.text", d, p, std, init);
  store.add_gaussian("proj.image", d, p, std, init);
}

ad::Var coarse_similarity(ad::Var text_globals, ad::Var image_globals, ad::Var g_t, ad::Var g_v) {
  if (text_globals.rows() < 2 || text_globals.rows() != image_globals.rows()) {
    throw std::invalid_argument("coarse_similarity: need matching batches of size >= 2");
  }
  ad::Var pt = ad::l2_normalize_rows(ad::matmul(text_globals, g_t));
  ad::Var pv = ad::l2_normalize_rows(ad::matmul(image_globals, g_v));
  return ad::matmul_nt(pt, pv);
}

Matrix coarse_similarity(const Matrix& text_globals, const Matrix& image_globals,
                         const Matrix& g_t, const Matrix& g_v) {
  ad::Tape tape;
  return coarse_similarity(tape.constant(text_globals), tape.constant(image_globals),
                           tape.constant(g_t), tape.constant(g_v))
      .value();
}

namespace {

Matrix content_rows(const Matrix& x, const SeqMask& keep, const char* what) {
  if (keep.size() != x.rows()) throw ShapeError(std::string(what) + ": mask length mismatch");
  std::vector<std::size_t> idx;
  for (std::size_t r = 0; r < keep.size(); ++r)
    if (keep[r]) idx.push_back(r);
  if (idx.empty()) throw std::invalid_argument(std::string(what) + ": no content positions");
  Matrix out(idx.size(), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = x.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

FinePair fine_similarity(ad::Var zt_content, ad::Var zv_content) {
  ad::Var grid = ad::matmul_nt(ad::l2_normalize_rows(zt_content), ad::l2_normalize_rows(zv_content));
  return FinePair{ad::row_max_mean(grid), ad::row_max_mean(ad::transpose(grid))};
}

double fine_similarity(const Matrix& zt, const Matrix& zv, const SeqMask& text_content,
                       const SeqMask& image_content, Direction dir) {
  ad::Tape tape;
  const FinePair p = fine_similarity(tape.constant(content_rows(zt, text_content, "fine_similarity")),
                                     tape.constant(content_rows(zv, image_content, "fine_similarity")));
  return dir == Direction::kTextToImage ? p.text_to_image.scalar() : p.image_to_text.scalar();
}

double info_nce(std::span<const double> scores_pos, const Matrix& scores_all, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("info_nce: tau must be > 0");
  if (scores_pos.size() != scores_all.rows() || scores_all.rows() == 0) {
    throw ShapeError("info_nce: " + std::to_string(scores_pos.size()) + " positives for " +
                     scores_all.shape_str() + " candidates");
  }
  double total = 0.0;
  std::vector<double> buf(scores_all.cols());
  for (std::size_t r = 0; r < scores_all.rows(); ++r) {
    auto row = scores_all.row(r);
    if (std::find(row.begin(), row.end(), scores_pos[r]) == row.end()) {
      throw std::invalid_argument("info_nce: row " + std::to_string(r) + " lacks its positive");
    }
    for (std::size_t c = 0; c < row.size(); ++c) buf[c] = row[c] / tau;
    total += log_sum_exp(buf) - scores_pos[r] / tau;
  }
  return total / static_cast<double>(scores_all.rows());
}

ad::Var symmetric_info_nce(ad::Var text_to_image, ad::Var image_to_text, double tau) {
  const std::size_t b = text_to_image.rows();
  if (text_to_image.cols() != b || image_to_text.rows() != b || image_to_text.cols() != b) {
    throw ShapeError("symmetric_info_nce: similarity matrices must be square and equal-sized");
  }
  std::vector<std::size_t> diag(b);
  std::iota(diag.begin(), diag.end(), std::size_t{0});
  ad::Var t2v = ad::softmax_cross_entropy(text_to_image, diag, tau);
  ad::Var v2t = ad::softmax_cross_entropy(image_to_text, diag, tau);
  return ad::scale(ad::add(t2v, v2t), 0.5);
}

double ib_loss(double kl_text, double kl_image, double label_bound, const IbConfig& cfg) {
  if (cfg.beta1 < 0.0 || cfg.beta2 < 0.0) throw std::invalid_argument("ib_loss: betas must be >= 0");
  return cfg.beta1 * kl_text + cfg.beta2 * kl_image - label_bound;
}

ad::Var ib_loss(ad::Var kl_text, ad::Var kl_image, ad::Var label_bound, const IbConfig& cfg) {
  if (cfg.beta1 < 0.0 || cfg.beta2 < 0.0) throw std::invalid_argument("ib_loss: betas must be >= 0");
  return ad::sub(ad::add(ad::scale(kl_text, cfg.beta1), ad::scale(kl_image, cfg.beta2)), label_bound);
}

namespace {

ad::Var zero_scalar(ad::Tape& tape) { return tape.constant(Matrix(1, 1)); }

// Rows 1..len-2 of a text representation, or 1..len-1 of an image one.
ad::Var text_content(ad::Var z) { return ad::rows(z, 1, z.rows() - 2); }
ad::Var image_content(ad::Var z) { return ad::rows(z, 1, z.rows() - 1); }

}  // namespace

ScLoss sc_loss(const ForwardTrace& trace, const ContrastiveConfig& cfg) {
  if (trace.samples.empty()) throw std::invalid_argument("sc_loss: empty batch");
  ad::Tape& tape = trace.samples.front().x_text.tape();
  ScLoss out{zero_scalar(tape), zero_scalar(tape), {}, false};
  const std::size_t b = trace.samples.size();
  const bool any = trace.flags.sc_con_coarse || trace.flags.sc_con_fine;
  if (any && b < 2) out.skipped = true;
  if (any && b >= 2) {
    if (trace.flags.sc_con_coarse) {
      std::vector<ad::Var> tg, vg;
      for (const auto& s : trace.samples) {
        tg.push_back(ad::rows(s.x_text, 0, 1));
        vg.push_back(ad::rows(s.x_image, 0, 1));
      }
      ad::Var sim = coarse_similarity(ad::concat_rows(tg), ad::concat_rows(vg), trace.proj_text,
                                      trace.proj_image);
      out.coarse = symmetric_info_nce(sim, ad::transpose(sim), cfg.tau);
    }
    if (trace.flags.sc_con_fine) {
      std::vector<ad::Var> tc, vc;
      for (const auto& s : trace.samples) {
        tc.push_back(ad::l2_normalize_rows(text_content(s.z_text)));
        vc.push_back(ad::l2_normalize_rows(image_content(s.z_image)));
      }
      // t2v[i][j] = ε(T_i, V_j); v2t[j][i] = ε(V_j, T_i).
      std::vector<ad::Var> t2v(b * b), v2t(b * b);
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
          ad::Var grid = ad::matmul_nt(tc[i], vc[j]);
          t2v[i * b + j] = ad::row_max_mean(grid);
          v2t[j * b + i] = ad::row_max_mean(ad::transpose(grid));
        }
      }
      out.fine = symmetric_info_nce(ad::stack_scalars(t2v, b, b), ad::stack_scalars(v2t, b, b),
                                    cfg.tau);
    }
  }
  out.total = ad::add(out.coarse, out.fine);
  return out;
}

NonFiniteLoss::NonFiniteLoss(const std::string& term, double value)
    : std::runtime_error("non-finite loss term '" + term + "' = " + std::to_string(value)),
      term_(term) {}

LossBreakdown total_loss(const ForwardTrace& trace, const LossConfig& cfg) {
  if (trace.samples.empty()) throw std::invalid_argument("total_loss: empty batch");
  ad::Tape& tape = trace.samples.front().x_text.tape();
  const double inv_b = 1.0 / static_cast<double>(trace.samples.size());

  std::vector<ad::Var> nlls, kl_t, kl_v, bounds;
  for (const auto& s : trace.samples) {
    ad::Var task = crf_nll(s.emissions, trace.transitions, s.gold);
    nlls.push_back(task);
    if (trace.flags.ib_con) {
      if (cfg.ib.kl_reduction == KlReduction::kMean) {
        kl_t.push_back(ad::scale(s.kl_text, 1.0 / static_cast<double>(s.mu_text.value().size())));
        kl_v.push_back(ad::scale(s.kl_image, 1.0 / static_cast<double>(s.mu_image.value().size())));
      } else {
        kl_t.push_back(s.kl_text);
        kl_v.push_back(s.kl_image);
      }
      bounds.push_back(cfg.bound_mode == BoundMode::kSurrogate
                           ? ad::scale(task, -1.0)
                           : label_info_bound(s.emissions, trace.transitions, s.gold, cfg.bound_mode));
    }
  }
  auto batch_mean = [&](const std::vector<ad::Var>& v) {
    return ad::scale(ad::sum(ad::concat_rows(v)), inv_b);
  };

  LossBreakdown out;
  out.task = batch_mean(nlls);
  out.ib = trace.flags.ib_con
               ? ib_loss(batch_mean(kl_t), batch_mean(kl_v), batch_mean(bounds), cfg.ib)
               : zero_scalar(tape);
  const ScLoss sc = sc_loss(trace, cfg.contrastive);
  out.sc = sc.total;
  out.sc_skipped = sc.skipped;
  out.total = ad::add(ad::add(out.task, out.ib), out.sc);

  const std::pair<const char*, ad::Var> terms[] = {
      {"task", out.task}, {"ib", out.ib}, {"sc_coarse", sc.coarse}, {"sc_fine", sc.fine}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v.scalar())) throw NonFiniteLoss(name, v.scalar());
  return out;
}

}  // namespace rng
