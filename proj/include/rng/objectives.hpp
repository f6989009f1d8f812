#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng/autodiff.hpp"
#include "rng/matrix.hpp"
#include "rng/params.hpp"
#include "rng/trace.hpp"

namespace rng {

struct ContrastiveConfig {
  double tau = 0.07;
  /// Width of the shared projection space; 0 means "same as d".
  std::size_t proj_dim = 0;
};

/// How total_loss normalizes each sample's KL before weighting by β:
/// kSum keeps Σ over tokens and latent dims, kMean divides it by N·d.
enum class KlReduction { kSum, kMean };

struct IbConfig {
  double beta1 = 0.5;
  double beta2 = 0.5;
  KlReduction kl_reduction = KlReduction::kMean;
};

/// Projectors g_t, g_v (d×proj_dim) registered as "proj.text"/"proj.image".
void add_projector_params(ParamStore& store, std::size_t d, std::size_t proj_dim, Rng& init,
                          double std = 0.02);

enum class Direction { kTextToImage, kImageToText };

/// S[i][j] = ⟨ĝ_t(x_T,i), ĝ_v(x_V,j)⟩ on L2-normalized projections.
/// Rows of the inputs are the per-sample global (<s>/[CLS]) vectors.
Matrix coarse_similarity(const Matrix& text_globals, const Matrix& image_globals,
                         const Matrix& g_t, const Matrix& g_v);
ad::Var coarse_similarity(ad::Var text_globals, ad::Var image_globals, ad::Var g_t, ad::Var g_v);

/// Token/patch late interaction. Text→image: mean over content tokens of
/// the best cosine match among content patches; image→text mirrors it.
/// Masks mark the content positions (special tokens and padding off).
double fine_similarity(const Matrix& zt, const Matrix& zv, const SeqMask& text_content,
                       const SeqMask& image_content, Direction dir);

/// Both directions of the fine similarity from one token×patch cosine grid.
struct FinePair {
  ad::Var text_to_image;
  ad::Var image_to_text;
};
/// `zt_content`, `zv_content` hold only content rows.
FinePair fine_similarity(ad::Var zt_content, ad::Var zv_content);

/// Mean over rows of −log(exp(s⁺/τ) / Σ_k exp(s_k/τ)). Each row of
/// `scores_all` must contain its positive score.
double info_nce(std::span<const double> scores_pos, const Matrix& scores_all, double tau);

/// Symmetric InfoNCE over in-batch negatives: ½(CE(text→image) + CE(image→text))
/// where row i of each matrix is an anchor whose positive sits on the diagonal.
ad::Var symmetric_info_nce(ad::Var text_to_image, ad::Var image_to_text, double tau);

/// β₁·kl_T + β₂·kl_V − label_bound.
double ib_loss(double kl_text, double kl_image, double label_bound, const IbConfig& cfg);
ad::Var ib_loss(ad::Var kl_text, ad::Var kl_image, ad::Var label_bound, const IbConfig& cfg);

/// Coarse and fine InfoNCE terms of the semantic-consistency loss.
struct ScLoss {
  ad::Var coarse;  // 1×1, literal zero when disabled
  ad::Var fine;
  ad::Var total;
  /// Set when the batch is too small for in-batch negatives (B < 2).
  bool skipped = false;
};

/// L_SC = L_NCE^c + L_NCE^f over in-batch negatives. Coarse uses the
/// X-level global rows; fine uses the content rows of Z^T and Z^V.
ScLoss sc_loss(const ForwardTrace& trace, const ContrastiveConfig& cfg);

struct LossConfig {
  IbConfig ib;
  ContrastiveConfig contrastive;
  BoundMode bound_mode = BoundMode::kSurrogate;
};

struct LossBreakdown {
  ad::Var total;
  ad::Var task;
  ad::Var ib;
  ad::Var sc;
  bool sc_skipped = false;

  double total_value() const { return total.scalar(); }
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& term, double value);
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

/// L = L_task + L_IB + L_SC, each batch-averaged. Disabled constraints
/// contribute an exact zero. Throws NonFiniteLoss naming the bad term.
LossBreakdown total_loss(const ForwardTrace& trace, const LossConfig& cfg);

}  // namespace rng
