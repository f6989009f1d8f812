#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rng/autodiff.hpp"
#include "rng/matrix.hpp"
#include "rng/params.hpp"
#include "rng/random.hpp"

namespace rng {

/// Tag alphabet in index order. Viterbi ties resolve toward lower indices.
enum class Tag : std::uint8_t { kBPos = 0, kBNeu = 1, kBNeg = 2, kI = 3, kO = 4 };

inline constexpr std::size_t kNumTags = 5;
/// Virtual states of the transition matrix.
inline constexpr std::size_t kStartState = 5;
inline constexpr std::size_t kEndState = 6;
inline constexpr std::size_t kNumStates = 7;

using TagSeq = std::vector<Tag>;

std::string_view tag_name(Tag t);
std::optional<Tag> parse_tag(std::string_view s);
Tag tag_from_index(std::size_t i);
inline std::size_t tag_index(Tag t) { return static_cast<std::size_t>(t); }

/// G is 7×7 over {tags…, start, end}; only start→tag, tag→tag and
/// tag→end entries take part in scoring. W_emit is d×5.
struct CrfParams {
  Matrix transitions;
  Matrix w_emit;
};

void add_crf_params(ParamStore& store, std::size_t d, Rng& init, double std = 0.02);
CrfParams crf_params(const ParamStore& store);

/// 7×7 mask of allowed transitions under BIO constraints: start→I and
/// O→I are forbidden.
Mask bio_allowed_transitions();

Matrix emissions(const Matrix& zm, const Matrix& w_emit);
ad::Var emissions(ad::Var zm, ad::Var w_emit);

/// s(Y) = G[start][y₁] + Σ G[yᵢ][yᵢ₊₁] + G[y_N][end] + Σ em[i][yᵢ].
double score_sequence(const Matrix& em, const TagSeq& y, const Matrix& transitions);

/// log Σ_Y exp s(Y) by the forward algorithm. `allowed` (7×7) drops
/// forbidden transitions from the sum.
double log_partition(const Matrix& em, const Matrix& transitions, const Mask* allowed = nullptr);

double nll(const Matrix& em, const TagSeq& y, const Matrix& transitions);

/// Highest-scoring sequence. Among tied predecessors the lowest tag index
/// wins, and the final tag prefers the lowest index too; overall, of all
/// co-optimal sequences the one that is smallest read right to left wins.
TagSeq viterbi_decode(const Matrix& em, const Matrix& transitions, bool constrained);

/// N×5 posterior marginals p(yᵢ = t) by forward–backward.
Matrix token_marginals(const Matrix& em, const Matrix& transitions);

/// Posterior expected transition counts (7×7) and emission counts (N×5).
struct ExpectedCounts {
  Matrix transitions;
  Matrix emissions;
  double log_z = 0.0;
};
ExpectedCounts expected_counts(const Matrix& em, const Matrix& transitions);

inline double score_sequence(const Matrix& em, const TagSeq& y, const CrfParams& p) {
  return score_sequence(em, y, p.transitions);
}
inline double log_partition(const Matrix& em, const CrfParams& p) {
  return log_partition(em, p.transitions);
}
inline double nll(const Matrix& em, const TagSeq& y, const CrfParams& p) {
  return nll(em, y, p.transitions);
}
inline TagSeq viterbi_decode(const Matrix& em, const CrfParams& p, bool constrained) {
  return viterbi_decode(em, p.transitions, constrained);
}
inline Matrix token_marginals(const Matrix& em, const CrfParams& p) {
  return token_marginals(em, p.transitions);
}

/// How the label-information term I(Z;Y) is estimated.
///  kSurrogate: −nll, the sequence log-likelihood on the sampled path.
///  kLiteral:   Σᵢ Σ_t log p(yᵢ = t), i.e. the gold marginal plus every
///              other tag's marginal, taken exactly as printed.
enum class BoundMode { kSurrogate, kLiteral };

/// `em` must come from fusion applied to the sampled representations.
double label_info_bound(const Matrix& em, const TagSeq& y, const Matrix& transitions,
                        BoundMode mode);

/// Fused negative log-likelihood; backward uses expected minus gold counts.
ad::Var crf_nll(ad::Var em, ad::Var transitions, const TagSeq& y);
/// log Z built from lse_matvec steps (an independent route to the fused op).
ad::Var crf_log_partition(ad::Var em, ad::Var transitions);
ad::Var label_info_bound(ad::Var em, ad::Var transitions, const TagSeq& y, BoundMode mode);

}  // namespace rng
