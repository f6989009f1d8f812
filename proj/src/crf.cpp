#include "rng/crf.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rng/numerics.hpp"

namespace rng {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::array<std::string_view, kNumTags> kTagNames = {"B-POS", "B-NEU", "B-NEG", "I", "O"};

void check_inputs(const Matrix& em, const Matrix& transitions) {
  if (em.rows() == 0) throw std::invalid_argument("crf: empty emission matrix");
  if (em.cols() != kNumTags) {
    throw ShapeError("crf: emissions must have " + std::to_string(kNumTags) + " columns, got " +
                     em.shape_str());
  }
  if (transitions.rows() != kNumStates || transitions.cols() != kNumStates) {
    throw ShapeError("crf: transitions must be 7x7, got " + transitions.shape_str());
  }
}

void check_tags(const TagSeq& y, std::size_t n) {
  if (y.size() != n) {
    throw std::invalid_argument("crf: tag sequence length " + std::to_string(y.size()) +
                                " != emission rows " + std::to_string(n));
  }
  for (Tag t : y) {
    if (tag_index(t) >= kNumTags) {
      throw std::out_of_range("crf: tag index " + std::to_string(tag_index(t)) +
                              " outside the alphabet");
    }
  }
}

// Transition score with forbidden entries mapped to -inf.
double trans(const Matrix& g, const Mask* allowed, std::size_t from, std::size_t to) {
  if (allowed && !(*allowed)(from, to)) return kNegInf;
  return g(from, to);
}

// alpha[i][t]: log-sum of all prefixes ending in t at position i.
Matrix forward_table(const Matrix& em, const Matrix& g, const Mask* allowed) {
  const std::size_t n = em.rows();
  Matrix alpha(n, kNumTags);
  for (std::size_t t = 0; t < kNumTags; ++t) alpha(0, t) = trans(g, allowed, kStartState, t) + em(0, t);
  std::array<double, kNumTags> buf{};
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t t = 0; t < kNumTags; ++t) {
      for (std::size_t s = 0; s < kNumTags; ++s) buf[s] = alpha(i - 1, s) + trans(g, allowed, s, t);
      alpha(i, t) = log_sum_exp(buf) + em(i, t);
    }
  }
  return alpha;
}

// beta[i][s]: log-sum of all suffixes after position i given tag s there.
Matrix backward_table(const Matrix& em, const Matrix& g, const Mask* allowed) {
  const std::size_t n = em.rows();
  Matrix beta(n, kNumTags);
  for (std::size_t s = 0; s < kNumTags; ++s) beta(n - 1, s) = trans(g, allowed, s, kEndState);
  std::array<double, kNumTags> buf{};
  for (std::size_t i = n - 1; i-- > 0;) {
    for (std::size_t s = 0; s < kNumTags; ++s) {
      for (std::size_t t = 0; t < kNumTags; ++t)
        buf[t] = trans(g, allowed, s, t) + em(i + 1, t) + beta(i + 1, t);
      beta(i, s) = log_sum_exp(buf);
    }
  }
  return beta;
}

double final_log_z(const Matrix& alpha, const Matrix& g, const Mask* allowed) {
  std::array<double, kNumTags> buf{};
  const std::size_t last = alpha.rows() - 1;
  for (std::size_t t = 0; t < kNumTags; ++t) buf[t] = alpha(last, t) + trans(g, allowed, t, kEndState);
  return log_sum_exp(buf);
}

}  // namespace

std::string_view tag_name(Tag t) { return kTagNames.at(tag_index(t)); }

std::optional<Tag> parse_tag(std::string_view s) {
  for (std::size_t i = 0; i < kNumTags; ++i)
    if (kTagNames[i] == s) return static_cast<Tag>(i);
  return std::nullopt;
}

Tag tag_from_index(std::size_t i) {
  if (i >= kNumTags) throw std::out_of_range("tag index " + std::to_string(i) + " out of range");
  return static_cast<Tag>(i);
}

void add_crf_params(ParamStore& store, std::size_t d, Rng& init, double std) {
  store.add("crf.transitions", Matrix(kNumStates, kNumStates));
  store.add_gaussian("crf.w_emit", d, kNumTags, std, init);
}

CrfParams crf_params(const ParamStore& store) {
  return CrfParams{store.at("crf.transitions").value, store.at("crf.w_emit").value};
}

Mask bio_allowed_transitions() {
  Mask m(kNumStates, kNumStates, true);
  m.set(kStartState, tag_index(Tag::kI), false);
  m.set(tag_index(Tag::kO), tag_index(Tag::kI), false);
  return m;
}

Matrix emissions(const Matrix& zm, const Matrix& w_emit) {
  if (w_emit.cols() != kNumTags) throw ShapeError("emissions: W_emit must be d x 5");
  return matmul(zm, w_emit);
}

ad::Var emissions(ad::Var zm, ad::Var w_emit) {
  if (w_emit.cols() != kNumTags) throw ShapeError("emissions: W_emit must be d x 5");
  return ad::matmul(zm, w_emit);
}

double score_sequence(const Matrix& em, const TagSeq& y, const Matrix& transitions) {
  check_inputs(em, transitions);
  check_tags(y, em.rows());
  double s = transitions(kStartState, tag_index(y.front()));
  for (std::size_t i = 0; i < y.size(); ++i) {
    s += em(i, tag_index(y[i]));
    if (i + 1 < y.size()) s += transitions(tag_index(y[i]), tag_index(y[i + 1]));
  }
  return s + transitions(tag_index(y.back()), kEndState);
}

double log_partition(const Matrix& em, const Matrix& transitions, const Mask* allowed) {
  check_inputs(em, transitions);
  return final_log_z(forward_table(em, transitions, allowed), transitions, allowed);
}

double nll(const Matrix& em, const TagSeq& y, const Matrix& transitions) {
  return log_partition(em, transitions) - score_sequence(em, y, transitions);
}

TagSeq viterbi_decode(const Matrix& em, const Matrix& transitions, bool constrained) {
  check_inputs(em, transitions);
  const Mask allowed_mask = bio_allowed_transitions();
  const Mask* allowed = constrained ? &allowed_mask : nullptr;
  const std::size_t n = em.rows();
  Matrix best(n, kNumTags);
  std::vector<std::array<std::size_t, kNumTags>> back(n);
  for (std::size_t t = 0; t < kNumTags; ++t) best(0, t) = trans(transitions, allowed, kStartState, t) + em(0, t);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t t = 0; t < kNumTags; ++t) {
      std::size_t arg = 0;
      double top = kNegInf;
      for (std::size_t s = 0; s < kNumTags; ++s) {
        const double v = best(i - 1, s) + trans(transitions, allowed, s, t);
        if (v > top) {
          top = v;
          arg = s;
        }
      }
      best(i, t) = top + em(i, t);
      back[i][t] = arg;
    }
  }
  std::size_t last = 0;
  double top = kNegInf;
  for (std::size_t t = 0; t < kNumTags; ++t) {
    const double v = best(n - 1, t) + trans(transitions, allowed, t, kEndState);
    if (v > top) {
      top = v;
      last = t;
    }
  }
  TagSeq path(n);
  path[n - 1] = tag_from_index(last);
  for (std::size_t i = n - 1; i > 0; --i) {
    last = back[i][last];
    path[i - 1] = tag_from_index(last);
  }
  return path;
}

Matrix token_marginals(const Matrix& em, const Matrix& transitions) {
  check_inputs(em, transitions);
  const Matrix alpha = forward_table(em, transitions, nullptr);
  const Matrix beta = backward_table(em, transitions, nullptr);
  const double log_z = final_log_z(alpha, transitions, nullptr);
  Matrix out(em.rows(), kNumTags);
  for (std::size_t i = 0; i < em.rows(); ++i)
    for (std::size_t t = 0; t < kNumTags; ++t) out(i, t) = std::exp(alpha(i, t) + beta(i, t) - log_z);
  return out;
}

ExpectedCounts expected_counts(const Matrix& em, const Matrix& g) {
  check_inputs(em, g);
  const std::size_t n = em.rows();
  const Matrix alpha = forward_table(em, g, nullptr);
  const Matrix beta = backward_table(em, g, nullptr);
  ExpectedCounts c{Matrix(kNumStates, kNumStates), Matrix(n, kNumTags), final_log_z(alpha, g, nullptr)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < kNumTags; ++t)
      c.emissions(i, t) = std::exp(alpha(i, t) + beta(i, t) - c.log_z);
  for (std::size_t t = 0; t < kNumTags; ++t) {
    c.transitions(kStartState, t) = c.emissions(0, t);
    c.transitions(t, kEndState) = c.emissions(n - 1, t);
  }
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t s = 0; s < kNumTags; ++s)
      for (std::size_t t = 0; t < kNumTags; ++t)
        c.transitions(s, t) += std::exp(alpha(i, s) + g(s, t) + em(i + 1, t) + beta(i + 1, t) - c.log_z);
  return c;
}

double label_info_bound(const Matrix& em, const TagSeq& y, const Matrix& transitions,
                        BoundMode mode) {
  if (mode == BoundMode::kSurrogate) return -nll(em, y, transitions);
  check_tags(y, em.rows());
  const Matrix alpha = forward_table(em, transitions, nullptr);
  const Matrix beta = backward_table(em, transitions, nullptr);
  const double log_z = final_log_z(alpha, transitions, nullptr);
  double total = 0.0;
  for (std::size_t i = 0; i < em.rows(); ++i) {
    // log p(yᵢ) plus log p(ỹ) for every ỹ ≠ yᵢ: all tags, in log space.
    for (std::size_t t = 0; t < kNumTags; ++t) total += alpha(i, t) + beta(i, t) - log_z;
  }
  return total;
}

ad::Var crf_nll(ad::Var em, ad::Var transitions, const TagSeq& y) {
  const Matrix& e = em.value();
  const Matrix& g = transitions.value();
  check_inputs(e, g);
  check_tags(y, e.rows());
  const double value = log_partition(e, g) - score_sequence(e, y, g);
  const int ie = em.id(), ig = transitions.id();
  return em.tape().push(Matrix(1, 1, value), {em, transitions}, [ie, ig, y](ad::Tape& tp, const Matrix& gr) {
    const ExpectedCounts c = expected_counts(tp.value(ie), tp.value(ig));
    const double w = gr[0];
    if (tp.requires_grad(ie)) {
      Matrix& ge = tp.grad_slot(ie);
      for (std::size_t i = 0; i < y.size(); ++i) {
        for (std::size_t t = 0; t < kNumTags; ++t) ge(i, t) += w * c.emissions(i, t);
        ge(i, tag_index(y[i])) -= w;
      }
    }
    if (tp.requires_grad(ig)) {
      Matrix& gg = tp.grad_slot(ig);
      gg += c.transitions * w;
      gg(kStartState, tag_index(y.front())) -= w;
      for (std::size_t i = 0; i + 1 < y.size(); ++i) gg(tag_index(y[i]), tag_index(y[i + 1])) -= w;
      gg(tag_index(y.back()), kEndState) -= w;
    }
  });
}

namespace {

struct LatticeVars {
  std::vector<ad::Var> alpha;
  std::vector<ad::Var> beta;
  ad::Var log_z;
};

LatticeVars build_lattice(ad::Var em, ad::Var g, bool need_beta) {
  check_inputs(em.value(), g.value());
  const std::size_t n = em.rows();
  ad::Var inner = ad::slice(g, 0, 0, kNumTags, kNumTags);
  ad::Var from_start = ad::slice(g, kStartState, 0, 1, kNumTags);
  ad::Var to_end = ad::transpose(ad::slice(g, 0, kEndState, kNumTags, 1));
  LatticeVars lv;
  lv.alpha.push_back(ad::add(from_start, ad::rows(em, 0, 1)));
  for (std::size_t i = 1; i < n; ++i)
    lv.alpha.push_back(ad::add(ad::lse_matvec(lv.alpha.back(), inner), ad::rows(em, i, 1)));
  lv.log_z = ad::logsumexp(ad::add(lv.alpha.back(), to_end));
  if (need_beta) {
    ad::Var inner_t = ad::transpose(inner);
    lv.beta.assign(n, ad::Var());
    lv.beta[n - 1] = to_end;
    for (std::size_t i = n - 1; i-- > 0;)
      lv.beta[i] = ad::lse_matvec(ad::add(ad::rows(em, i + 1, 1), lv.beta[i + 1]), inner_t);
  }
  return lv;
}

}  // namespace

ad::Var crf_log_partition(ad::Var em, ad::Var transitions) {
  return build_lattice(em, transitions, false).log_z;
}

ad::Var label_info_bound(ad::Var em, ad::Var transitions, const TagSeq& y, BoundMode mode) {
  if (mode == BoundMode::kSurrogate) return ad::scale(crf_nll(em, transitions, y), -1.0);
  check_tags(y, em.rows());
  const LatticeVars lv = build_lattice(em, transitions, true);
  std::vector<ad::Var> rows;
  for (std::size_t i = 0; i < lv.alpha.size(); ++i) rows.push_back(ad::add(lv.alpha[i], lv.beta[i]));
  const double cells = static_cast<double>(lv.alpha.size() * kNumTags);
  return ad::sub(ad::sum(ad::concat_rows(rows)), ad::scale(lv.log_z, cells));
}

}  // namespace rng
