#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "rng/crf.hpp"

namespace rng::test {

inline double oracle_score(const Matrix& em, const std::vector<std::size_t>& y, const Matrix& g) {
  double s = g(kStartState, y[0]) + g(y.back(), kEndState);
  for (std::size_t i = 0; i < y.size(); ++i) s += em(i, y[i]);
  for (std::size_t i = 0; i + 1 < y.size(); ++i) s += g(y[i], y[i + 1]);
  return s;
}

inline bool bio_valid(const std::vector<std::size_t>& y) {
  const std::size_t i_tag = tag_index(Tag::kI), o_tag = tag_index(Tag::kO);
  if (y[0] == i_tag) return false;
  for (std::size_t i = 1; i < y.size(); ++i)
    if (y[i] == i_tag && y[i - 1] == o_tag) return false;
  return true;
}

/// Visits all 5^n tag sequences, the first position varying fastest, so
/// sequences arrive in increasing order when read right to left.
template <class F>
void enumerate_tags(std::size_t n, F visit) {
  std::vector<std::size_t> y(n, 0);
  while (true) {
    visit(y);
    std::size_t k = 0;
    while (k < n && ++y[k] == kNumTags) y[k++] = 0;
    if (k == n) return;
  }
}

struct CrfOracle {
  double log_z = 0.0;
  double log_z_valid = 0.0;
  Matrix marginals;
  std::vector<std::size_t> best, best_valid;
};

/// Exhaustive log Z, marginals and argmax. Strict comparison in the
/// visiting order keeps the right-to-left smallest co-optimal sequence.
inline CrfOracle crf_brute_force(const Matrix& em, const Matrix& g) {
  const std::size_t n = em.rows();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> scores;
  std::vector<std::vector<std::size_t>> seqs;
  std::vector<char> valid;
  double best = kNegInf, best_valid = kNegInf;
  CrfOracle o;
  o.marginals = Matrix(n, kNumTags);
  enumerate_tags(n, [&](const std::vector<std::size_t>& y) {
    const double s = oracle_score(em, y, g);
    scores.push_back(s);
    seqs.push_back(y);
    valid.push_back(bio_valid(y));
    if (s > best) best = s, o.best = y;
    if (valid.back() && s > best_valid) best_valid = s, o.best_valid = y;
  });
  double z = 0.0, zv = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    z += std::exp(scores[k] - best);
    if (valid[k]) zv += std::exp(scores[k] - best_valid);
  }
  o.log_z = best + std::log(z);
  o.log_z_valid = best_valid + std::log(zv);
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const double p = std::exp(scores[k] - o.log_z);
    for (std::size_t i = 0; i < n; ++i) o.marginals(i, seqs[k][i]) += p;
  }
  return o;
}

inline std::vector<std::size_t> tag_indices(const TagSeq& t) {
  std::vector<std::size_t> y;
  for (Tag v : t) y.push_back(tag_index(v));
  return y;
}

}  // namespace rng::test
