#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "rng/crf.hpp"
#include "crf_oracle.hpp"
#include "support.hpp"

using namespace rng;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using test::bio_valid;
using test::oracle_score;

TagSeq to_tags(const std::vector<std::size_t>& y) {
  TagSeq t;
  for (std::size_t v : y) t.push_back(tag_from_index(v));
  return t;
}

std::vector<std::size_t> to_indices(const TagSeq& t) { return test::tag_indices(t); }

}  // namespace

TEST_CASE("tag names round trip") {
  for (std::size_t i = 0; i < kNumTags; ++i) {
    const Tag t = tag_from_index(i);
    CHECK(parse_tag(tag_name(t)) == t);
  }
  CHECK(tag_name(Tag::kBPos) == "B-POS");
  CHECK(tag_name(Tag::kI) == "I");
  CHECK_FALSE(parse_tag("B-XYZ").has_value());
  CHECK_THROWS(tag_from_index(5));
}

TEST_CASE("score_sequence examples") {
  const Matrix g(kNumStates, kNumStates);
  Rng r(1);
  const Matrix em0(4, kNumTags);
  CHECK(score_sequence(em0, TagSeq{Tag::kO, Tag::kBPos, Tag::kI, Tag::kO}, g) == 0.0);
  const Matrix em{{1, 2, 3, 4, 5}};
  CHECK(score_sequence(em, TagSeq{Tag::kBNeg}, g) == 3.0);
  CHECK_THROWS(score_sequence(em, TagSeq{Tag::kO, Tag::kO}, g));
  CHECK_THROWS(score_sequence(em, TagSeq{static_cast<Tag>(7)}, g));
}

TEST_CASE("log_partition examples") {
  const Matrix g(kNumStates, kNumStates);
  CHECK(log_partition(Matrix(1, kNumTags), g) == doctest::Approx(std::log(5.0)).epsilon(1e-15));
  Rng r(2);
  const Matrix em = test::uniform_matrix(r, 2, kNumTags, -2, 2);
  double expect = 0.0;
  for (std::size_t i = 0; i < 2; ++i) expect += log_partition(Matrix(1, kNumTags, std::vector<double>(em.row(i).begin(), em.row(i).end())), g);
  CHECK(log_partition(em, g) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("nll examples") {
  const Matrix g(kNumStates, kNumStates);
  CHECK(nll(Matrix(1, kNumTags), TagSeq{Tag::kO}, g) == doctest::Approx(std::log(5.0)).epsilon(1e-15));
  const Matrix certain{{0.0, kNegInf, kNegInf, kNegInf, kNegInf}};
  CHECK(nll(certain, TagSeq{Tag::kBPos}, g) == 0.0);
}

TEST_CASE("viterbi examples and tie rule") {
  const Matrix g(kNumStates, kNumStates);
  const Matrix onehot{{0, 0, 0, 0, 1}, {1, 0, 0, 0, 0}, {0, 0, 0, 1, 0}, {0, 0, 1, 0, 0}};
  const TagSeq expect{Tag::kO, Tag::kBPos, Tag::kI, Tag::kBNeg};
  CHECK(viterbi_decode(onehot, g, false) == expect);
  CHECK(viterbi_decode(onehot, g, true) == expect);
  CHECK(viterbi_decode(Matrix(3, kNumTags), g, false) == TagSeq(3, Tag::kBPos));

  // The unconstrained argmax O I is illegal; the constrained one is not.
  const Matrix em{{0, 0, 0, 0, 2}, {0, 0, 0, 3, 0}};
  CHECK(viterbi_decode(em, g, false) == TagSeq{Tag::kO, Tag::kI});
  const TagSeq c = viterbi_decode(em, g, true);
  CHECK(c != TagSeq{Tag::kO, Tag::kI});
  CHECK(bio_valid(to_indices(c)));
}

TEST_CASE("marginals examples") {
  const Matrix g(kNumStates, kNumStates);
  const Matrix m = token_marginals(Matrix(3, kNumTags), g);
  for (double v : m.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-14));

  Rng r(3);
  Matrix t = test::uniform_matrix(r, kNumStates, kNumStates, -2, 2);
  const Matrix em{{0.5, -1.0, 2.0, 0.0, 0.3}};
  const Matrix one = token_marginals(em, t);
  double z = 0.0;
  for (std::size_t k = 0; k < kNumTags; ++k) z += std::exp(em(0, k) + t(kStartState, k) + t(k, kEndState));
  for (std::size_t k = 0; k < kNumTags; ++k)
    CHECK(one(0, k) == doctest::Approx(std::exp(em(0, k) + t(kStartState, k) + t(k, kEndState)) / z).epsilon(1e-13));
}

TEST_CASE("forward, marginals and Viterbi match enumeration") {
  Rng r(4);
  for (int inst = 0; inst < 40; ++inst) {
    const std::size_t n = 1 + static_cast<std::size_t>(r.uniform_int(0, 4));
    const Matrix em = test::uniform_matrix(r, n, kNumTags, -2, 2);
    const Matrix g = test::uniform_matrix(r, kNumStates, kNumStates, -2, 2);
    const test::CrfOracle o = test::crf_brute_force(em, g);
    CHECK(std::abs(log_partition(em, g) - o.log_z) < 1e-9);
    CHECK(max_abs_diff(token_marginals(em, g), o.marginals) < 1e-9);
    CHECK(to_indices(viterbi_decode(em, g, false)) == o.best);
    CHECK(to_indices(viterbi_decode(em, g, true)) == o.best_valid);
    const TagSeq y = to_tags(o.best_valid);
    CHECK(std::abs(nll(em, y, g) - (o.log_z - oracle_score(em, o.best_valid, g))) < 1e-9);

    const Mask allowed = bio_allowed_transitions();
    CHECK(std::abs(log_partition(em, g, &allowed) - o.log_z_valid) < 1e-9);
  }
}

TEST_CASE("Viterbi ties resolve to the lowest index mid-sequence") {
  Matrix g(kNumStates, kNumStates);
  Matrix em(4, kNumTags);
  em(1, 2) = 1.0;
  em(1, 3) = 1.0;
  const test::CrfOracle o = test::crf_brute_force(em, g);
  CHECK(to_indices(viterbi_decode(em, g, false)) == o.best);
  CHECK(viterbi_decode(em, g, false)[1] == Tag::kBNeg);
}

TEST_CASE("row shifts move log Z and keep marginals") {
  Rng r(5);
  const Matrix em = test::uniform_matrix(r, 4, kNumTags, -2, 2);
  const Matrix g = test::uniform_matrix(r, kNumStates, kNumStates, -2, 2);
  Matrix shifted = em;
  for (double& v : shifted.row(2)) v += 1.75;
  CHECK(log_partition(shifted, g) == doctest::Approx(log_partition(em, g) + 1.75).epsilon(1e-13));
  CHECK(max_abs_diff(token_marginals(shifted, g), token_marginals(em, g)) < 1e-12);
  CHECK(viterbi_decode(shifted, g, true) == viterbi_decode(em, g, true));
}

TEST_CASE("expected counts are consistent with marginals") {
  Rng r(6);
  const Matrix em = test::uniform_matrix(r, 5, kNumTags, -2, 2);
  const Matrix g = test::uniform_matrix(r, kNumStates, kNumStates, -2, 2);
  const ExpectedCounts c = expected_counts(em, g);
  CHECK(max_abs_diff(c.emissions, token_marginals(em, g)) < 1e-12);
  CHECK(c.log_z == doctest::Approx(log_partition(em, g)).epsilon(1e-14));
  double total = 0.0;
  for (double v : c.transitions.data()) total += v;
  CHECK(total == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("label information bound") {
  const Matrix g(kNumStates, kNumStates);
  CHECK(label_info_bound(Matrix(1, kNumTags), TagSeq{Tag::kO}, g, BoundMode::kLiteral) ==
        doctest::Approx(-8.047189562170502).epsilon(1e-14));
  Rng r(7);
  const Matrix em = test::uniform_matrix(r, 3, kNumTags, -2, 2);
  const TagSeq y{Tag::kBPos, Tag::kI, Tag::kO};
  CHECK(label_info_bound(em, y, g, BoundMode::kSurrogate) == doctest::Approx(-nll(em, y, g)).epsilon(1e-14));
}

TEST_CASE("CRF gradients") {
  Rng r(8);
  ParamStore ps;
  ps.add("em", test::uniform_matrix(r, 4, kNumTags, -2, 2));
  ps.add("g", test::uniform_matrix(r, kNumStates, kNumStates, -2, 2));
  const TagSeq y{Tag::kO, Tag::kBNeu, Tag::kI, Tag::kO};
  CHECK(test::check_graph(ps, [&](ad::Binder& b) { return crf_nll(b("em"), b("g"), y); }).passed);
  CHECK(test::check_graph(ps, [&](ad::Binder& b) { return crf_log_partition(b("em"), b("g")); }).passed);
  CHECK(test::check_graph(ps, [&](ad::Binder& b) {
          return label_info_bound(b("em"), b("g"), y, BoundMode::kLiteral);
        }).passed);

  ad::Tape t;
  ad::Var em = t.constant(ps.at("em").value), g = t.constant(ps.at("g").value);
  CHECK(crf_log_partition(em, g).scalar() == doctest::Approx(log_partition(ps.at("em").value, ps.at("g").value)));
  CHECK(crf_nll(em, g, y).scalar() == doctest::Approx(nll(ps.at("em").value, y, ps.at("g").value)));

  ParamStore w;
  Rng k(9);
  w.add("z", test::uniform_matrix(k, 3, 4));
  w.add("w", test::uniform_matrix(k, 4, kNumTags));
  CHECK(test::check_graph(w, [&](ad::Binder& b) {
          return crf_nll(emissions(b("z"), b("w")), b.tape().constant(Matrix(kNumStates, kNumStates)),
                         TagSeq{Tag::kBPos, Tag::kI, Tag::kI});
        }).passed);
  CHECK(emissions(Matrix(3, 4), Matrix(4, kNumTags)) == Matrix(3, kNumTags));
}

TEST_CASE("Viterbi tie rule matches enumeration on integer scores") {
  Rng r(10);
  int tied = 0;
  for (int inst = 0; inst < 60; ++inst) {
    const std::size_t n = 2 + static_cast<std::size_t>(r.uniform_int(0, 2));
    Matrix em(n, kNumTags), g(kNumStates, kNumStates);
    for (double& v : em.data()) v = static_cast<double>(r.uniform_int(-1, 1));
    for (double& v : g.data()) v = static_cast<double>(r.uniform_int(-1, 1));
    const test::CrfOracle o = test::crf_brute_force(em, g);
    int n_best = 0;
    test::enumerate_tags(n, [&](const std::vector<std::size_t>& y) {
      if (oracle_score(em, y, g) == oracle_score(em, o.best, g)) ++n_best;
    });
    if (n_best > 1) ++tied;
    CHECK(to_indices(viterbi_decode(em, g, false)) == o.best);
    CHECK(to_indices(viterbi_decode(em, g, true)) == o.best_valid);
  }
  CHECK(tied > 10);
}
