#pragma once

#include <span>
#include <vector>

#include "rng/crf.hpp"
#include "rng/dataset.hpp"
#include "rng/model.hpp"

namespace rng {

enum class Sentiment { kPositive = 0, kNeutral = 1, kNegative = 2 };

/// Aspect span [begin, end) in token positions plus its polarity.
struct AspectPair {
  std::size_t begin = 0;
  std::size_t end = 0;
  Sentiment sentiment = Sentiment::kNeutral;

  auto operator<=>(const AspectPair&) const = default;
};

struct DecodedPairs {
  std::vector<AspectPair> pairs;
  /// I tags with no preceding B (only possible with unconstrained decoding).
  std::size_t orphan_inside = 0;
};

/// Each maximal B-x I … I run becomes one pair with sentiment x.
DecodedPairs decode_pairs(const TagSeq& tags);

struct EvalCounts {
  std::size_t pred = 0;
  std::size_t gold = 0;
  std::size_t correct = 0;
};

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  EvalCounts counts;
  std::size_t orphan_inside = 0;
};

/// Micro-averaged exact match: a predicted pair counts iff its span
/// boundaries and sentiment both equal a gold pair.
EvalResult score_predictions(std::span<const TagSeq> predicted, std::span<const TagSeq> gold);

EvalResult evaluate(const ParamStore& params, const ModelConfig& cfg, const Dataset& data,
                    const AblationFlags& flags, bool constrained = true);

}  // namespace rng
