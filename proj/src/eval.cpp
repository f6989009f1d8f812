#include "rng/eval.hpp"

#include <algorithm>
#include <stdexcept>

namespace rng {

DecodedPairs decode_pairs(const TagSeq& tags) {
  DecodedPairs out;
  std::size_t i = 0;
  while (i < tags.size()) {
    const Tag t = tags[i];
    if (t == Tag::kI) {
      ++out.orphan_inside;
      ++i;
      continue;
    }
    if (t == Tag::kO) {
      ++i;
      continue;
    }
    AspectPair p;
    p.begin = i;
    p.sentiment = static_cast<Sentiment>(tag_index(t));
    ++i;
    while (i < tags.size() && tags[i] == Tag::kI) ++i;
    p.end = i;
    out.pairs.push_back(p);
  }
  return out;
}

EvalResult score_predictions(std::span<const TagSeq> predicted, std::span<const TagSeq> gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("score_predictions: prediction and gold counts differ");
  }
  EvalResult r;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    DecodedPairs p = decode_pairs(predicted[k]);
    const DecodedPairs g = decode_pairs(gold[k]);
    r.orphan_inside += p.orphan_inside;
    r.counts.pred += p.pairs.size();
    r.counts.gold += g.pairs.size();
    for (const AspectPair& a : p.pairs)
      if (std::find(g.pairs.begin(), g.pairs.end(), a) != g.pairs.end()) ++r.counts.correct;
  }
  const auto& c = r.counts;
  r.precision = c.pred ? static_cast<double>(c.correct) / static_cast<double>(c.pred) : 0.0;
  r.recall = c.gold ? static_cast<double>(c.correct) / static_cast<double>(c.gold) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

EvalResult evaluate(const ParamStore& params, const ModelConfig& cfg, const Dataset& data,
                    const AblationFlags& flags, bool constrained) {
  std::vector<TagSeq> pred, gold;
  pred.reserve(data.size());
  gold.reserve(data.size());
  for (const Sample& s : data) {
    pred.push_back(predict(params, cfg, s, flags, constrained));
    gold.push_back(s.gold);
  }
  return score_predictions(pred, gold);
}

}  // namespace rng
