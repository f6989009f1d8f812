#pragma once

#include <cstdint>
#include <span>

#include "rng/attention.hpp"
#include "rng/bottleneck.hpp"
#include "rng/dataset.hpp"
#include "rng/encoders.hpp"
#include "rng/objectives.hpp"
#include "rng/trace.hpp"

namespace rng {

struct ModelConfig {
  EncoderConfig encoder;
  /// Gate width of the intra-modal GAUs; 0 means 2d.
  std::size_t e = 0;
  std::size_t l = 16;
  std::size_t max_offset = 16;
  /// GAU layers per modality; the last one is the μ/σ head pair.
  std::size_t gau_layers = 1;
  double sigma_min = kSigmaMin;
  std::size_t proj_dim = 0;
  /// Std of embedding tables and position tables.
  double init_std = 0.1;
  /// Weight matrices are drawn N(0, weight_gain² / d).
  double weight_gain = 1.5;

  AttentionShape shape() const;
  void validate() const;
};

/// Registers every trainable parameter, drawing from `seed`'s init stream.
ParamStore init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Encoder → variational attention (per modality) → relevance gate →
/// Cross-GAU → emissions, for each sample of the batch. In training mode
/// sample k draws its noise from derive_seed(noise_seed, k).
ForwardTrace forward(ad::Binder& bind, std::span<const Sample> batch, const ModelConfig& cfg,
                     const AblationFlags& flags, VibMode mode, std::uint64_t noise_seed);

/// Deterministic prediction (z = μ) with Viterbi decoding.
TagSeq predict(const ParamStore& params, const ModelConfig& cfg, const Sample& sample,
               const AblationFlags& flags, bool constrained = true);

}  // namespace rng
