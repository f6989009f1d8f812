#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "rng/dataset.hpp"
#include "rng/model.hpp"
#include "rng/train.hpp"

namespace rng {

/// Top-level run configuration: {"model": …, "train": …, "synth": …}.
/// Missing keys keep their defaults.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
};

NLOHMANN_JSON_SERIALIZE_ENUM(BoundMode, {{BoundMode::kSurrogate, "surrogate"},
                                        {BoundMode::kLiteral, "literal"}})

NLOHMANN_JSON_SERIALIZE_ENUM(KlReduction, {{KlReduction::kMean, "mean"}, {KlReduction::kSum, "sum"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EncoderConfig, vocab_size, d, max_text_len,
                                                max_patch_len, patch_dim, pool_global)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, encoder, e, l, max_offset, gau_layers,
                                                sigma_min, proj_dim, init_std, weight_gain)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AblationFlags, gr_con, ib_con, sc_con_coarse,
                                                sc_con_fine)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, epochs, batch_size, lr, lr_groups,
                                                weight_decay, beta1, beta2, kl_reduction, tau, seed, flags,
                                                bound_mode, adam_beta1, adam_beta2, adam_eps,
                                                constrained_eval)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthConfig, vocab_size, n_samples, min_len, max_len,
                                                min_patches, max_patches, max_spans, patch_dim,
                                                sentiment_words, aspect_words, ratio_pos, ratio_neu,
                                                ratio_neg, p_long_span, text_cue_prob, p_swap,
                                                p_noise_patch, signal, jitter, world_seed, id_prefix)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, model, train, synth)

RunConfig load_run_config(const std::filesystem::path& path);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointFormatVersion = 1;

/// One JSON header line {format_version, config, manifest} followed by the
/// parameters as raw little-endian float64, in manifest order.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const ModelConfig& cfg);

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
};

/// Rejects a manifest whose names or shapes differ from init_model(config).
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rng
