#include "rng/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rng {

AttentionShape ModelConfig::shape() const {
  const std::size_t d = encoder.d;
  return AttentionShape{d, e == 0 ? 2 * d : e, l, max_offset};
}

void ModelConfig::validate() const {
  encoder.validate();
  if (l == 0) throw std::invalid_argument("ModelConfig: l must be > 0");
  if (gau_layers == 0) throw std::invalid_argument("ModelConfig: gau_layers must be >= 1");
  if (!(init_std >= 0.0) || !(weight_gain >= 0.0)) throw std::invalid_argument("ModelConfig: init scales must be >= 0");
  if (!(sigma_min > 0.0)) throw std::invalid_argument("ModelConfig: sigma_min must be > 0");
}

namespace {

std::string stack_name(const char* modality, std::size_t k) {
  return std::string(modality) + ".gau" + std::to_string(k);
}

}  // namespace

ParamStore init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng init(derive_seed(seed, "init"));
  ParamStore store;
  const AttentionShape s = cfg.shape();
  const double w_std = cfg.weight_gain / std::sqrt(static_cast<double>(cfg.encoder.d));
  add_encoder_params(store, cfg.encoder, init, cfg.init_std);
  for (const char* m : {"text", "image"}) {
    for (std::size_t k = 0; k + 1 < cfg.gau_layers; ++k) add_gau_params(store, stack_name(m, k), s, init, w_std);
    add_vib_params(store, std::string(m) + ".vib", s, init, w_std);
  }
  add_cross_gau_params(store, "fusion", s, init, w_std);
  add_crf_params(store, cfg.encoder.d, init, w_std);
  add_projector_params(store, cfg.encoder.d, cfg.proj_dim, init, w_std);
  return store;
}

namespace {

struct ModalityOut {
  ad::Var mu, sigma, z, kl;
};

ModalityOut run_modality(ad::Binder& bind, const char* modality, ad::Var x, const ModelConfig& cfg,
                         const AblationFlags& flags, VibMode mode, Rng& noise) {
  ad::Var h = x;
  for (std::size_t k = 0; k + 1 < cfg.gau_layers; ++k)
    h = gau_forward(h, GauParams::bind(bind, stack_name(modality, k), cfg.max_offset));
  const std::string prefix = std::string(modality) + ".vib";
  ModalityOut out;
  if (!flags.ib_con) {
    // Deterministic path: only the mean head takes part.
    out.mu = gau_forward(h, GauParams::bind(bind, prefix + ".mu", cfg.max_offset));
    out.z = out.mu;
    return out;
  }
  VibVars v = variational_encode(h, VibParams::bind(bind, prefix, cfg.max_offset), noise, nullptr,
                                 mode, cfg.sigma_min);
  out.mu = v.mu;
  out.sigma = v.sigma;
  out.z = v.z;
  out.kl = kl_to_standard_normal(v.mu, v.sigma);
  return out;
}

}  // namespace

ForwardTrace forward(ad::Binder& bind, std::span<const Sample> batch, const ModelConfig& cfg,
                     const AblationFlags& flags, VibMode mode, std::uint64_t noise_seed) {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  ad::Tape& tape = bind.tape();
  ForwardTrace trace;
  trace.flags = flags;
  trace.transitions = bind("crf.transitions");
  trace.proj_text = bind("proj.text");
  trace.proj_image = bind("proj.image");
  const CrossGauParams fusion = CrossGauParams::bind(bind, "fusion", cfg.max_offset);
  ad::Var w_emit = bind("crf.w_emit");
  ad::Var unit_gate = tape.constant(Matrix(1, 1, 1.0));

  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Sample& s = batch[k];
    if (s.gold.size() != s.tokens.size()) {
      throw std::invalid_argument("forward: sample " + s.id + " has mismatched tags");
    }
    Rng noise(derive_seed(noise_seed, static_cast<std::uint64_t>(k)));
    SampleTrace st;
    st.gold = s.gold;
    st.x_text = encode_text(bind, TextInput{s.tokens}, cfg.encoder);
    st.x_image = encode_image(bind, ImageInput{s.patches}, cfg.encoder);

    Rng text_noise = noise.derive("text");
    Rng image_noise = noise.derive("image");
    const ModalityOut t = run_modality(bind, "text", st.x_text, cfg, flags, mode, text_noise);
    const ModalityOut v = run_modality(bind, "image", st.x_image, cfg, flags, mode, image_noise);
    st.mu_text = t.mu;
    st.sigma_text = t.sigma;
    st.z_text = t.z;
    st.kl_text = t.kl;
    st.mu_image = v.mu;
    st.sigma_image = v.sigma;
    st.z_image = v.z;
    st.kl_image = v.kl;

    st.gate = flags.gr_con ? relevance_gate(ad::rows(st.x_text, 0, 1), ad::rows(st.x_image, 0, 1))
                           : unit_gate;
    st.z_fused = cross_gau_forward(st.z_text, st.z_image, st.gate, fusion);
    // Tags align with the text tokens, i.e. rows 1..n between <s> and </s>.
    st.emissions = emissions(ad::rows(st.z_fused, 1, s.tokens.size()), w_emit);
    trace.samples.push_back(std::move(st));
  }
  return trace;
}

TagSeq predict(const ParamStore& params, const ModelConfig& cfg, const Sample& sample,
               const AblationFlags& flags, bool constrained) {
  ad::Tape tape;
  ad::Binder bind(tape, params);
  const ForwardTrace trace = forward(bind, std::span<const Sample>(&sample, 1), cfg, flags, VibMode::kInfer, 0);
  return viterbi_decode(trace.samples.front().emissions.value(), trace.transitions.value(), constrained);
}

}  // namespace rng
