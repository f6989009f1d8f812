#pragma once

#include <cstddef>
#include <vector>

#include "rng/autodiff.hpp"
#include "rng/matrix.hpp"
#include "rng/params.hpp"
#include "rng/random.hpp"

namespace rng {

/// Toy text/image encoders: embedding lookups plus learned positional
/// tables. Text is laid out as <s> t₁ … tₙ </s>; images as [CLS] p₁ … p_P.
struct EncoderConfig {
  std::size_t vocab_size = 50;
  std::size_t d = 32;
  std::size_t max_text_len = 60;
  std::size_t max_patch_len = 197;
  std::size_t patch_dim = 16;
  /// Adds the mean content embedding to the <s>/[CLS] row so the global
  /// row summarizes its sequence, as a pretrained encoder's would.
  bool pool_global = true;

  void validate() const;
};

struct TextInput {
  std::vector<std::size_t> token_ids;
};

struct ImageInput {
  Matrix patch_features;  // P × patch_dim
};

/// Registers text.* and image.* parameters, N(0, std²) from `init`; the
/// image bias starts at zero.
void add_encoder_params(ParamStore& store, const EncoderConfig& cfg, Rng& init,
                        double std = 0.02);

/// (n+2) × d text representation.
ad::Var encode_text(ad::Binder& bind, const TextInput& t, const EncoderConfig& cfg);
/// (P+1) × d image representation.
ad::Var encode_image(ad::Binder& bind, const ImageInput& v, const EncoderConfig& cfg);

Matrix encode_text(const TextInput& t, const ParamStore& params, const EncoderConfig& cfg);
Matrix encode_image(const ImageInput& v, const ParamStore& params, const EncoderConfig& cfg);

/// A right-padded copy of a sequence representation with its validity mask.
struct Padded {
  Matrix rows;
  SeqMask mask;
};
Padded pad_rows(const Matrix& x, std::size_t length);

}  // namespace rng
