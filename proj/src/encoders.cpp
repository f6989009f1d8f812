#include "rng/encoders.hpp"

#include <stdexcept>
#include <string>
#include <utility>

namespace rng {

void EncoderConfig::validate() const {
  if (d == 0) throw std::invalid_argument("EncoderConfig: d must be > 0");
  if (vocab_size == 0) throw std::invalid_argument("EncoderConfig: vocab_size must be > 0");
  if (patch_dim == 0) throw std::invalid_argument("EncoderConfig: patch_dim must be > 0");
  if (max_text_len < 3 || max_patch_len < 3) {
    throw std::invalid_argument("EncoderConfig: max lengths must be >= 3");
  }
}

void add_encoder_params(ParamStore& store, const EncoderConfig& cfg, Rng& init, double std) {
  cfg.validate();
  store.add_gaussian("text.tok", cfg.vocab_size, cfg.d, std, init);
  store.add_gaussian("text.bos", 1, cfg.d, std, init);
  store.add_gaussian("text.eos", 1, cfg.d, std, init);
  store.add_gaussian("text.pos", cfg.max_text_len, cfg.d, std, init);
  store.add_gaussian("image.proj", cfg.patch_dim, cfg.d, std, init);
  store.add("image.bias", Matrix(1, cfg.d));
  store.add_gaussian("image.cls", 1, cfg.d, std, init);
  store.add_gaussian("image.pos", cfg.max_patch_len, cfg.d, std, init);
}

namespace {

// Row 0 gets the mean of the content rows added when pooling is on.
ad::Var with_pooled_global(ad::Var special, ad::Var content, bool pool) {
  if (!pool) return special;
  const double n = static_cast<double>(content.rows());
  const Matrix ones(1, content.rows(), 1.0 / n);
  ad::Var mean = ad::matmul(content.tape().constant(ones), content);
  return ad::add(special, mean);
}

}  // namespace

ad::Var encode_text(ad::Binder& bind, const TextInput& t, const EncoderConfig& cfg) {
  const std::size_t n = t.token_ids.size();
  if (n == 0) throw std::invalid_argument("encode_text: empty token sequence");
  if (n + 2 > cfg.max_text_len) {
    throw std::length_error("encode_text: " + std::to_string(n) + " tokens exceed the limit of " +
                            std::to_string(cfg.max_text_len - 2));
  }
  for (std::size_t id : t.token_ids) {
    if (id >= cfg.vocab_size) {
      throw std::out_of_range("encode_text: token id " + std::to_string(id) +
                              " >= vocab_size " + std::to_string(cfg.vocab_size));
    }
  }
  ad::Var content = ad::select_rows(bind("text.tok"), t.token_ids);
  ad::Var bos = with_pooled_global(bind("text.bos"), content, cfg.pool_global);
  ad::Var tokens = ad::concat_rows({bos, content, bind("text.eos")});
  return ad::add(tokens, ad::rows(bind("text.pos"), 0, n + 2));
}

ad::Var encode_image(ad::Binder& bind, const ImageInput& v, const EncoderConfig& cfg) {
  const Matrix& f = v.patch_features;
  const std::size_t p = f.rows();
  if (p == 0) throw std::invalid_argument("encode_image: no patches");
  if (f.cols() != cfg.patch_dim) {
    throw ShapeError("encode_image: patch_dim " + std::to_string(f.cols()) + " != configured " +
                     std::to_string(cfg.patch_dim));
  }
  if (p + 1 > cfg.max_patch_len) {
    throw std::length_error("encode_image: " + std::to_string(p) + " patches exceed the limit of " +
                            std::to_string(cfg.max_patch_len - 1));
  }
  ad::Tape& tape = bind.tape();
  ad::Var content = ad::add_row(ad::matmul(tape.constant(f), bind("image.proj")), bind("image.bias"));
  ad::Var cls = with_pooled_global(bind("image.cls"), content, cfg.pool_global);
  ad::Var patches = ad::concat_rows({cls, content});
  return ad::add(patches, ad::rows(bind("image.pos"), 0, p + 1));
}

Matrix encode_text(const TextInput& t, const ParamStore& params, const EncoderConfig& cfg) {
  ad::Tape tape;
  ad::Binder bind(tape, params);
  return encode_text(bind, t, cfg).value();
}

Matrix encode_image(const ImageInput& v, const ParamStore& params, const EncoderConfig& cfg) {
  ad::Tape tape;
  ad::Binder bind(tape, params);
  return encode_image(bind, v, cfg).value();
}

Padded pad_rows(const Matrix& x, std::size_t length) {
  if (length < x.rows()) {
    throw ShapeError("pad_rows: cannot pad " + x.shape_str() + " to " + std::to_string(length));
  }
  Padded out{Matrix(length, x.cols()), SeqMask(length, 0)};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out.rows(r, c) = x(r, c);
    out.mask[r] = 1;
  }
  return out;
}

}  // namespace rng
