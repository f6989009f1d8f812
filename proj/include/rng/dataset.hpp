#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng/crf.hpp"
#include "rng/matrix.hpp"

namespace rng {

struct SampleMeta {
  bool image_swapped = false;
  std::size_t noise_patches = 0;
  /// Number of spans whose sentiment word appears in the text.
  std::size_t text_cues = 0;

  bool operator==(const SampleMeta&) const = default;
};

/// One multimodal instance: token ids, patch features (P × patch_dim) and
/// the gold tag per token.
struct Sample {
  std::string id;
  std::vector<std::size_t> tokens;
  Matrix patches;
  TagSeq gold;
  SampleMeta meta;

  bool operator==(const Sample&) const = default;
};

using Dataset = std::vector<Sample>;

/// Synthetic multimodal tagging data with planted aspect spans.
///
/// Vocabulary layout: ids [0, 3·sentiment_words) are sentiment cue words
/// (POS block, NEU block, NEG block), the next `aspect_words` ids are
/// aspect words, everything above is filler. Each span is 1–2 aspect words
/// followed by a cue word of its sentiment (with probability
/// `text_cue_prob`) or a filler. Every span owns one patch pointing along
/// its aspect direction plus its sentiment direction; the remaining patches
/// are random directions.
struct SynthConfig {
  std::size_t vocab_size = 50;
  std::size_t n_samples = 500;
  std::size_t min_len = 6;
  std::size_t max_len = 12;
  std::size_t min_patches = 3;
  std::size_t max_patches = 6;
  std::size_t max_spans = 3;
  std::size_t patch_dim = 16;
  std::size_t sentiment_words = 2;
  std::size_t aspect_words = 12;
  /// POS : NEU : NEG span ratio.
  double ratio_pos = 928;
  double ratio_neu = 1883;
  double ratio_neg = 368;
  double p_long_span = 0.3;
  double text_cue_prob = 1.0;
  /// Instance noise: probability the image is another sample's.
  double p_swap = 0.0;
  /// Feature noise: per-patch probability of a random replacement.
  double p_noise_patch = 0.0;
  /// Norm of the planted signal in a patch.
  double signal = 3.0;
  /// Std of isotropic Gaussian jitter added to every patch.
  double jitter = 0.1;
  /// Seeds the fixed aspect/sentiment directions (the "world"), which must
  /// be shared by every split of one experiment.
  std::uint64_t world_seed = 7;
  std::string id_prefix = "s";

  void validate() const;
  std::size_t first_aspect_id() const { return 3 * sentiment_words; }
  std::size_t first_filler_id() const { return first_aspect_id() + aspect_words; }
};

/// Deterministic per (cfg, seed).
Dataset generate_synthetic(const SynthConfig& cfg, std::uint64_t seed);

class DatasetFormatError : public std::runtime_error {
 public:
  DatasetFormatError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// JSON Lines: {"id", "tokens", "patches", "tags", "meta"} per line.
void write_dataset(const Dataset& data, std::ostream& out);
Dataset read_dataset(std::istream& in);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace rng
