#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rng/config.hpp"

namespace rng {

struct Splits {
  Dataset train, dev, test;
};

/// Three disjoint draws from one synthetic world. Split sizes override
/// cfg.n_samples; ids are prefixed "train-", "dev-", "test-".
Splits make_splits(const SynthConfig& cfg, std::uint64_t seed, std::size_t n_train, std::size_t n_dev,
                   std::size_t n_test);

struct Variant {
  std::string name;
  AblationFlags flags;
};

/// full, w/o GR-Con, w/o IB-Con, w/o SC-Con^c, w/o SC-Con^f, w/o SC-Con, w/o all Con.
std::vector<Variant> ablation_variants();
/// Looks a variant up by name; throws std::invalid_argument for unknown names.
Variant find_variant(const std::string& name);

struct SeedStats {
  std::vector<double> per_seed;
  double mean = 0.0;
  /// Sample standard deviation (n−1); 0 for a single seed.
  double std = 0.0;
};

SeedStats summarize(std::vector<double> values);

/// Trains with `cfg.train` overridden by `seed` and returns test F1 of the
/// best-dev parameters.
double train_and_test(const RunConfig& cfg, const Splits& data, std::uint64_t seed);

struct AblationRow {
  Variant variant;
  SeedStats f1;
};

using Progress = std::function<void(const std::string&)>;

/// Trains every variant on every seed. The full model always leads the
/// table, whether or not it was requested.
std::vector<AblationRow> ablate(const RunConfig& cfg, const Splits& data, std::span<const Variant> variants,
                                std::span<const std::uint64_t> seeds, const Progress& progress = {});

struct BetaRow {
  double beta = 0.0;
  SeedStats f1;
};

/// β1 = β2 = β for each value. `betas` must be non-empty and contain 0.
std::vector<BetaRow> beta_sweep(const RunConfig& cfg, const Splits& data, std::span<const double> betas,
                                std::span<const std::uint64_t> seeds, const Progress& progress = {});

nlohmann::ordered_json to_json(std::span<const AblationRow> rows);
nlohmann::ordered_json to_json(std::span<const BetaRow> rows);

/// Whitespace-separated "beta mean_f1 std" lines with a header, for plotting.
void write_beta_plot_data(const std::filesystem::path& path, std::span<const BetaRow> rows);

}  // namespace rng
