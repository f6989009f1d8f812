#include "rng/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace rng {

Splits make_splits(const SynthConfig& cfg, std::uint64_t seed, std::size_t n_train, std::size_t n_dev,
                   std::size_t n_test) {
  auto draw = [&](const char* name, std::size_t n) {
    SynthConfig c = cfg;
    c.n_samples = n;
    c.id_prefix = std::string(name) + "-";
    return generate_synthetic(c, derive_seed(seed, name));
  };
  return Splits{draw("train", n_train), draw("dev", n_dev), draw("test", n_test)};
}

std::vector<Variant> ablation_variants() {
  auto with = [](bool gr, bool ib, bool scc, bool scf) { return AblationFlags{gr, ib, scc, scf}; };
  return {
      {"full", with(true, true, true, true)},
      {"w/o GR-Con", with(false, true, true, true)},
      {"w/o IB-Con", with(true, false, true, true)},
      {"w/o SC-Con^c", with(true, true, false, true)},
      {"w/o SC-Con^f", with(true, true, true, false)},
      {"w/o SC-Con", with(true, true, false, false)},
      {"w/o all Con", with(false, false, false, false)},
  };
}

Variant find_variant(const std::string& name) {
  for (const Variant& v : ablation_variants())
    if (v.name == name) return v;
  throw std::invalid_argument("unknown ablation variant '" + name + "'");
}

SeedStats summarize(std::vector<double> values) {
  SeedStats s;
  s.per_seed = std::move(values);
  if (s.per_seed.empty()) return s;
  const double n = static_cast<double>(s.per_seed.size());
  s.mean = std::accumulate(s.per_seed.begin(), s.per_seed.end(), 0.0) / n;
  if (s.per_seed.size() > 1) {
    double ss = 0.0;
    for (double v : s.per_seed) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

double train_and_test(const RunConfig& cfg, const Splits& data, std::uint64_t seed) {
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  const TrainResult r = train(tc, cfg.model, data.train, data.dev);
  return evaluate(r.best, cfg.model, data.test, tc.flags, tc.constrained_eval).f1;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << v;
  return os.str();
}

}  // namespace

std::vector<AblationRow> ablate(const RunConfig& cfg, const Splits& data, std::span<const Variant> variants,
                                std::span<const std::uint64_t> seeds, const Progress& progress) {
  if (seeds.empty()) throw std::invalid_argument("ablate: no seeds");
  std::vector<Variant> todo;
  todo.push_back(find_variant("full"));
  for (const Variant& v : variants)
    if (v.name != "full") todo.push_back(v);

  std::vector<AblationRow> rows;
  for (const Variant& v : todo) {
    RunConfig c = cfg;
    c.train.flags = v.flags;
    std::vector<double> f1;
    for (std::uint64_t seed : seeds) {
      f1.push_back(train_and_test(c, data, seed));
      if (progress) progress(v.name + " seed " + std::to_string(seed) + " test_f1 " + fmt(f1.back()));
    }
    rows.push_back(AblationRow{v, summarize(std::move(f1))});
  }
  return rows;
}

std::vector<BetaRow> beta_sweep(const RunConfig& cfg, const Splits& data, std::span<const double> betas,
                                std::span<const std::uint64_t> seeds, const Progress& progress) {
  if (betas.empty()) throw std::invalid_argument("beta_sweep: no betas");
  if (std::find(betas.begin(), betas.end(), 0.0) == betas.end()) {
    throw std::invalid_argument("beta_sweep: betas must include 0");
  }
  if (seeds.empty()) throw std::invalid_argument("beta_sweep: no seeds");
  std::vector<BetaRow> rows;
  for (double beta : betas) {
    if (beta < 0.0) throw std::invalid_argument("beta_sweep: negative beta");
    RunConfig c = cfg;
    c.train.beta1 = beta;
    c.train.beta2 = beta;
    std::vector<double> f1;
    for (std::uint64_t seed : seeds) {
      f1.push_back(train_and_test(c, data, seed));
      if (progress) progress("beta " + fmt(beta) + " seed " + std::to_string(seed) + " test_f1 " + fmt(f1.back()));
    }
    rows.push_back(BetaRow{beta, summarize(std::move(f1))});
  }
  return rows;
}

nlohmann::ordered_json to_json(std::span<const AblationRow> rows) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const AblationRow& r : rows) {
    out.push_back({{"variant", r.variant.name},
                   {"mean_f1", r.f1.mean},
                   {"std_f1", r.f1.std},
                   {"per_seed", r.f1.per_seed}});
  }
  return out;
}

nlohmann::ordered_json to_json(std::span<const BetaRow> rows) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const BetaRow& r : rows) {
    out.push_back({{"beta", r.beta}, {"mean_f1", r.f1.mean}, {"std_f1", r.f1.std}, {"per_seed", r.f1.per_seed}});
  }
  return out;
}

void write_beta_plot_data(const std::filesystem::path& path, std::span<const BetaRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# beta mean_f1 std_f1\n";
  out.precision(17);
  for (const BetaRow& r : rows) out << r.beta << ' ' << r.f1.mean << ' ' << r.f1.std << '\n';
}

}  // namespace rng
