// Command-line front end: data generation, training, evaluation and the
// experiment harnesses.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rng/config.hpp"
#include "rng/experiments.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Common {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string config;
  std::string out = ".";
};

rng::RunConfig resolve_config(const Common& c) {
  rng::RunConfig cfg = c.config.empty() ? rng::RunConfig{} : rng::load_run_config(c.config);
  if (c.seed_given) cfg.train.seed = c.seed;
  return cfg;
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

rng::Splits load_splits(const std::string& dir) {
  const fs::path d(dir);
  return rng::Splits{rng::load_dataset(d / "train.jsonl"), rng::load_dataset(d / "dev.jsonl"),
                     rng::load_dataset(d / "test.jsonl")};
}

template <typename T>
std::vector<T> parse_list(const std::string& csv) {
  std::vector<T> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v;
    if (!(is >> v) || !is.eof()) throw std::invalid_argument("cannot parse list item '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ordered_json eval_json(const rng::EvalResult& r) {
  return {{"precision", r.precision}, {"recall", r.recall},        {"f1", r.f1},
          {"pred", r.counts.pred},    {"gold", r.counts.gold},     {"correct", r.counts.correct},
          {"orphan_inside", r.orphan_inside}};
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "random seed")->each([&c](const std::string&) { c.seed_given = true; });
  cmd->add_option("--config", c.config, "JSON config {model, train, synth}");
  cmd->add_option("--out", c.out, "output directory");
}

int fail(const std::string& kind, const std::string& message) {
  ordered_json j{{"error", kind}, {"message", message}};
  std::cerr << j.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal aspect-sentiment tagger"};
  app.require_subcommand(1);
  Common common;

  std::size_t n_train = 500, n_dev = 100, n_test = 100;
  auto* gen = app.add_subcommand("gen-data", "write train/dev/test synthetic splits");
  add_common(gen, common);
  gen->add_option("--n-train", n_train);
  gen->add_option("--n-dev", n_dev);
  gen->add_option("--n-test", n_test);

  std::string data_dir;
  auto* tr = app.add_subcommand("train", "train and keep the best-dev checkpoint");
  add_common(tr, common);
  tr->add_option("--data", data_dir, "directory with train.jsonl and dev.jsonl")->required();

  std::string checkpoint, data_file;
  bool unconstrained = false;
  auto* ev = app.add_subcommand("eval", "precision/recall/F1 of a checkpoint");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--data", data_file, "dataset .jsonl")->required();
  ev->add_flag("--unconstrained", unconstrained, "allow BIO-invalid transitions when decoding");

  std::size_t gc_batch = 2;
  double gc_eps = 1e-5, gc_tol = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full loss");
  add_common(gc, common);
  gc->add_option("--batch", gc_batch);
  gc->add_option("--eps", gc_eps);
  gc->add_option("--tol", gc_tol);

  std::string seeds_csv = "1,2,3", variants_csv, betas_csv = "0,0.1,0.5,1,10";
  auto* ab = app.add_subcommand("ablate", "train each ablation variant over shared seeds");
  add_common(ab, common);
  ab->add_option("--data", data_dir)->required();
  ab->add_option("--seeds", seeds_csv, "comma-separated training seeds");
  ab->add_option("--variants", variants_csv, "comma-separated variant names (default: all)");

  auto* bs = app.add_subcommand("beta-sweep", "F1 against beta1 = beta2 = beta");
  add_common(bs, common);
  bs->add_option("--data", data_dir)->required();
  bs->add_option("--seeds", seeds_csv);
  bs->add_option("--betas", betas_csv);

  auto* dec = app.add_subcommand("decode", "print predicted aspect-sentiment pairs");
  add_common(dec, common);
  dec->add_option("--checkpoint", checkpoint)->required();
  dec->add_option("--data", data_file)->required();
  dec->add_flag("--unconstrained", unconstrained);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    const auto progress = [](const std::string& line) { std::cerr << line << std::endl; };

    if (*gen) {
      const rng::RunConfig cfg = resolve_config(common);
      const rng::Splits s = rng::make_splits(cfg.synth, cfg.train.seed, n_train, n_dev, n_test);
      const fs::path out = ensure_dir(common.out);
      rng::save_dataset(s.train, out / "train.jsonl");
      rng::save_dataset(s.dev, out / "dev.jsonl");
      rng::save_dataset(s.test, out / "test.jsonl");
      std::cout << ordered_json{{"train", s.train.size()}, {"dev", s.dev.size()}, {"test", s.test.size()}}.dump()
                << std::endl;
    } else if (*tr) {
      const rng::RunConfig cfg = resolve_config(common);
      const fs::path dir(data_dir);
      const rng::Dataset train_set = rng::load_dataset(dir / "train.jsonl");
      const rng::Dataset dev_set = rng::load_dataset(dir / "dev.jsonl");
      const fs::path out = ensure_dir(common.out);
      std::ofstream log(out / "train_log.jsonl");
      const rng::TrainResult r = rng::train(cfg.train, cfg.model, train_set, dev_set, [&](const rng::EpochLog& e) {
        const std::string line = rng::epoch_log_json(e);
        std::cout << line << std::endl;
        log << line << '\n';
      });
      rng::save_checkpoint(out / "checkpoint.bin", r.best, cfg.model);
      write_json(out / "config.json", nlohmann::ordered_json(nlohmann::json(cfg)));
    } else if (*ev || *dec) {
      const rng::Checkpoint ck = rng::load_checkpoint(checkpoint);
      const rng::RunConfig cfg = resolve_config(common);
      const rng::Dataset data = rng::load_dataset(data_file);
      if (*ev) {
        const rng::EvalResult r = rng::evaluate(ck.params, ck.config, data, cfg.train.flags, !unconstrained);
        std::cout << eval_json(r).dump() << std::endl;
      } else {
        for (const rng::Sample& s : data) {
          const rng::TagSeq tags = rng::predict(ck.params, ck.config, s, cfg.train.flags, !unconstrained);
          ordered_json pairs = ordered_json::array();
          for (const rng::AspectPair& p : rng::decode_pairs(tags).pairs) {
            pairs.push_back({{"begin", p.begin},
                             {"end", p.end},
                             {"sentiment", rng::tag_name(rng::tag_from_index(static_cast<std::size_t>(p.sentiment)))
                                               .substr(2)}});
          }
          ordered_json tag_names = ordered_json::array();
          for (rng::Tag t : tags) tag_names.push_back(std::string(rng::tag_name(t)));
          std::cout << ordered_json{{"id", s.id}, {"tags", tag_names}, {"pairs", pairs}}.dump() << std::endl;
        }
      }
    } else if (*gc) {
      rng::RunConfig cfg = resolve_config(common);
      if (common.config.empty()) {
        cfg.model.encoder.d = 8;
        cfg.model.l = 4;
        cfg.model.max_offset = 2;
        cfg.model.init_std = 0.4;
        cfg.model.weight_gain = 1.5;
        cfg.synth.min_len = 3;
        cfg.synth.max_len = 4;
        cfg.synth.min_patches = 2;
        cfg.synth.max_patches = 4;
      }
      rng::SynthConfig sc = cfg.synth;
      sc.n_samples = gc_batch;
      sc.patch_dim = cfg.model.encoder.patch_dim;
      const rng::Dataset batch = rng::generate_synthetic(sc, cfg.train.seed);
      const rng::GradCheckReport r =
          rng::check_model_gradients(cfg.model, cfg.train, batch, cfg.train.seed, gc_eps, gc_tol);
      std::cout << ordered_json{{"passed", r.passed},
                                {"max_rel_error", r.max_rel_error},
                                {"worst_param", r.worst_param},
                                {"worst_index", r.worst_index},
                                {"worst_analytic", r.worst_analytic},
                                {"worst_numeric", r.worst_numeric},
                                {"entries_checked", r.entries_checked}}
                       .dump()
                << std::endl;
      return r.passed ? 0 : fail("gradcheck_failed", "max relative error " + std::to_string(r.max_rel_error));
    } else if (*ab) {
      const rng::RunConfig cfg = resolve_config(common);
      const rng::Splits data = load_splits(data_dir);
      std::vector<rng::Variant> variants;
      if (variants_csv.empty()) {
        variants = rng::ablation_variants();
      } else {
        std::stringstream ss(variants_csv);
        std::string name;
        while (std::getline(ss, name, ',')) variants.push_back(rng::find_variant(name));
      }
      const auto seeds = parse_list<std::uint64_t>(seeds_csv);
      const auto rows = rng::ablate(cfg, data, variants, seeds, progress);
      const ordered_json table = rng::to_json(rows);
      write_json(ensure_dir(common.out) / "ablation.json", table);
      std::cout << table.dump() << std::endl;
    } else if (*bs) {
      const rng::RunConfig cfg = resolve_config(common);
      const rng::Splits data = load_splits(data_dir);
      const auto seeds = parse_list<std::uint64_t>(seeds_csv);
      const auto betas = parse_list<double>(betas_csv);
      const auto rows = rng::beta_sweep(cfg, data, betas, seeds, progress);
      const fs::path out = ensure_dir(common.out);
      const ordered_json table = rng::to_json(rows);
      write_json(out / "beta_sweep.json", table);
      rng::write_beta_plot_data(out / "beta_sweep.dat", rows);
      std::cout << table.dump() << std::endl;
    }
  } catch (const rng::DatasetFormatError& e) {
    return fail("dataset_format", e.what());
  } catch (const rng::CheckpointError& e) {
    return fail("checkpoint", e.what());
  } catch (const rng::NonFiniteLoss& e) {
    return fail("non_finite_loss", e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail("config", e.what());
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
  return 0;
}
