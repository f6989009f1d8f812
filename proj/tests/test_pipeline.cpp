#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "rng/config.hpp"
#include "rng/experiments.hpp"
#include "support.hpp"

using namespace rng;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.encoder.d = 8;
  m.l = 4;
  m.max_offset = 2;
  return m;
}

SynthConfig tiny_synth() {
  SynthConfig s;
  s.min_len = 3;
  s.max_len = 6;
  return s;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.epochs = 2;
  t.seed = 4;
  return t;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("rng_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string dump(const Dataset& d) {
  std::ostringstream os;
  write_dataset(d, os);
  return os.str();
}

TagSeq tags(std::initializer_list<const char*> names) {
  TagSeq t;
  for (const char* n : names) t.push_back(*parse_tag(n));
  return t;
}

}  // namespace

TEST_CASE("generator sentiment frequencies follow the configured ratio") {
  SynthConfig s;
  s.n_samples = 10000;
  const Dataset d = generate_synthetic(s, 1);
  std::array<double, 3> counts{};
  for (const Sample& x : d)
    for (Tag t : x.gold)
      if (t != Tag::kI && t != Tag::kO) counts[tag_index(t)] += 1.0;
  const double total = counts[0] + counts[1] + counts[2];
  const double ratio_total = s.ratio_pos + s.ratio_neu + s.ratio_neg;
  CHECK(std::abs(counts[0] / total - s.ratio_pos / ratio_total) < 0.02);
  CHECK(std::abs(counts[1] / total - s.ratio_neu / ratio_total) < 0.02);
  CHECK(std::abs(counts[2] / total - s.ratio_neg / ratio_total) < 0.02);
}

TEST_CASE("generator output is well formed and deterministic") {
  SynthConfig s = tiny_synth();
  s.n_samples = 200;
  const Dataset a = generate_synthetic(s, 2);
  CHECK(dump(a) == dump(generate_synthetic(s, 2)));
  CHECK(dump(a) != dump(generate_synthetic(s, 3)));
  for (const Sample& x : a) {
    CHECK(x.tokens.size() >= s.min_len);
    CHECK(x.tokens.size() <= s.max_len);
    CHECK(x.tokens.size() == x.gold.size());
    CHECK(x.patches.rows() >= s.min_patches);
    CHECK(x.patches.rows() <= s.max_patches);
    CHECK(x.patches.cols() == s.patch_dim);
    CHECK(decode_pairs(x.gold).orphan_inside == 0);
    CHECK(decode_pairs(x.gold).pairs.size() <= s.max_spans);
    CHECK_FALSE(x.meta.image_swapped);
    CHECK(x.meta.noise_patches == 0);
    for (std::size_t id : x.tokens) CHECK(id < s.vocab_size);
  }
  CHECK(a.front().id.rfind(s.id_prefix, 0) == 0);

  s.p_swap = 1.0;
  s.p_noise_patch = 1.0;
  for (const Sample& x : generate_synthetic(s, 2)) {
    CHECK(x.meta.image_swapped);
    CHECK(x.meta.noise_patches == x.patches.rows());
  }

  s.p_swap = 1.5;
  CHECK_THROWS_AS(generate_synthetic(s, 2), std::invalid_argument);
}

TEST_CASE("text cues carry the span sentiment") {
  SynthConfig s = tiny_synth();
  s.n_samples = 100;
  for (const Sample& x : generate_synthetic(s, 5)) {
    for (const AspectPair& p : decode_pairs(x.gold).pairs) {
      REQUIRE(p.end < x.tokens.size());
      const std::size_t cue = x.tokens[p.end];
      CHECK(cue / s.sentiment_words == static_cast<std::size_t>(p.sentiment));
    }
  }
}

TEST_CASE("dataset round trip and format errors") {
  SynthConfig s = tiny_synth();
  s.n_samples = 5;
  s.p_swap = 0.5;
  const Dataset d = generate_synthetic(s, 6);
  std::stringstream io(dump(d));
  CHECK(read_dataset(io) == d);

  const fs::path dir = scratch("dataset");
  save_dataset(d, dir / "d.jsonl");
  CHECK(load_dataset(dir / "d.jsonl") == d);

  std::istringstream empty("");
  CHECK(read_dataset(empty).empty());

  std::string text = dump(d);
  const std::size_t second = text.find('\n') + 1;
  const std::size_t key = text.find("\"tags\"", second);
  text.replace(key, 6, "\"tagz\"");
  std::istringstream broken(text);
  try {
    read_dataset(broken);
    FAIL("missing field accepted");
  } catch (const DatasetFormatError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("tags") != std::string::npos);
  }

  std::istringstream garbage("{\"id\": 1,,}\n");
  CHECK_THROWS_AS(read_dataset(garbage), DatasetFormatError);
  CHECK_THROWS(load_dataset(dir / "absent.jsonl"));
}

TEST_CASE("decode_pairs examples") {
  const DecodedPairs one = decode_pairs(tags({"O", "B-POS", "I", "O"}));
  REQUIRE(one.pairs.size() == 1);
  CHECK(one.pairs[0].begin == 1);
  CHECK(one.pairs[0].end == 3);
  CHECK(one.pairs[0].sentiment == Sentiment::kPositive);
  CHECK(decode_pairs(tags({"O", "O", "O"})).pairs.empty());
  const DecodedPairs two = decode_pairs(tags({"B-NEG", "B-POS"}));
  REQUIRE(two.pairs.size() == 2);
  CHECK(two.pairs[0] == AspectPair{0, 1, Sentiment::kNegative});
  CHECK(two.pairs[1] == AspectPair{1, 2, Sentiment::kPositive});
  const DecodedPairs orphan = decode_pairs(tags({"O", "I", "I", "B-NEU"}));
  CHECK(orphan.orphan_inside == 2);
  CHECK(orphan.pairs.size() == 1);
}

TEST_CASE("scoring examples") {
  const std::vector<TagSeq> gold{tags({"B-POS", "O", "B-NEG", "I"})};
  const EvalResult perfect = score_predictions(gold, gold);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  const std::vector<TagSeq> none{tags({"O", "O", "O", "O"})};
  const EvalResult zero = score_predictions(none, gold);
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f1 == 0.0);

  // Second pair has the right sentiment but the wrong boundary.
  const std::vector<TagSeq> half{tags({"B-POS", "O", "B-NEG", "O"})};
  const EvalResult h = score_predictions(half, gold);
  CHECK(h.precision == 0.5);
  CHECK(h.recall == 0.5);
  CHECK(h.f1 == 0.5);

  const std::vector<TagSeq> wrong_sent{tags({"B-NEU", "O", "B-NEG", "I"})};
  CHECK(score_predictions(wrong_sent, gold).counts.correct == 1);

  const std::vector<TagSeq> g2{tags({"B-POS", "O", "O"}), tags({"B-NEU", "I", "O"})};
  const std::vector<TagSeq> p2{tags({"B-POS", "B-POS", "O"}), tags({"O", "O", "O"})};
  const EvalResult m = score_predictions(p2, g2);
  CHECK(m.precision == 0.5);
  CHECK(m.recall == 0.5);
  CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)));
  CHECK_THROWS_AS(score_predictions(p2, gold), std::invalid_argument);
}

TEST_CASE("forward trace shapes and ablation switches") {
  SynthConfig s = tiny_synth();
  s.n_samples = 2;
  const Dataset batch = generate_synthetic(s, 7);
  const ModelConfig m = tiny_model();
  ParamStore params = init_model(m, 1);

  ad::Tape t1, t2;
  ad::Binder b1(t1, params), b2(t2, params);
  const ForwardTrace a = forward(b1, batch, m, AblationFlags{}, VibMode::kTrain, 3);
  const ForwardTrace b = forward(b2, batch, m, AblationFlags{}, VibMode::kTrain, 3);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const std::size_t n = batch[k].tokens.size();
    const SampleTrace& s0 = a.samples[k];
    CHECK(s0.z_fused.rows() == n + 2);
    CHECK(s0.z_fused.cols() == 8);
    CHECK(s0.x_image.rows() == batch[k].patches.rows() + 1);
    CHECK(s0.emissions.rows() == n);
    CHECK(s0.emissions.cols() == kNumTags);
    CHECK(s0.gate.rows() == 1);
    CHECK(s0.gate.cols() == 1);
    CHECK(s0.gate.scalar() > 0.0);
    CHECK(s0.gate.scalar() < 1.0);
    CHECK(s0.z_fused.value() == b.samples[k].z_fused.value());
    CHECK(s0.emissions.value() == b.samples[k].emissions.value());
  }

  ad::Tape t3;
  ad::Binder b3(t3, params);
  const ForwardTrace off = forward(b3, batch, m, AblationFlags{false, false, false, false}, VibMode::kTrain, 3);
  for (const SampleTrace& s0 : off.samples) {
    CHECK(s0.gate.scalar() == 1.0);
    CHECK(s0.z_text.value() == s0.mu_text.value());
    CHECK(s0.z_image.value() == s0.mu_image.value());
    CHECK_FALSE(s0.kl_text.valid());
  }

  const TagSeq y = predict(params, m, batch[0], AblationFlags{});
  CHECK(y.size() == batch[0].tokens.size());
  CHECK(y == predict(params, m, batch[0], AblationFlags{}));
}

TEST_CASE("config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.epochs = 0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.lr = -1.0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.tau = 0.0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.lr_groups = {{"text.", 1e-4}, {"text.tok", 2e-4}, {"crf", 0.0}};
  CHECK(t.lr_for("text.pos") == 1e-4);
  CHECK(t.lr_for("text.tok") == 2e-4);
  CHECK(t.lr_for("crf.w_emit") == 0.0);
  CHECK(t.lr_for("image.proj") == t.lr);

  ModelConfig m;
  m.init_std = -1.0;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}

TEST_CASE("run config JSON keeps defaults for missing keys") {
  const fs::path dir = scratch("config");
  {
    std::ofstream out(dir / "c.json");
    out << R"({"model": {"encoder": {"d": 12}}, "train": {"epochs": 3, "bound_mode": "literal",
              "flags": {"ib_con": false}}, "synth": {"p_swap": 0.25}})";
  }
  const RunConfig c = load_run_config(dir / "c.json");
  CHECK(c.model.encoder.d == 12);
  CHECK(c.model.l == ModelConfig{}.l);
  CHECK(c.train.epochs == 3);
  CHECK(c.train.bound_mode == BoundMode::kLiteral);
  CHECK_FALSE(c.train.flags.ib_con);
  CHECK(c.train.flags.gr_con);
  CHECK(c.synth.p_swap == 0.25);
  CHECK(c.train.tau == 0.07);
  CHECK(c.train.weight_decay == 0.01);

  const nlohmann::json j = c;
  const RunConfig back = j.get<RunConfig>();
  CHECK(nlohmann::json(back) == j);

  {
    std::ofstream out(dir / "bad.json");
    out << R"({"train": {"epochs": 0}})";
  }
  CHECK_THROWS(load_run_config(dir / "bad.json"));
}

TEST_CASE("AdamW first step") {
  TrainConfig t;
  t.lr = 0.1;
  t.weight_decay = 0.01;
  ParamStore ps;
  ps.add("w", Matrix{{2.0, -1.0, 0.5}});
  ps.at("w").grad = Matrix{{0.3, -4.0, 0.0}};
  AdamW opt(t);
  opt.step(ps);
  // Bias correction makes m̂ = g and v̂ = g², so the step is lr·(sign(g) + wd·θ).
  const Matrix& w = ps.at("w").value;
  CHECK(w(0, 0) == doctest::Approx(2.0 - 0.1 * (0.3 / (0.3 + 1e-8) + 0.02)).epsilon(1e-14));
  CHECK(w(0, 1) == doctest::Approx(-1.0 - 0.1 * (-4.0 / (4.0 + 1e-8) - 0.01)).epsilon(1e-14));
  CHECK(w(0, 2) == doctest::Approx(0.5 - 0.1 * 0.005).epsilon(1e-14));
  CHECK(opt.steps() == 1);
}

TEST_CASE("training with lr 0 leaves parameters unchanged") {
  SynthConfig s = tiny_synth();
  const Splits d = make_splits(s, 1, 8, 4, 4);
  TrainConfig t = tiny_train();
  t.epochs = 1;
  t.lr = 0.0;
  const TrainResult r = train(t, tiny_model(), d.train, d.dev);
  const ParamStore init = init_model(tiny_model(), t.seed);
  for (const auto& [name, p] : init) CHECK(r.last.at(name).value == p.value);
  CHECK(r.log.size() == 1);
  CHECK(std::isfinite(r.log[0].loss_total));
}

TEST_CASE("training is deterministic and checkpoints round trip") {
  SynthConfig s = tiny_synth();
  const Splits d = make_splits(s, 2, 12, 4, 4);
  const TrainConfig t = tiny_train();
  std::string log_a, log_b;
  const TrainResult a = train(t, tiny_model(), d.train, d.dev, [&](const EpochLog& e) { log_a += epoch_log_json(e) + "\n"; });
  const TrainResult b = train(t, tiny_model(), d.train, d.dev, [&](const EpochLog& e) { log_b += epoch_log_json(e) + "\n"; });
  CHECK(log_a == log_b);
  CHECK(a.log.size() == 2);
  CHECK(a.best_epoch >= 1);
  CHECK(a.best_dev_f1 >= 0.0);

  const nlohmann::json first = nlohmann::json::parse(log_a.substr(0, log_a.find('\n')));
  for (const char* key : {"epoch", "loss_total", "loss_task", "loss_ib", "loss_sc", "dev_p", "dev_r", "dev_f1"})
    CHECK(first.contains(key));

  const fs::path dir = scratch("checkpoint");
  save_checkpoint(dir / "a.bin", a.best, tiny_model());
  save_checkpoint(dir / "b.bin", b.best, tiny_model());
  CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));

  const Checkpoint ck = load_checkpoint(dir / "a.bin");
  CHECK(nlohmann::json(ck.config) == nlohmann::json(tiny_model()));
  for (const auto& [name, p] : a.best) CHECK(ck.params.at(name).value == p.value);
  CHECK(evaluate(ck.params, ck.config, d.test, t.flags).f1 == evaluate(a.best, tiny_model(), d.test, t.flags).f1);

  ModelConfig other = tiny_model();
  other.encoder.d = 6;
  save_checkpoint(dir / "mismatch.bin", a.best, other);
  CHECK_THROWS_AS(load_checkpoint(dir / "mismatch.bin"), CheckpointError);

  const std::string bytes = slurp(dir / "a.bin");
  {
    std::ofstream out(dir / "short.bin", std::ios::binary);
    out << bytes.substr(0, bytes.size() - 16);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "short.bin"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.bin"), CheckpointError);
}

TEST_CASE("single-sample batches log a warning") {
  SynthConfig s = tiny_synth();
  const Splits d = make_splits(s, 3, 3, 2, 2);
  TrainConfig t = tiny_train();
  t.epochs = 1;
  t.batch_size = 2;
  const TrainResult r = train(t, tiny_model(), d.train, d.dev);
  CHECK(r.log[0].sc_skipped);
  CHECK(epoch_log_json(r.log[0]).find("\"warning\"") != std::string::npos);
}

TEST_CASE("experiment helpers") {
  const std::vector<Variant> v = ablation_variants();
  REQUIRE(v.size() == 7);
  CHECK(v.front().name == "full");
  const Variant all = find_variant("w/o all Con");
  CHECK_FALSE(all.flags.gr_con);
  CHECK_FALSE(all.flags.ib_con);
  CHECK_FALSE(all.flags.sc_con_coarse);
  CHECK_FALSE(all.flags.sc_con_fine);
  CHECK(find_variant("w/o SC-Con").flags == AblationFlags{true, true, false, false});
  CHECK_THROWS_AS(find_variant("w/o nothing"), std::invalid_argument);

  const SeedStats st = summarize({0.5, 0.7, 0.9});
  CHECK(st.mean == doctest::Approx(0.7));
  CHECK(st.std == doctest::Approx(0.2));
  CHECK(summarize({0.4}).std == 0.0);

  SynthConfig s = tiny_synth();
  const Splits d = make_splits(s, 1, 4, 2, 2);
  CHECK(d.train.front().id.rfind("train-", 0) == 0);
  CHECK(d.test.front().id.rfind("test-", 0) == 0);
  const std::vector<std::uint64_t> seeds{1};
  const std::vector<double> no_zero{0.5};
  CHECK_THROWS_AS(beta_sweep(RunConfig{}, d, no_zero, seeds), std::invalid_argument);

  const std::vector<BetaRow> rows{{0.0, summarize({0.5, 0.6})}, {0.5, summarize({0.7, 0.8})}};
  const fs::path dir = scratch("plot");
  write_beta_plot_data(dir / "b.dat", rows);
  std::ifstream in(dir / "b.dat");
  std::string header;
  std::getline(in, header);
  CHECK(header[0] == '#');
  double beta, mean, sd;
  in >> beta >> mean >> sd;
  CHECK(beta == 0.0);
  CHECK(mean == doctest::Approx(0.55));
  CHECK(to_json(std::span<const BetaRow>(rows)).size() == 2);
}

TEST_CASE("ablation always reports the full model") {
  RunConfig cfg;
  cfg.model = tiny_model();
  cfg.train = tiny_train();
  cfg.train.epochs = 1;
  const Splits d = make_splits(tiny_synth(), 4, 6, 3, 3);
  const std::vector<Variant> only{find_variant("w/o IB-Con")};
  const std::vector<std::uint64_t> seeds{1, 2};
  const std::vector<AblationRow> rows = ablate(cfg, d, only, seeds);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].variant.name == "full");
  CHECK(rows[1].variant.name == "w/o IB-Con");
  CHECK(rows[0].f1.per_seed.size() == 2);
}
