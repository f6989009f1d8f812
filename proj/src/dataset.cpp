#include "rng/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rng/random.hpp"

namespace rng {

using json = nlohmann::json;

void SynthConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string("SynthConfig: ") + name + " must be in [0,1]");
  };
  prob(p_swap, "p_swap");
  prob(p_noise_patch, "p_noise_patch");
  prob(text_cue_prob, "text_cue_prob");
  prob(p_long_span, "p_long_span");
  if (!(ratio_pos > 0 && ratio_neu > 0 && ratio_neg > 0)) {
    throw std::invalid_argument("SynthConfig: sentiment ratio entries must be positive");
  }
  if (min_len == 0 || min_len > max_len) throw std::invalid_argument("SynthConfig: bad length range");
  if (min_patches == 0 || min_patches > max_patches) {
    throw std::invalid_argument("SynthConfig: bad patch range");
  }
  if (max_patches < max_spans) {
    throw std::invalid_argument("SynthConfig: max_patches must cover max_spans");
  }
  if (sentiment_words == 0 || aspect_words == 0) {
    throw std::invalid_argument("SynthConfig: need at least one sentiment and one aspect word");
  }
  if (first_filler_id() >= vocab_size) {
    throw std::invalid_argument("SynthConfig: vocab_size leaves no filler ids");
  }
}

namespace {

constexpr int kMaxRetries = 64;

Matrix random_unit_rows(Rng& rng, std::size_t n, std::size_t dim) {
  Matrix m(n, dim);
  for (std::size_t r = 0; r < n; ++r) {
    double norm = 0.0;
    for (double& v : m.row(r)) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : m.row(r)) v /= norm;
  }
  return m;
}

struct World {
  Matrix aspect_dirs;     // aspect_words × patch_dim
  Matrix sentiment_dirs;  // 3 × patch_dim
};

World make_world(const SynthConfig& cfg) {
  Rng rng(derive_seed(cfg.world_seed, "world"));
  return World{random_unit_rows(rng, cfg.aspect_words, cfg.patch_dim),
               random_unit_rows(rng, 3, cfg.patch_dim)};
}

std::size_t draw_sentiment(const SynthConfig& cfg, Rng& rng) {
  const double total = cfg.ratio_pos + cfg.ratio_neu + cfg.ratio_neg;
  const double u = rng.uniform() * total;
  if (u < cfg.ratio_pos) return 0;
  if (u < cfg.ratio_pos + cfg.ratio_neu) return 1;
  return 2;
}

void random_patch(const SynthConfig& cfg, Rng& rng, std::span<double> out) {
  double norm = 0.0;
  for (double& v : out) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : out) v = cfg.signal * v / norm;
}

struct Span {
  std::vector<std::size_t> aspect_tokens;
  std::size_t sentiment;
  bool cue;
};

// Attempts one sample; returns false when the spans do not fit.
bool try_generate(const SynthConfig& cfg, const World& world, Rng& rng, Sample& s) {
  const auto n = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(cfg.min_len), static_cast<std::int64_t>(cfg.max_len)));
  const auto n_spans = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.max_spans)));
  std::vector<Span> spans(n_spans);
  std::size_t needed = 0;
  for (auto& sp : spans) {
    const std::size_t len = rng.bernoulli(cfg.p_long_span) ? 2 : 1;
    for (std::size_t k = 0; k < len; ++k) {
      sp.aspect_tokens.push_back(cfg.first_aspect_id() +
                                 static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.aspect_words) - 1)));
    }
    sp.sentiment = draw_sentiment(cfg, rng);
    sp.cue = rng.bernoulli(cfg.text_cue_prob);
    needed += len + 1;  // the trailing cue/filler separates spans
  }
  if (needed > n) return false;

  const auto filler = [&] {
    return cfg.first_filler_id() +
           static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.vocab_size - cfg.first_filler_id()) - 1));
  };
  // Free filler tokens are spread over the n_spans + 1 gaps.
  std::vector<std::size_t> gaps(n_spans + 1, 0);
  for (std::size_t k = 0; k < n - needed; ++k)
    ++gaps[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n_spans)))];

  s.tokens.clear();
  s.gold.clear();
  s.meta = SampleMeta{};
  for (std::size_t g = 0; g <= n_spans; ++g) {
    for (std::size_t k = 0; k < gaps[g]; ++k) {
      s.tokens.push_back(filler());
      s.gold.push_back(Tag::kO);
    }
    if (g == n_spans) break;
    const Span& sp = spans[g];
    for (std::size_t k = 0; k < sp.aspect_tokens.size(); ++k) {
      s.tokens.push_back(sp.aspect_tokens[k]);
      s.gold.push_back(k == 0 ? tag_from_index(sp.sentiment) : Tag::kI);
    }
    if (sp.cue) {
      const std::size_t word =
          static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.sentiment_words) - 1));
      s.tokens.push_back(sp.sentiment * cfg.sentiment_words + word);
      ++s.meta.text_cues;
    } else {
      s.tokens.push_back(filler());
    }
    s.gold.push_back(Tag::kO);
  }

  const auto p_min = std::max(cfg.min_patches, n_spans);
  const auto p = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(p_min), static_cast<std::int64_t>(cfg.max_patches)));
  s.patches = Matrix(p, cfg.patch_dim);
  std::vector<std::size_t> order(p);
  for (std::size_t i = 0; i < p; ++i) order[i] = i;
  for (std::size_t i = p; i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  const double w = cfg.signal / std::sqrt(2.0);
  for (std::size_t k = 0; k < p; ++k) {
    auto row = s.patches.row(order[k]);
    if (k < n_spans) {
      const std::size_t a = spans[k].aspect_tokens.front() - cfg.first_aspect_id();
      for (std::size_t j = 0; j < cfg.patch_dim; ++j) {
        row[j] = w * (world.aspect_dirs(a, j) + world.sentiment_dirs(spans[k].sentiment, j));
      }
    } else {
      random_patch(cfg, rng, row);
    }
  }
  for (double& v : s.patches.data()) v += cfg.jitter * rng.normal();
  return true;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const World world = make_world(cfg);
  Rng rng(derive_seed(seed, "synthetic"));
  Dataset data(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    Sample& s = data[i];
    s.id = cfg.id_prefix + std::to_string(i);
    int attempt = 0;
    while (!try_generate(cfg, world, rng, s)) {
      if (++attempt >= kMaxRetries) {
        throw std::runtime_error("generate_synthetic: could not pack spans into sample " + s.id);
      }
    }
  }

  // Instance noise swaps in another sample's clean image; feature noise
  // then replaces individual patches.
  Rng noise(derive_seed(seed, "noise"));
  if (cfg.p_swap > 0.0 && data.size() > 1) {
    std::vector<Matrix> clean;
    clean.reserve(data.size());
    for (const auto& s : data) clean.push_back(s.patches);
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!noise.bernoulli(cfg.p_swap)) continue;
      auto j = static_cast<std::size_t>(noise.uniform_int(0, static_cast<std::int64_t>(data.size()) - 2));
      if (j >= i) ++j;
      data[i].patches = clean[j];
      data[i].meta.image_swapped = true;
    }
  }
  if (cfg.p_noise_patch > 0.0) {
    for (auto& s : data) {
      for (std::size_t r = 0; r < s.patches.rows(); ++r) {
        if (!noise.bernoulli(cfg.p_noise_patch)) continue;
        random_patch(cfg, noise, s.patches.row(r));
        ++s.meta.noise_patches;
      }
    }
  }
  return data;
}

DatasetFormatError::DatasetFormatError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

void write_dataset(const Dataset& data, std::ostream& out) {
  for (const auto& s : data) {
    json patches = json::array();
    for (std::size_t r = 0; r < s.patches.rows(); ++r) {
      auto row = s.patches.row(r);
      patches.push_back(std::vector<double>(row.begin(), row.end()));
    }
    json tags = json::array();
    for (Tag t : s.gold) tags.push_back(std::string(tag_name(t)));
    json rec = {{"id", s.id},
                {"tokens", s.tokens},
                {"patches", std::move(patches)},
                {"tags", std::move(tags)},
                {"meta",
                 {{"image_swapped", s.meta.image_swapped},
                  {"noise_patches", s.meta.noise_patches},
                  {"text_cues", s.meta.text_cues}}}};
    out << rec.dump() << '\n';
  }
}

namespace {

const json& field(const json& rec, const char* name, std::size_t line) {
  auto it = rec.find(name);
  if (it == rec.end()) throw DatasetFormatError(line, std::string("missing field '") + name + "'");
  return *it;
}

Sample parse_record(const json& rec, std::size_t line) {
  if (!rec.is_object()) throw DatasetFormatError(line, "record is not a JSON object");
  Sample s;
  try {
    s.id = field(rec, "id", line).get<std::string>();
    s.tokens = field(rec, "tokens", line).get<std::vector<std::size_t>>();
    const auto rows = field(rec, "patches", line).get<std::vector<std::vector<double>>>();
    const std::size_t dim = rows.empty() ? 0 : rows.front().size();
    s.patches = Matrix(rows.size(), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != dim) throw DatasetFormatError(line, "ragged patch rows");
      std::copy(rows[r].begin(), rows[r].end(), s.patches.row(r).begin());
    }
    for (const auto& t : field(rec, "tags", line)) {
      const auto tag = parse_tag(t.get<std::string>());
      if (!tag) throw DatasetFormatError(line, "unknown tag '" + t.get<std::string>() + "'");
      s.gold.push_back(*tag);
    }
    const json& meta = field(rec, "meta", line);
    s.meta.image_swapped = meta.value("image_swapped", false);
    s.meta.noise_patches = meta.value("noise_patches", std::size_t{0});
    s.meta.text_cues = meta.value("text_cues", std::size_t{0});
  } catch (const json::exception& e) {
    throw DatasetFormatError(line, e.what());
  }
  if (s.gold.size() != s.tokens.size()) {
    throw DatasetFormatError(line, "tags length " + std::to_string(s.gold.size()) +
                                       " != tokens length " + std::to_string(s.tokens.size()));
  }
  return s;
}

}  // namespace

Dataset read_dataset(std::istream& in) {
  Dataset data;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DatasetFormatError(line, std::string("invalid JSON: ") + e.what());
    }
    data.push_back(parse_record(rec, line));
  }
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path.string());
  write_dataset(data, out);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path.string());
  return read_dataset(in);
}

}  // namespace rng
