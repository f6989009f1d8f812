#include "rng/config.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace rng {

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config " + path.string() + ": " + e.what());
  }
  RunConfig cfg = j.get<RunConfig>();
  cfg.model.validate();
  cfg.train.validate();
  cfg.synth.validate();
  return cfg;
}

namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const ModelConfig& cfg) {
  nlohmann::ordered_json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["config"] = nlohmann::json(cfg);
  nlohmann::ordered_json manifest = nlohmann::ordered_json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, p] : params) {
    manifest[name] = {{"rows", p.value.rows()}, {"cols", p.value.cols()}, {"offset", offset}};
    offset += p.value.size() * sizeof(double);
  }
  header["manifest"] = manifest;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << header.dump() << '\n';
  for (const auto& [name, p] : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(p.value[i]));
      char buf[8];
      std::memcpy(buf, &bits, 8);
      out.write(buf, 8);
    }
  }
  if (!out) throw CheckpointError("short write on checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError("checkpoint has no header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
  if (header.value("format_version", -1) != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported checkpoint format_version");
  }
  Checkpoint ck;
  ck.config = header.at("config").get<ModelConfig>();
  ck.params = init_model(ck.config, 0);
  const nlohmann::json& manifest = header.at("manifest");
  if (manifest.size() != ck.params.count()) {
    throw CheckpointError("manifest lists " + std::to_string(manifest.size()) + " parameters, model has " +
                          std::to_string(ck.params.count()));
  }
  const std::streamoff data_start = in.tellg();
  for (auto& [name, p] : ck.params) {
    if (!manifest.contains(name)) throw CheckpointError("manifest is missing parameter " + name);
    const nlohmann::json& m = manifest.at(name);
    const auto rows = m.at("rows").get<std::size_t>();
    const auto cols = m.at("cols").get<std::size_t>();
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw CheckpointError("parameter " + name + " is " + std::to_string(rows) + "x" + std::to_string(cols) +
                            ", expected " + p.value.shape_str());
    }
    in.seekg(data_start + static_cast<std::streamoff>(m.at("offset").get<std::uint64_t>()));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      char buf[8];
      if (!in.read(buf, 8)) throw CheckpointError("checkpoint truncated in parameter " + name);
      std::uint64_t bits;
      std::memcpy(&bits, buf, 8);
      p.value[i] = std::bit_cast<double>(to_little_endian(bits));
    }
  }
  return ck;
}

}  // namespace rng
