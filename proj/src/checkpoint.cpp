#include "mcoref/checkpoint.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace mcoref {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'C', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint format error: truncated header");
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint format error: truncated header");
  return v;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["arch"] = arch_name(cfg.arch);
  j["d"] = cfg.d;
  j["d_w"] = cfg.d_w;
  j["d_m"] = cfg.d_m;
  j["d_o"] = cfg.d_o;
  j["d_v"] = cfg.d_v;
  j["use_traces"] = cfg.use_traces;
  j["mlp_hidden"] = cfg.mlp_hidden;
  j["transformer"] = {{"layers", cfg.transformer.layers},
                      {"heads", cfg.transformer.heads},
                      {"ffn_dim1", cfg.transformer.ffn_dim1},
                      {"ffn_dim2", cfg.transformer.ffn_dim2}};
  j["attention"] = cfg.attention == AttentionMode::kCross ? "cross" : "average";
  j["normalize_attention"] = cfg.normalize_attention;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  json j = json::parse(text);
  ModelConfig cfg;
  cfg.arch = arch_from_name(j.at("arch").get<std::string>());
  cfg.d = j.at("d");
  cfg.d_w = j.at("d_w");
  cfg.d_m = j.at("d_m");
  cfg.d_o = j.at("d_o");
  cfg.d_v = j.at("d_v");
  cfg.use_traces = j.at("use_traces");
  cfg.mlp_hidden = j.at("mlp_hidden");
  cfg.transformer.layers = j.at("transformer").at("layers");
  cfg.transformer.heads = j.at("transformer").at("heads");
  cfg.transformer.ffn_dim1 = j.at("transformer").at("ffn_dim1");
  cfg.transformer.ffn_dim2 = j.at("transformer").at("ffn_dim2");
  const std::string att = j.at("attention");
  if (att == "cross") cfg.attention = AttentionMode::kCross;
  else if (att == "average") cfg.attention = AttentionMode::kAverage;
  else throw std::runtime_error("checkpoint format error: unknown attention mode " + att);
  cfg.normalize_attention = j.at("normalize_attention");
  return cfg;
}

void save_checkpoint(const ModelState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  json meta;
  meta["config"] = json::parse(model_config_to_json(state.config));
  meta["init_seed"] = state.init_seed;
  const std::string meta_text = meta.dump();
  write_u64(out, meta_text.size());
  out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  write_u64(out, state.params.size());
  for (const auto& [name, mat] : state.params) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, static_cast<std::uint64_t>(mat.rows()));
    write_u64(out, static_cast<std::uint64_t>(mat.cols()));
    // row-major payload
    for (Eigen::Index i = 0; i < mat.rows(); ++i)
      for (Eigen::Index j = 0; j < mat.cols(); ++j) {
        float v = mat(i, j);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  }
  if (!out) throw std::runtime_error("I/O error writing checkpoint: " + path);
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint format error: bad magic");
  const std::uint32_t version = read_u32(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint format error: unsupported version " +
                             std::to_string(version));
  const std::uint64_t meta_len = read_u64(in);
  std::string meta_text(meta_len, '\0');
  in.read(meta_text.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw std::runtime_error("checkpoint format error: truncated metadata");

  ModelState state;
  try {
    json meta = json::parse(meta_text);
    state.config = model_config_from_json(meta.at("config").dump());
    state.init_seed = meta.at("init_seed");
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint format error: ") + e.what());
  }

  const std::uint64_t count = read_u64(in);
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = static_cast<Eigen::Index>(read_u64(in));
    const auto cols = static_cast<Eigen::Index>(read_u64(in));
    ModelState::Mat m(rows, cols);
    std::vector<float> buf(static_cast<size_t>(rows) * static_cast<size_t>(cols));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint format error: truncated tensor payload");
    size_t at = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = buf[at++];
    state.params.emplace(std::move(name), std::move(m));
  }

  // the stored tensor set must exactly realize the stored config
  std::vector<ParamSpec> specs = parameter_specs(state.config);
  if (specs.size() != state.params.size())
    throw std::runtime_error("checkpoint load error: tensor set does not match config");
  for (const ParamSpec& spec : specs) {
    auto it = state.params.find(spec.name);
    if (it == state.params.end())
      throw std::runtime_error("checkpoint load error: missing tensor " + spec.name);
    if (it->second.rows() != spec.rows || it->second.cols() != spec.cols)
      throw std::runtime_error("checkpoint load error: shape mismatch for " + spec.name);
  }
  return state;
}

}  // namespace mcoref
