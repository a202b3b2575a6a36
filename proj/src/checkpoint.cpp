#include "jrt/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace jrt {
namespace {

static_assert(sizeof(float) == 4, "checkpoints store IEEE single precision");

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw std::runtime_error("checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["metadata"] = nlohmann::json::parse(ckpt.metadata_json);
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : ckpt.tensors) {
    header["tensors"].push_back(
        {{"name", t.name}, {"shape", t.value.shape()}, {"precision", "fp32"}});
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string());
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ckpt.tensors) {
    out.write(reinterpret_cast<const char*>(t.value.data().data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  const std::uint64_t len = get_u64(in);
  if (len > (std::uint64_t{1} << 30)) throw std::runtime_error("checkpoint: implausible header size");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw std::runtime_error("checkpoint: truncated header");
  }
  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.metadata_json = header.at("metadata").dump();
    for (const auto& entry : header.at("tensors")) {
      if (entry.at("precision").get<std::string>() != "fp32") {
        throw std::runtime_error("checkpoint: unsupported precision");
      }
      NamedTensor<float> t;
      t.name = entry.at("name").get<std::string>();
      t.value = Tensor<float>(entry.at("shape").get<std::vector<std::size_t>>());
      ckpt.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: bad header: ") + e.what());
  }
  for (auto& t : ckpt.tensors) {
    if (!in.read(reinterpret_cast<char*>(t.value.data().data()),
                 static_cast<std::streamsize>(t.value.size() * sizeof(float)))) {
      throw std::runtime_error("checkpoint: truncated data for " + t.name);
    }
  }
  return ckpt;
}

std::string config_json(const ToyConfig& cfg) {
  nlohmann::json j{{"n_layers", cfg.n_layers},       {"d_model", cfg.d_model},
                   {"feature_dim", cfg.feature_dim}, {"n_heads", cfg.n_heads},
                   {"conv_filter", cfg.conv_filter}, {"causal", cfg.causal},
                   {"vocab", cfg.vocab},
                   {"precision", cfg.precision == Precision::fp32 ? "fp32" : "fp64"}};
  return j.dump();
}

ToyConfig config_from_json(const std::string& json) {
  try {
    const auto j = nlohmann::json::parse(json);
    ToyConfig cfg;
    cfg.n_layers = j.at("n_layers").get<std::size_t>();
    cfg.d_model = j.at("d_model").get<std::size_t>();
    cfg.feature_dim = j.at("feature_dim").get<std::size_t>();
    cfg.n_heads = j.at("n_heads").get<std::size_t>();
    cfg.conv_filter = j.at("conv_filter").get<std::size_t>();
    cfg.causal = j.at("causal").get<bool>();
    cfg.vocab = j.at("vocab").get<int>();
    cfg.precision = parse_precision(j.at("precision").get<std::string>());
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
}

}  // namespace jrt
