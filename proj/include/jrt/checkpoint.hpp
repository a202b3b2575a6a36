#pragma once

// Flat binary checkpoints: an 8-byte little-endian header length, a JSON
// header listing each tensor's name, shape and precision plus free-form
// metadata, then the raw tensor data in header order.

#include <filesystem>
#include <string>
#include <vector>

#include "jrt/toy_model.hpp"

namespace jrt {

struct Checkpoint {
  std::string metadata_json = "{}";  // e.g. the model config
  std::vector<NamedTensor<float>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws std::runtime_error on a truncated file, bad header or unsupported precision.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string config_json(const ToyConfig& cfg);
ToyConfig config_from_json(const std::string& json);

}  // namespace jrt
