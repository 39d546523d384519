// Binary checkpoints.
//
// Layout: 8-byte magic "I2SML001", 8-byte little-endian manifest length,
// UTF-8 JSON manifest {"config":{..},"tensors":[{"name","shape","offset"}..]}
// (offsets in bytes from the start of the data block), then the raw
// little-endian float64 data of every tensor in manifest order.
#pragma once

#include <filesystem>
#include <string>

#include "i2s/config.hpp"
#include "i2s/model.hpp"

namespace i2s {

struct Checkpoint {
  RunConfig config;
  ModelParams params;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws std::runtime_error on a bad magic, truncated data, or tensors
/// whose names or shapes disagree with the architecture implied by the
/// stored config.
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace i2s
