#include "i2s/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace i2s {

namespace {

constexpr char kMagic[8] = {'I', '2', 'S', 'M', 'L', '0', '0', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::ordered_json manifest;
  manifest["config"] = config_to_json(ckpt.config);
  manifest["tensors"] = nlohmann::ordered_json::array();
  std::string data;
  ckpt.params.for_each([&](const std::string& name, const Tensor& t) {
    nlohmann::ordered_json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = data.size();
    manifest["tensors"].push_back(e);
    for (double v : t.values()) put_u64(data, std::bit_cast<std::uint64_t>(v));
  });
  const std::string text = manifest.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  out += data;
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("not an I2SML001 checkpoint");
  }
  const std::uint64_t len = get_u64(bytes, 8);
  if (len > bytes.size() - 16) throw std::runtime_error("checkpoint manifest is truncated");
  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint manifest: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.config = config_from_json(manifest.at("config"));
  ckpt.params = ModelParams::zeros(ckpt.config.dims);
  const std::size_t data_start = 16 + len;
  const auto& entries = manifest.at("tensors");
  const auto names = ckpt.params.names();
  auto tensors = ckpt.params.tensors();
  if (entries.size() != tensors.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(entries.size()) +
                             " tensors, architecture needs " + std::to_string(tensors.size()));
  }
  std::size_t expected_end = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& e = entries[i];
    const auto name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    const auto offset = e.at("offset").get<std::size_t>();
    if (name != names[i] || shape != tensors[i]->shape()) {
      throw std::runtime_error("checkpoint tensor " + name + " " + shape_string(shape) +
                               " does not match expected " + names[i] + " " +
                               shape_string(tensors[i]->shape()));
    }
    const std::size_t n = tensors[i]->size();
    if (data_start + offset + 8 * n > bytes.size()) {
      throw std::runtime_error("checkpoint data for " + name + " is truncated");
    }
    auto values = tensors[i]->values();
    for (std::size_t k = 0; k < n; ++k) {
      values[k] = std::bit_cast<double>(get_u64(bytes, data_start + offset + 8 * k));
    }
    expected_end = std::max(expected_end, offset + 8 * n);
  }
  if (data_start + expected_end != bytes.size()) {
    throw std::runtime_error("checkpoint has trailing bytes");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace i2s
