#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "sardiff/tensor.hpp"
#include "sardiff/unet.hpp"

namespace sardiff {

using nlohmann::json;

inline uint32_t crc32(const uint8_t* data, size_t len, uint32_t crc = 0) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

// Checkpoint container: magic, version, a JSON config blob, a manifest of
// (name, shape, float offset) entries, the raw little-endian float32 payload,
// and a trailing CRC32 over everything before it.
struct Checkpoint {
  std::string kind;
  json config;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw std::runtime_error("checkpoint: missing tensor " + name);
  }
};

namespace ckfile {
inline constexpr char kMagic[8] = {'S', 'D', 'C', 'K', 'P', 'T', '1', '\0'};
inline constexpr uint32_t kVersion = 1;
}  // namespace ckfile

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::string buf;
  auto put = [&buf](const void* p, size_t n) {
    buf.append(reinterpret_cast<const char*>(p), n);
  };
  auto put_u32 = [&put](uint32_t v) { put(&v, 4); };
  auto put_u64 = [&put](uint64_t v) { put(&v, 8); };
  auto put_str = [&](const std::string& s) {
    put_u32(static_cast<uint32_t>(s.size()));
    put(s.data(), s.size());
  };

  put(ckfile::kMagic, 8);
  put_u32(ckfile::kVersion);
  json hdr;
  hdr["kind"] = ck.kind;
  hdr["config"] = ck.config;
  put_str(hdr.dump());

  put_u64(ck.tensors.size());
  uint64_t offset = 0;
  for (const auto& [name, t] : ck.tensors) {
    put_str(name);
    put_u64(static_cast<uint64_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u64(static_cast<uint64_t>(t.dim(i)));
    put_u64(offset);
    offset += static_cast<uint64_t>(t.size());
  }
  put_u64(offset);   // total payload floats
  for (const auto& [name, t] : ck.tensors)
    put(t.data(), sizeof(float) * static_cast<size_t>(t.size()));

  const uint32_t crc = crc32(reinterpret_cast<const uint8_t*>(buf.data()), buf.size());

  std::ofstream f(path, std::ios::binary);
  ensure(f.is_open(), "save_checkpoint: cannot open " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  f.write(reinterpret_cast<const char*>(&crc), 4);
  ensure(f.good(), "save_checkpoint: write failure");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  ensure(f.is_open(), "load_checkpoint: cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ensure(buf.size() >= 16, "load_checkpoint: file truncated");

  const uint32_t stored_crc =
      *reinterpret_cast<const uint32_t*>(buf.data() + buf.size() - 4);
  const uint32_t actual_crc =
      crc32(reinterpret_cast<const uint8_t*>(buf.data()), buf.size() - 4);
  ensure(stored_crc == actual_crc, "load_checkpoint: checksum mismatch (corrupt file)");

  size_t pos = 0;
  auto get = [&](void* p, size_t n) {
    ensure(pos + n <= buf.size() - 4, "load_checkpoint: file truncated");
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  };
  auto get_u32 = [&get] {
    uint32_t v;
    get(&v, 4);
    return v;
  };
  auto get_u64 = [&get] {
    uint64_t v;
    get(&v, 8);
    return v;
  };
  auto get_str = [&]() {
    uint32_t n = get_u32();
    ensure(pos + n <= buf.size() - 4, "load_checkpoint: file truncated");
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  };

  char magic[8];
  get(magic, 8);
  ensure(std::memcmp(magic, ckfile::kMagic, 8) == 0, "load_checkpoint: bad magic");
  const uint32_t version = get_u32();
  ensure(version == ckfile::kVersion,
         "load_checkpoint: unsupported format version " + std::to_string(version));

  json hdr = json::parse(get_str());
  Checkpoint ck;
  ck.kind = hdr.at("kind").get<std::string>();
  ck.config = hdr.at("config");

  const uint64_t num = get_u64();
  struct Entry {
    std::string name;
    Shape shape;
    uint64_t offset;
    int64_t count;
  };
  std::vector<Entry> entries;
  for (uint64_t i = 0; i < num; ++i) {
    Entry e;
    e.name = get_str();
    const uint64_t rank = get_u64();
    ensure(rank <= 8, "load_checkpoint: bad tensor rank");
    e.count = 1;
    for (uint64_t r = 0; r < rank; ++r) {
      e.shape.push_back(static_cast<int64_t>(get_u64()));
      e.count *= e.shape.back();
    }
    e.offset = get_u64();
    entries.push_back(std::move(e));
  }
  const uint64_t payload_floats = get_u64();
  for (const auto& e : entries) {
    ensure(e.offset + static_cast<uint64_t>(e.count) <= payload_floats,
           "load_checkpoint: manifest offset out of bounds");
    Tensor<float> t(e.shape);
    std::memcpy(t.data(), buf.data() + pos + e.offset * sizeof(float),
                sizeof(float) * static_cast<size_t>(e.count));
    ck.tensors.emplace_back(e.name, std::move(t));
  }
  ensure(pos + payload_floats * sizeof(float) <= buf.size() - 4,
         "load_checkpoint: file truncated");
  return ck;
}

// --- UNetConfig <-> JSON ----------------------------------------------------

inline json unet_config_to_json(const UNetConfig& c) {
  return json{{"in_channels", c.in_channels},
              {"base_channels", c.base_channels},
              {"channel_multipliers", c.channel_multipliers},
              {"res_blocks_total_per_side", c.res_blocks_total_per_side},
              {"attention_resolution", c.attention_resolution},
              {"dropout_p", c.dropout_p},
              {"num_classes", c.num_classes},
              {"time_embed_dim", c.time_embed_dim},
              {"image_size", c.image_size}};
}

inline UNetConfig unet_config_from_json(const json& j) {
  UNetConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.channel_multipliers = j.at("channel_multipliers").get<std::vector<int>>();
  c.res_blocks_total_per_side = j.at("res_blocks_total_per_side").get<int>();
  c.attention_resolution = j.at("attention_resolution").get<int>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.num_classes = j.at("num_classes").get<int>();
  c.time_embed_dim = j.at("time_embed_dim").get<int>();
  c.image_size = j.at("image_size").get<int>();
  return c;
}

inline constexpr const char* kDenoiserKind = "denoiser_unet";

inline void save_model(const std::filesystem::path& path, DenoiserModel<float>& model,
                       json extra = json::object()) {
  Checkpoint ck;
  ck.kind = kDenoiserKind;
  ck.config = unet_config_to_json(model.config());
  if (!extra.empty()) ck.config["extra"] = std::move(extra);
  for (auto& p : model.parameters()) ck.tensors.emplace_back(p.name, *p.value);
  save_checkpoint(path, ck);
}

inline DenoiserModel<float> model_from_checkpoint(const Checkpoint& ck) {
  ensure(ck.kind == kDenoiserKind,
         "checkpoint kind mismatch: expected " + std::string(kDenoiserKind) + ", got " +
             ck.kind);
  UNetConfig cfg = unet_config_from_json(ck.config);
  DenoiserModel<float> model = DenoiserModel<float>::build(cfg, 0);
  auto params = model.parameters();
  ensure(params.size() == ck.tensors.size(),
         "checkpoint config conflict: parameter manifest has " +
             std::to_string(ck.tensors.size()) + " entries, config implies " +
             std::to_string(params.size()));
  for (auto& p : params) {
    const Tensor<float>& stored = ck.tensor(p.name);
    ensure(stored.shape() == p.value->shape(),
           "checkpoint config conflict: shape mismatch for " + p.name);
    *p.value = stored;
  }
  return model;
}

inline DenoiserModel<float> load_model(const std::filesystem::path& path) {
  return model_from_checkpoint(load_checkpoint(path));
}

}  // namespace sardiff
