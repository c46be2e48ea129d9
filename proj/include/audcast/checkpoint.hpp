#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "audcast/clip.hpp"
#include "audcast/tensor.hpp"

namespace audcast {

// Checkpoint file: magic "ACKP", version u16, config hash u64 (FNV-1a of the
// config text), config block (u32 length + text, ablation flags included),
// named parameter table (u16 name length, name, u8 trainable, u8 rank, u32
// dims..., f32 payload little-endian).

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct CheckpointEntry {
  std::string name;
  Shape shape;
  bool trainable = true;
  std::vector<double> data;
};

struct Checkpoint {
  std::string config_text;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

inline void write_checkpoint(const std::string& path, const std::string& config_text,
                             const ParamStore& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  io::write_magic(os, "ACKP");
  io::write_u16(os, 1);
  const std::uint64_t h = fnv1a64(config_text);
  io::write_u32(os, static_cast<std::uint32_t>(h & 0xFFFFFFFFull));
  io::write_u32(os, static_cast<std::uint32_t>(h >> 32));
  io::write_u32(os, static_cast<std::uint32_t>(config_text.size()));
  os.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  io::write_u32(os, static_cast<std::uint32_t>(store.all().size()));
  for (const auto& p : store.all()) {
    io::write_u16(os, static_cast<std::uint16_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    os.put(p.trainable ? 1 : 0);
    os.put(static_cast<char>(p.tensor.rank()));
    for (int d : p.tensor.shape()) io::write_u32(os, static_cast<std::uint32_t>(d));
    for (double v : p.tensor.data()) io::write_f32(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  io::expect_magic(is, "ACKP", path);
  const auto ver = io::read_u16(is);
  if (ver != 1) throw std::runtime_error(path + ": unsupported checkpoint version");
  const std::uint64_t lo = io::read_u32(is);
  const std::uint64_t hi = io::read_u32(is);
  const std::uint64_t stored_hash = lo | (hi << 32);
  const auto cfg_len = io::read_u32(is);
  Checkpoint ck;
  ck.config_text.resize(cfg_len);
  is.read(ck.config_text.data(), cfg_len);
  if (!is) throw std::runtime_error(path + ": truncated config block");
  if (fnv1a64(ck.config_text) != stored_hash)
    throw std::runtime_error(path + ": config hash mismatch");
  const auto count = io::read_u32(is);
  ck.entries.resize(count);
  for (auto& e : ck.entries) {
    const auto name_len = io::read_u16(is);
    e.name.resize(name_len);
    is.read(e.name.data(), name_len);
    e.trainable = is.get() != 0;
    const int rank = is.get();
    if (rank < 0 || rank > 8) throw std::runtime_error(path + ": bad tensor rank");
    e.shape.resize(static_cast<std::size_t>(rank));
    for (auto& d : e.shape) d = static_cast<int>(io::read_u32(is));
    e.data.resize(shape_numel(e.shape));
    for (auto& v : e.data) v = static_cast<double>(io::read_f32(is));
    if (!is) throw std::runtime_error(path + ": truncated parameter table");
  }
  return ck;
}

// Copies checkpoint values into an existing store; every parameter must be
// present with a matching shape.
inline void load_into_store(const Checkpoint& ck, ParamStore& store) {
  for (auto& p : store.all()) {
    const CheckpointEntry* e = ck.find(p.name);
    if (!e) throw std::runtime_error("checkpoint missing parameter " + p.name);
    if (e->shape != p.tensor.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + p.name);
    p.tensor.data() = e->data;
  }
}

}  // namespace audcast
