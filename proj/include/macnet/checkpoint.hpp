#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "macnet/error.hpp"
#include "macnet/model.hpp"
#include "macnet/serialize.hpp"

namespace macnet {

// Checkpoint file: the tensor container prefixed by a config block and
// training metadata. Optimizer velocities, when present, are container
// entries named "opt/<param>". Values are stored as float32; a double-
// precision session resumes from the quantized values.
//   magic "MACK" | u32 version | u64 config length | config key=value text
//   | u64 seed | i64 epoch | u8 has_optimizer | tensor container
inline constexpr char kCheckpointMagic[4] = {'M', 'A', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class S>
struct LoadedCheckpoint {
  MacNetModel<S> model;
  std::vector<std::vector<S>> velocities;  // empty when absent
  std::int64_t epoch = -1;                 // last completed epoch
  std::uint64_t seed = 0;
};

template <class S>
void save_checkpoint(const std::filesystem::path& path, const MacNetModel<S>& model,
                     const std::vector<std::vector<S>>* velocities, std::int64_t epoch,
                     std::uint64_t train_seed) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path.string());
  os.write(kCheckpointMagic, 4);
  detail::write_le<std::uint32_t>(os, kCheckpointVersion);
  const std::string cfg_text = model.config().to_key_values();
  detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(cfg_text.size()));
  os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  detail::write_le<std::uint64_t>(os, train_seed);
  detail::write_le<std::int64_t>(os, epoch);
  const std::uint8_t has_opt = velocities ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&has_opt), 1);

  std::vector<NamedTensorF32> entries;
  const auto& ps = model.params();
  for (const auto& [name, t] : ps.params) entries.push_back(to_f32_entry(name, *t));
  for (const auto& [name, t] : ps.buffers) entries.push_back(to_f32_entry(name, *t));
  if (velocities) {
    if (velocities->size() != ps.params.size()) {
      throw ContractError("checkpoint: velocity count does not match parameter count");
    }
    for (std::size_t i = 0; i < velocities->size(); ++i) {
      NamedTensorF32 e;
      e.name = "opt/" + ps.params[i].first;
      e.shape = ps.params[i].second->shape;
      e.values.resize((*velocities)[i].size());
      for (std::size_t j = 0; j < e.values.size(); ++j) {
        e.values[j] = static_cast<float>((*velocities)[i][j]);
      }
      entries.push_back(std::move(e));
    }
  }
  write_tensor_container(os, entries);
  if (!os) throw IoError("short write: " + path.string());
}

template <class S>
LoadedCheckpoint<S> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint not found: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw ParseError("checkpoint: bad magic in " + path.string());
  }
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto cfg_len = detail::read_le<std::uint64_t>(is);
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  const auto seed = detail::read_le<std::uint64_t>(is);
  const auto epoch = detail::read_le<std::int64_t>(is);
  std::uint8_t has_opt = 0;
  is.read(reinterpret_cast<char*>(&has_opt), 1);
  if (!is) throw ParseError("checkpoint: truncated header in " + path.string());

  const MacNetConfig cfg = MacNetConfig::from_key_values(cfg_text);
  LoadedCheckpoint<S> loaded{MacNetModel<S>::init(cfg, seed), {}, epoch, seed};

  auto entries = read_tensor_container(is);
  std::map<std::string, const NamedTensorF32*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  auto take = [&](const std::string& name) -> const NamedTensorF32& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ParseError("checkpoint: missing entry '" + name + "'");
    return *it->second;
  };

  auto& ps = loaded.model.params();
  // Stored extents must match the extents the config derives.
  for (auto& [name, t] : ps.params) from_f32_entry(take(name), *t);
  for (auto& [name, t] : ps.buffers) from_f32_entry(take(name), *t);
  if (has_opt) {
    loaded.velocities.resize(ps.params.size());
    for (std::size_t i = 0; i < ps.params.size(); ++i) {
      const auto& e = take("opt/" + ps.params[i].first);
      if (e.shape != ps.params[i].second->shape) {
        throw ShapeError("checkpoint: velocity shape mismatch for '" + ps.params[i].first + "'");
      }
      loaded.velocities[i].resize(e.values.size());
      for (std::size_t j = 0; j < e.values.size(); ++j) {
        loaded.velocities[i][j] = static_cast<S>(e.values[j]);
      }
    }
  }
  return loaded;
}

}  // namespace macnet
