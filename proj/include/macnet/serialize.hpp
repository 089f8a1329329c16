#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "macnet/error.hpp"
#include "macnet/tensor.hpp"

namespace macnet {

// Checkpoint tensor container: named entries of little-endian float32
// values. Layout:
//   magic "MACT" | u32 version | u64 entry count
//   per entry: u32 name length | name bytes | u32 ndim | i64 extents... | f32 values...
inline constexpr char kContainerMagic[4] = {'M', 'A', 'C', 'T'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensorF32 {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

namespace detail {

template <class T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw ParseError("tensor container: truncated integer field");
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(buf[i]) << (8 * i);
  return static_cast<T>(u);
}

inline void write_f32_le(std::ostream& os, float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, sizeof(bits));
  write_le<std::uint32_t>(os, bits);
}

inline float read_f32_le(std::istream& is) {
  const std::uint32_t bits = read_le<std::uint32_t>(is);
  float value;
  std::memcpy(&value, &bits, sizeof(value));
  return value;
}

}  // namespace detail

inline void write_tensor_container(std::ostream& os, const std::vector<NamedTensorF32>& entries) {
  os.write(kContainerMagic, 4);
  detail::write_le<std::uint32_t>(os, kContainerVersion);
  detail::write_le<std::uint64_t>(os, entries.size());
  for (const auto& e : entries) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.shape.size()));
    for (const auto ext : e.shape) detail::write_le<std::int64_t>(os, ext);
    if (static_cast<std::int64_t>(e.values.size()) != shape_numel(e.shape)) {
      throw ContractError("tensor container: entry '" + e.name + "' value count mismatch");
    }
    for (const float v : e.values) detail::write_f32_le(os, v);
  }
  if (!os) throw IoError("tensor container: write failed");
}

inline std::vector<NamedTensorF32> read_tensor_container(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kContainerMagic, 4) != 0) {
    throw ParseError("tensor container: bad magic");
  }
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kContainerVersion) {
    throw ParseError("tensor container: unsupported version " + std::to_string(version));
  }
  const auto count = detail::read_le<std::uint64_t>(is);
  std::vector<NamedTensorF32> entries;
  entries.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensorF32 e;
    const auto name_len = detail::read_le<std::uint32_t>(is);
    e.name.resize(name_len);
    is.read(e.name.data(), name_len);
    const auto ndim = detail::read_le<std::uint32_t>(is);
    e.shape.resize(ndim);
    for (auto& ext : e.shape) ext = detail::read_le<std::int64_t>(is);
    const std::int64_t numel = shape_numel(e.shape);
    if (numel < 0) throw ParseError("tensor container: negative extent in '" + e.name + "'");
    e.values.resize(static_cast<std::size_t>(numel));
    for (auto& v : e.values) v = detail::read_f32_le(is);
    if (!is) throw ParseError("tensor container: truncated entry '" + e.name + "'");
    entries.push_back(std::move(e));
  }
  return entries;
}

inline void save_tensor_container(const std::filesystem::path& path,
                                  const std::vector<NamedTensorF32>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  write_tensor_container(os, entries);
}

inline std::vector<NamedTensorF32> load_tensor_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  return read_tensor_container(is);
}

template <class S>
NamedTensorF32 to_f32_entry(const std::string& name, const Tensor<S>& t) {
  NamedTensorF32 e;
  e.name = name;
  e.shape = t.shape;
  e.values.resize(t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) e.values[i] = static_cast<float>(t.data[i]);
  return e;
}

template <class S>
void from_f32_entry(const NamedTensorF32& e, Tensor<S>& t) {
  if (e.shape != t.shape) {
    throw ShapeError("container entry '" + e.name + "' has shape " + shape_str(e.shape) +
                     ", expected " + shape_str(t.shape));
  }
  for (std::size_t i = 0; i < e.values.size(); ++i) t.data[i] = static_cast<S>(e.values[i]);
}

}  // namespace macnet
