#pragma once

// Little-endian primitives shared by the COSH/COSB/u32-array file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace coshc::io {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((u >> (8 * i)) & 0xFFu);
  }
  out.write(bytes, sizeof(T));
}

template <typename T>
bool get_le(std::istream& in, T& value) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    return false;
  }
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<U>(bytes[i]) << (8 * i);
  }
  value = static_cast<T>(u);
  return true;
}

/// Writes f32 values little-endian.
void put_f32_block(std::ostream& out, std::span<const float> values);
/// Reads exactly `out.size()` f32 values; false on short read.
bool get_f32_block(std::istream& in, std::span<float> out);

/// Writes u64 values little-endian.
void put_u64_block(std::ostream& out, std::span<const std::uint64_t> values);
bool get_u64_block(std::istream& in, std::span<std::uint64_t> out);

/// Bytes left between the stream's read position and its end.
std::uint64_t remaining_bytes(std::istream& in);

/// u32 array file: u64 LE count followed by `count` u32 LE values.
void write_u32_array(const std::filesystem::path& path, std::span<const std::uint32_t> values);
std::vector<std::uint32_t> read_u32_array(const std::filesystem::path& path);

/// 64-bit FNV-1a over the file's bytes.
std::uint64_t file_checksum(const std::filesystem::path& path);
std::string checksum_hex(std::uint64_t checksum);

}  // namespace coshc::io
