#include "coshc/binary_io.hpp"

#include <cstdio>
#include <fstream>

#include "coshc/error.hpp"

namespace coshc::io {

void put_f32_block(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) {
      put_le(out, std::bit_cast<std::uint32_t>(v));
    }
  }
}

bool get_f32_block(std::istream& in, std::span<float> out) {
  if constexpr (std::endian::native == std::endian::little) {
    return static_cast<bool>(in.read(reinterpret_cast<char*>(out.data()),
                                     static_cast<std::streamsize>(out.size_bytes())));
  } else {
    for (float& v : out) {
      std::uint32_t bits = 0;
      if (!get_le(in, bits)) {
        return false;
      }
      v = std::bit_cast<float>(bits);
    }
    return true;
  }
}

void put_u64_block(std::ostream& out, std::span<const std::uint64_t> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (auto v : values) {
      put_le(out, v);
    }
  }
}

bool get_u64_block(std::istream& in, std::span<std::uint64_t> out) {
  if constexpr (std::endian::native == std::endian::little) {
    return static_cast<bool>(in.read(reinterpret_cast<char*>(out.data()),
                                     static_cast<std::streamsize>(out.size_bytes())));
  } else {
    for (auto& v : out) {
      if (!get_le(in, v)) {
        return false;
      }
    }
    return true;
  }
}

std::uint64_t remaining_bytes(std::istream& in) {
  const auto here = in.tellg();
  in.seekg(0, std::ios::end);
  const auto end = in.tellg();
  in.seekg(here);
  return end > here ? static_cast<std::uint64_t>(end - here) : 0;
}

void write_u32_array(const std::filesystem::path& path, std::span<const std::uint32_t> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  put_le<std::uint64_t>(out, values.size());
  for (auto v : values) {
    put_le(out, v);
  }
  if (!out.flush()) {
    throw IoError("write failed: " + path.string());
  }
}

std::vector<std::uint32_t> read_u32_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  std::uint64_t count = 0;
  if (!get_le(in, count)) {
    throw FormatError(path.string() + ": truncated header");
  }
  if (remaining_bytes(in) != count * sizeof(std::uint32_t)) {
    throw FormatError(path.string() + ": payload size does not match count " +
                      std::to_string(count));
  }
  std::vector<std::uint32_t> values(count);
  for (auto& v : values) {
    get_le(in, v);
  }
  return values;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const auto got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

std::string checksum_hex(std::uint64_t checksum) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(checksum));
  return buf;
}

}  // namespace coshc::io
