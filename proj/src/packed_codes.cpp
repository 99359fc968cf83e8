#include "coshc/packed_codes.hpp"

#include <cstring>
#include <fstream>

#include "coshc/binary_io.hpp"
#include "coshc/error.hpp"

namespace coshc {

namespace {
constexpr char kMagic[4] = {'C', 'O', 'S', 'B'};
constexpr std::uint8_t kVersion = 1;
}  // namespace

PackedCodeMatrix::PackedCodeMatrix(std::size_t count, std::size_t bits)
    : count_(count), bits_(bits), words_((bits + 63) / 64), words_data_(count * words_, 0) {
  if (bits == 0) {
    throw InvalidArgument("code length must be positive");
  }
}

void PackedCodeMatrix::set_bit(std::size_t i, std::size_t j, bool positive) noexcept {
  auto& word = words_data_[i * words_ + j / 64];
  const std::uint64_t mask = std::uint64_t{1} << (j % 64);
  word = positive ? (word | mask) : (word & ~mask);
}

void PackedCodeMatrix::set_row(std::size_t i, std::span<const std::uint64_t> words) {
  if (words.size() != words_) {
    throw ShapeError("packed row has " + std::to_string(words.size()) + " words, expected " +
                     std::to_string(words_));
  }
  std::copy(words.begin(), words.end(), words_data_.begin() + static_cast<std::ptrdiff_t>(i * words_));
}

PackedCodeMatrix PackedCodeMatrix::pack(std::span<const std::int8_t> signs, std::size_t count,
                                        std::size_t bits) {
  if (signs.size() != count * bits) {
    throw ShapeError("pack: expected " + std::to_string(count * bits) + " values");
  }
  PackedCodeMatrix out(count, bits);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < bits; ++j) {
      const auto s = signs[i * bits + j];
      if (s != 1 && s != -1) {
        throw InvalidArgument("pack: values must be +1 or -1");
      }
      out.set_bit(i, j, s > 0);
    }
  }
  return out;
}

std::vector<std::int8_t> PackedCodeMatrix::unpack() const {
  std::vector<std::int8_t> out(count_ * bits_);
  for (std::size_t i = 0; i < count_; ++i) {
    for (std::size_t j = 0; j < bits_; ++j) {
      out[i * bits_ + j] = bit(i, j) ? 1 : -1;
    }
  }
  return out;
}

PackedCodeMatrix PackedCodeMatrix::select_rows(std::span<const std::uint32_t> ids) const {
  PackedCodeMatrix out(ids.size(), bits_);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= count_) {
      throw InvalidArgument("code row " + std::to_string(ids[r]) + " out of range");
    }
    out.set_row(r, row(ids[r]));
  }
  return out;
}

void write_packed_codes(const PackedCodeMatrix& codes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  out.write(kMagic, sizeof(kMagic));
  io::put_le<std::uint8_t>(out, kVersion);
  io::put_le<std::uint8_t>(out, 0);
  io::put_le<std::uint16_t>(out, 0);
  io::put_le<std::uint64_t>(out, codes.count());
  io::put_le<std::uint64_t>(out, codes.bits());
  io::put_u64_block(out, codes.words());
  if (!out.flush()) {
    throw IoError("write failed: " + path.string());
  }
}

PackedCodeMatrix read_packed_codes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  const std::string where = path.string() + ": ";
  char magic[4] = {};
  if (!in.read(magic, sizeof(magic))) {
    throw FormatError(where + "truncated header");
  }
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(where + "bad magic");
  }
  std::uint8_t version = 0;
  std::uint8_t reserved = 0;
  std::uint16_t pad = 0;
  std::uint64_t count = 0;
  std::uint64_t bits = 0;
  if (!io::get_le(in, version) || !io::get_le(in, reserved) || !io::get_le(in, pad) ||
      !io::get_le(in, count) || !io::get_le(in, bits)) {
    throw FormatError(where + "truncated header");
  }
  if (version != kVersion) {
    throw FormatError(where + "version mismatch (found " + std::to_string(version) + ")");
  }
  if (reserved != 0 || pad != 0) {
    throw FormatError(where + "nonzero reserved header bytes");
  }
  if (bits == 0) {
    throw FormatError(where + "code length must be positive");
  }
  const std::uint64_t words = (bits + 63) / 64;
  const std::uint64_t available = io::remaining_bytes(in);
  if (count > available / sizeof(std::uint64_t) / words) {
    throw FormatError(where + "truncated payload");
  }
  if (available > count * words * sizeof(std::uint64_t)) {
    throw FormatError(where + "trailing bytes after payload");
  }
  std::vector<std::uint64_t> row(words);
  PackedCodeMatrix codes(count, bits);
  const std::size_t tail = bits % 64;
  const std::uint64_t pad_mask = tail == 0 ? 0 : ~((std::uint64_t{1} << tail) - 1);
  for (std::uint64_t i = 0; i < count; ++i) {
    if (!io::get_u64_block(in, row)) {
      throw FormatError(where + "truncated payload");
    }
    if ((row.back() & pad_mask) != 0) {
      throw FormatError(where + "nonzero pad bits in row " + std::to_string(i));
    }
    codes.set_row(i, row);
  }
  return codes;
}

}  // namespace coshc
