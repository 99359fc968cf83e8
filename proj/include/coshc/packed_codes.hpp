#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace coshc {

/// Bit-packed +-1 codes, one row of ceil(bits/64) u64 words per item.
///
/// Bit j of a row lives in word j/64 at position j%64 (least significant
/// first); a set bit encodes +1 and a clear bit -1. Bits at positions >= bits
/// are always zero.
class PackedCodeMatrix {
 public:
  PackedCodeMatrix() = default;
  /// All-(-1) codes.
  PackedCodeMatrix(std::size_t count, std::size_t bits);

  [[nodiscard]] std::size_t count() const noexcept { return count_; }
  [[nodiscard]] std::size_t bits() const noexcept { return bits_; }
  [[nodiscard]] std::size_t words_per_row() const noexcept { return words_; }

  [[nodiscard]] std::span<const std::uint64_t> row(std::size_t i) const noexcept {
    return {words_data_.data() + i * words_, words_};
  }
  [[nodiscard]] std::span<const std::uint64_t> words() const noexcept { return words_data_; }

  [[nodiscard]] bool bit(std::size_t i, std::size_t j) const noexcept {
    return (words_data_[i * words_ + j / 64] >> (j % 64)) & 1u;
  }
  void set_bit(std::size_t i, std::size_t j, bool positive) noexcept;

  /// Copies one row from another matrix with the same bit width.
  void set_row(std::size_t i, std::span<const std::uint64_t> words);

  /// Packs a row-major count x bits matrix of +-1 values.
  static PackedCodeMatrix pack(std::span<const std::int8_t> signs, std::size_t count,
                               std::size_t bits);
  /// Inverse of pack().
  [[nodiscard]] std::vector<std::int8_t> unpack() const;

  [[nodiscard]] PackedCodeMatrix select_rows(std::span<const std::uint32_t> ids) const;

  bool operator==(const PackedCodeMatrix&) const = default;

 private:
  std::size_t count_ = 0;
  std::size_t bits_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> words_data_;
};

/// COSB file: "COSB", u8 version 1, u8 0, u16 0, u64 count, u64 bits, then
/// count rows of ceil(bits/64) little-endian u64 words.
void write_packed_codes(const PackedCodeMatrix& codes, const std::filesystem::path& path);
PackedCodeMatrix read_packed_codes(const std::filesystem::path& path);

}  // namespace coshc
