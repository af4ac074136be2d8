#pragma once

#include <cstdint>
#include <string>

#include "pullsync/errors.hpp"

namespace pullsync {

/// Fixed-width bit vector of at most 64 bits. Index 0 is the least
/// significant bit. Visible parts, clocks and private messages are all
/// BitStrings.
class BitString {
 public:
  static constexpr int kMaxWidth = 64;

  /// Empty placeholder (width 0). Every operation other than assignment and
  /// comparison rejects it.
  constexpr BitString() = default;

  /// Throws ContractError if width is outside [1, 64] or value does not fit.
  BitString(int width, std::uint64_t value);

  static BitString zeros(int width) { return BitString(width, 0); }

  constexpr int width() const noexcept { return width_; }
  constexpr std::uint64_t value() const noexcept { return bits_; }
  constexpr bool empty() const noexcept { return width_ == 0; }

  bool bit(int index) const;
  BitString with_bit(int index, bool b) const;

  /// Bits [lo, lo + count) as a new BitString of width count.
  BitString slice(int lo, int count) const;

  /// `low` occupies bits [0, low.width()), `high` sits above it.
  static BitString concat(const BitString& low, const BitString& high);

  /// Most significant bit first, e.g. "101" for width 3, value 5.
  std::string to_string() const;

  friend constexpr bool operator==(const BitString&, const BitString&) = default;

 private:
  void require_index(int index) const;

  std::uint8_t width_ = 0;
  std::uint64_t bits_ = 0;
};

/// Mask with the low `width` bits set; width in [0, 64].
constexpr std::uint64_t low_mask(int width) noexcept {
  return width >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << width) - 1);
}

/// Bitwise two-of-three on raw words.
constexpr std::uint64_t majority_word(std::uint64_t x, std::uint64_t y, std::uint64_t z) noexcept {
  return (x & y) | (x & z) | (y & z);
}

}  // namespace pullsync
