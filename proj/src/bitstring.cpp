#include "pullsync/bitstring.hpp"

#include <sstream>

namespace pullsync {

namespace {

std::string join(const std::vector<std::string>& lines) {
  std::ostringstream out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out << "; ";
    out << lines[i];
  }
  return out.str();
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> diagnostics)
    : std::runtime_error(join(diagnostics)), diagnostics_(std::move(diagnostics)) {}

BitString::BitString(int width, std::uint64_t value) {
  if (width < 1 || width > kMaxWidth) {
    throw ContractError("BitString width must be in [1, 64], got " + std::to_string(width));
  }
  if ((value & ~low_mask(width)) != 0) {
    throw ContractError("value " + std::to_string(value) + " does not fit in " +
                        std::to_string(width) + " bits");
  }
  width_ = static_cast<std::uint8_t>(width);
  bits_ = value;
}

void BitString::require_index(int index) const {
  if (index < 0 || index >= width_) {
    throw ContractError("bit index " + std::to_string(index) + " out of range for width " +
                        std::to_string(width_));
  }
}

bool BitString::bit(int index) const {
  require_index(index);
  return ((bits_ >> index) & 1U) != 0;
}

BitString BitString::with_bit(int index, bool b) const {
  require_index(index);
  BitString out = *this;
  const std::uint64_t m = std::uint64_t{1} << index;
  out.bits_ = b ? (bits_ | m) : (bits_ & ~m);
  return out;
}

BitString BitString::slice(int lo, int count) const {
  if (lo < 0 || count < 1 || lo + count > width_) {
    throw ContractError("slice [" + std::to_string(lo) + ", " + std::to_string(lo + count) +
                        ") out of range for width " + std::to_string(width_));
  }
  return BitString(count, (bits_ >> lo) & low_mask(count));
}

BitString BitString::concat(const BitString& low, const BitString& high) {
  const int w = low.width() + high.width();
  if (low.empty() || high.empty() || w > kMaxWidth) {
    throw ContractError("concat of widths " + std::to_string(low.width()) + " and " +
                        std::to_string(high.width()) + " is not representable");
  }
  return BitString(w, low.value() | (high.value() << low.width()));
}

std::string BitString::to_string() const {
  std::string s(width_, '0');
  for (int i = 0; i < width_; ++i) {
    if ((bits_ >> i) & 1U) s[width_ - 1 - i] = '1';
  }
  return s;
}

}  // namespace pullsync
