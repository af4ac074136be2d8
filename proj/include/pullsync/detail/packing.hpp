#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <type_traits>

namespace pullsync::detail {

// Protocol states are plain structs of 64-bit words copied in and out of the
// population's flat memory.
template <class S>
concept PackedState = std::is_trivially_copyable_v<S> && sizeof(S) % sizeof(std::uint64_t) == 0;

template <PackedState S>
constexpr std::size_t words_of() {
  return sizeof(S) / sizeof(std::uint64_t);
}

template <PackedState S>
S load(std::span<const std::uint64_t> memory) {
  S s;
  std::memcpy(static_cast<void*>(&s), memory.data(), sizeof(S));
  return s;
}

template <PackedState S>
void store(const S& s, std::span<std::uint64_t> memory) {
  std::memcpy(memory.data(), &s, sizeof(S));
}

}  // namespace pullsync::detail
