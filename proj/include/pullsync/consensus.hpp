#pragma once

#include <span>

#include "pullsync/engine.hpp"

namespace pullsync {

/// Binary opinion held by one agent.
struct Opinion {
  bool bit = false;
  friend constexpr bool operator==(Opinion, Opinion) = default;
};

/// Value occurring at least twice among three bits.
constexpr bool maj3(bool a, bool b, bool c) noexcept { return (a && b) || (a && c) || (b && c); }

/// One 3-majority step: own opinion against two pulled ones.
constexpr Opinion maj_consensus_update(Opinion own, std::span<const Opinion, 2> pulled) noexcept {
  return {maj3(own.bit, pulled[0].bit, pulled[1].bit)};
}

/// Stabilizing consensus as a protocol: eta = 2, ell = 1, bitwise independent.
/// The visible bit is the opinion and is mirrored into the output bit.
ProtocolSpec maj_consensus_protocol();

}  // namespace pullsync
