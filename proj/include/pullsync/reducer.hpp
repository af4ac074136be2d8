#pragma once

// Message reduction: compiles an eta-pull, ell-bit protocol into a 2-pull
// protocol showing ceil(log2((eta/2) * ell)) + 1 bits. The compiled agent
// keeps the wrapped protocol's message private and shows one bit of it per
// round, chosen by a small Syn-Simple phase clock; pulled bits are filed
// into per-message inboxes and the wrapped update runs once per phase.
//
// Also here: the BIT-model runner used as the reference for the compiler,
// and composition of a clock protocol with a clock-driven payload.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pullsync/engine.hpp"

namespace pullsync {

struct PhaseStructure {
  std::uint64_t phase_len = 0;
  std::uint64_t subphase_count = 0;
  std::uint64_t subphase_len = 0;
  friend bool operator==(const PhaseStructure&, const PhaseStructure&) = default;
};

/// ((eta/2) * ell, eta/2, ell). Throws ContractError for odd or non-positive eta.
PhaseStructure phase_structure(int eta, int ell);

/// Largest wrapped pull count emulate accepts (after lifting odd eta).
inline constexpr int kMaxEmulatedEta = 16;

/// Word offsets of the compiled agent's private memory.
struct EmulLayout {
  int eta = 0;         // wrapped pull count after lifting to even
  int ell = 0;         // wrapped message width
  int clock_bits = 0;  // width of the phase clock C
  std::uint64_t phase_len = 0;

  static constexpr std::size_t kClock = 0;
  static constexpr std::size_t kMessage = 1;
  static constexpr std::size_t kInbox = 2;
  std::size_t inner_offset() const noexcept { return kInbox + static_cast<std::size_t>(eta); }
  std::uint64_t clock_modulus() const noexcept { return std::uint64_t{1} << clock_bits; }
  int visible_bits() const noexcept { return clock_bits + 1; }
};

EmulLayout emul_layout(const ProtocolSpec& inner);

/// The compiled protocol. Its phase clock has width max(1, ceil(log2 phase_len)).
/// Throws ContractError if `inner` is not bitwise independent or needs more
/// than kMaxEmulatedEta pulls.
ProtocolSpec emulate(const ProtocolSpec& inner);

/// The wrapped protocol's state inside one compiled agent.
AgentSnapshot emul_inner_snapshot(const EmulLayout& layout, const AgentSnapshot& outer);

/// Runs `rounds` rounds in BIT mode; element t is the population after t rounds.
std::vector<Population> run_bit_model(Population pop, const ProtocolSpec& spec,
                                      std::uint64_t master_seed, std::uint64_t rounds,
                                      StepOptions options = {});

// ---------------------------------------------------------------------------
// Composition with a clock

using ClockedUpdateFn =
    std::function<void(AgentView& self, std::span<const BitString> observed,
                       std::uint64_t clock_before, std::uint64_t clock_after, SplitMix64& rng)>;
using ClockedCanonicalizeFn = std::function<void(AgentView& self, std::uint64_t clock)>;

/// A protocol that acts on a shared clock modulo `modulus` it does not own.
struct ClockedProtocol {
  std::string name;
  int eta = 2;
  int ell = 1;
  bool bitwise_independent = false;
  std::uint64_t modulus = 0;
  std::vector<WordDomain> words;
  std::uint64_t principal_bound = 2;
  /// Writes the visible part (and anything else derived) for a given clock.
  ClockedCanonicalizeFn canonicalize;
  ClockedUpdateFn update;
  SpeakingFn speaking;
};

/// Runs `clock` and `payload` side by side. The clock's bits occupy the low
/// end of the visible part and its memory comes first; the payload sees the
/// clock before and after the clock's own update. The result is bitwise
/// independent when both parts are.
ProtocolSpec compose_with_clock(const ProtocolSpec& clock, const ClockedProtocol& payload);

/// Payload driven by an external clock every agent agrees on. The clock is a
/// shared memory word advanced by one per round; it is not visible.
ProtocolSpec with_oracle_clock(const ClockedProtocol& payload);

/// Syn-Simple on log2(T) bits, compiled repeatedly until messages have at
/// most 3 bits. Cross-check for syn_intermediate_protocol.
ProtocolSpec syn_intermediate_nested_protocol(std::uint64_t modulus);

}  // namespace pullsync
