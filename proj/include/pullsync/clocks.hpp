#pragma once

// Clock synchronization modulo T.
//
//   Syn-Simple        per-bit 3-majority on a log2(T)-bit clock, then +1.
//   Syn-Intermediate  a stack of clocks C_1..C_tau where each lower clock
//                     indexes one bit of the level above it; the visible part
//                     is the 2-bit bottom clock plus that one bit.
//   Syn-Clock         a Syn-Intermediate clock C' mod T' plus a slow counter Q
//                     mod T whose bits are agreed on one at a time through a
//                     fourth visible bit; output (C' + Q*T') mod T. Passed
//                     through the message reducer it needs 3 bits.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pullsync/engine.hpp"

namespace pullsync {

/// A value modulo `modulus`; 0 <= value < modulus.
class ClockValue {
 public:
  ClockValue(std::uint64_t value, std::uint64_t modulus);

  std::uint64_t value() const noexcept { return value_; }
  std::uint64_t modulus() const noexcept { return modulus_; }
  ClockValue advanced(std::uint64_t by = 1) const;

  friend bool operator==(const ClockValue&, const ClockValue&) = default;

 private:
  std::uint64_t value_;
  std::uint64_t modulus_;
};

constexpr bool is_power_of_two(std::uint64_t x) noexcept { return x != 0 && (x & (x - 1)) == 0; }

/// floor(log2 x) for x >= 1.
int floor_log2(std::uint64_t x) noexcept;
/// ceil(log2 x) for x >= 1.
int ceil_log2(std::uint64_t x) noexcept;

/// Per-bit two-of-three; all widths must match.
BitString bitwise_majority(const BitString& x, const BitString& y, const BitString& z);

// ---------------------------------------------------------------------------
// Syn-Simple

struct SynSimpleState {
  BitString clock;  // log2(T) bits; T = 2^clock.width()

  /// Throws ContractError unless T is a power of two with 2 <= T <= 2^63.
  static SynSimpleState make(std::uint64_t modulus, std::uint64_t value);
  std::uint64_t modulus() const noexcept { return std::uint64_t{1} << clock.width(); }
};

/// clock <- (bitwise_majority(own, pulled[0], pulled[1]) + 1) mod T.
SynSimpleState syn_simple_update(const SynSimpleState& state, std::span<const BitString> pulled);

/// The clock is the whole visible part. With increment = false the clock only
/// takes majorities; that variant exists for the bit-0 coupling check.
ProtocolSpec syn_simple_protocol(std::uint64_t modulus, bool increment = true);

// ---------------------------------------------------------------------------
// Recursion bookkeeping

/// l_1 = log2 T, l_{i+1} = ceil(log2 l_i) + 1, stopping at 3.
struct EllSequence {
  std::vector<int> lengths;
  int tau() const noexcept { return static_cast<int>(lengths.size()); }
};

/// Sequence for T = 2^log2_modulus. log2_modulus <= 3 gives the single entry
/// [log2_modulus]. Throws ContractError for log2_modulus < 1.
EllSequence ell_sequence(int log2_modulus);

/// Number of iterations of x -> ceil(log2 x) + 1 needed to reach a value <= 3.
int iterations_to_three(int x);

/// (c_small + q * T') mod T, where c_small runs modulo T' and q modulo T.
ClockValue compose_clock(const ClockValue& c_small, const ClockValue& q, std::uint64_t modulus);

/// Smallest power of two strictly greater than
/// log2 T * (gamma * log2 n + gamma * max(1, log2 log2 T)).
std::uint64_t t_prime(std::uint64_t modulus, std::uint64_t n, double gamma);

// ---------------------------------------------------------------------------
// Syn-Intermediate

inline constexpr int kMaxClockLevels = 4;

/// Widths of the clock stack for a power-of-two modulus T. Level 0 is C_1
/// (log2 T bits, message = the clock alone). Level k >= 1 holds
/// l_{k+1} - 1 clock bits and its message appends one data bit, for l_{k+1}
/// bits in total. The bottom level's message is the visible part.
class SynIntermediateLayout {
 public:
  explicit SynIntermediateLayout(std::uint64_t modulus);

  std::uint64_t modulus() const noexcept { return modulus_; }
  int levels() const noexcept { return levels_; }
  int clock_bits(int level) const { return clock_bits_.at(static_cast<std::size_t>(level)); }
  std::uint64_t clock_modulus(int level) const { return std::uint64_t{1} << clock_bits(level); }
  int message_bits(int level) const { return level == 0 ? clock_bits(0) : clock_bits(level) + 1; }
  int visible_bits() const { return message_bits(levels_ - 1); }
  /// Rounds between two advances of C_1 once synchronized.
  std::uint64_t superphase() const noexcept { return superphase_; }
  const EllSequence& sequence() const noexcept { return sequence_; }

 private:
  std::uint64_t modulus_;
  EllSequence sequence_;
  int levels_;
  std::array<int, kMaxClockLevels> clock_bits_{};
  std::uint64_t superphase_ = 1;
};

/// Private memory of one Syn-Intermediate agent. Buffer k (k < levels - 1)
/// collects the pulled bits of level k's clock, one position per bit; a
/// position missing when the buffer is consumed is filled with the agent's
/// own bit and counted in `underflow`.
struct SynIntermediateState {
  std::array<std::uint64_t, kMaxClockLevels> clocks{};
  std::array<std::array<std::uint64_t, kMaxClockLevels>, 2> buffer_bits{};
  std::array<std::array<std::uint64_t, kMaxClockLevels>, 2> buffer_filled{};
  std::uint64_t underflow = 0;
};

/// b_level: bit (C_level mod |message(level-1)|) of level (level-1)'s message.
bool syn_intermediate_data_bit(const SynIntermediateLayout& layout,
                               const SynIntermediateState& state, int level);

/// Bottom message: (C_tau, b_tau), or C_1 alone when there is a single level.
BitString syn_intermediate_visible(const SynIntermediateLayout& layout,
                                   const SynIntermediateState& state);

/// Per-round clock modulo T: C_1 * superphase + (C_2..C_tau as a mixed-radix
/// counter), reduced mod T.
std::uint64_t syn_intermediate_clock(const SynIntermediateLayout& layout,
                                     const SynIntermediateState& state);

/// One round on two pulled visible parts: majority + increment on the bottom
/// clock, file the pulled data bits under the position they encode, then
/// cascade upwards through every clock that wrapped to zero.
SynIntermediateState syn_intermediate_round(const SynIntermediateLayout& layout,
                                            SynIntermediateState state,
                                            std::span<const BitString> pulled);

/// Sets the clocks so that the decoded clock equals `value`; buffers cleared.
SynIntermediateState syn_intermediate_at(const SynIntermediateLayout& layout, std::uint64_t value);

ProtocolSpec syn_intermediate_protocol(std::uint64_t modulus);

// ---------------------------------------------------------------------------
// Syn-Clock

struct SynClockParams {
  std::uint64_t modulus = 0;  // T, any integer >= 2
  std::uint64_t n = 0;
  double gamma = 8.0;
};

class SynClockLayout {
 public:
  explicit SynClockLayout(const SynClockParams& params);

  std::uint64_t modulus() const noexcept { return params_.modulus; }
  const SynClockParams& params() const noexcept { return params_; }
  /// Modulus of C'; t_prime(T, n, gamma), raised to 8 when smaller.
  std::uint64_t small_modulus() const noexcept { return inner_.modulus(); }
  /// ceil(gamma * log2 n): rounds each bit of Q stays on display.
  std::uint64_t display_phase() const noexcept { return display_phase_; }
  /// ceil(log2 T): width of Q.
  int q_bits() const noexcept { return q_bits_; }
  const SynIntermediateLayout& inner() const noexcept { return inner_; }
  int visible_bits() const noexcept { return inner_.visible_bits() + 1; }

 private:
  SynClockParams params_;
  SynIntermediateLayout inner_;
  std::uint64_t display_phase_;
  int q_bits_;
};

struct SynClockState {
  SynIntermediateState inner;
  std::uint64_t q = 0;
};

/// floor(C' / display_phase) mod q_bits.
std::uint64_t syn_clock_display_index(std::uint64_t c_prime, std::uint64_t display_phase,
                                      int q_bits);

SynClockState syn_clock_round(const SynClockLayout& layout, SynClockState state,
                              std::span<const BitString> pulled);
BitString syn_clock_visible(const SynClockLayout& layout, const SynClockState& state);
std::uint64_t syn_clock_output(const SynClockLayout& layout, const SynClockState& state);

/// The 4-bit protocol (inner Syn-Intermediate bits plus the Q display bit).
ProtocolSpec syn_clock_4bit_protocol(const SynClockParams& params);
/// The 4-bit protocol passed through the message reducer: eta 2, ell 3.
ProtocolSpec syn_clock_protocol(const SynClockParams& params);

}  // namespace pullsync
