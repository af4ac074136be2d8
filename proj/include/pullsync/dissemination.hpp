#pragma once

// Majority bit dissemination.
//
// Two clocked baselines (a 2-bit certainty protocol and a 1-bit protocol
// whose agents are sensitive to 0 in the first half of each period and to 1
// in the second), Phase-Spread on an agreed clock, and Syn-Phase-Spread,
// which runs Phase-Spread on a Syn-Clock of its own and fits in 3 bits.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pullsync/clocks.hpp"
#include "pullsync/engine.hpp"
#include "pullsync/reducer.hpp"

namespace pullsync {

/// ceil(gamma * log2 n), the period used by the baselines.
std::uint64_t baseline_period(std::size_t n, double gamma);

// ---------------------------------------------------------------------------
// Certainty baseline: message = (output, certainty), bit 0 = output.

struct CertaintyState {
  bool output = false;
  bool certain = false;
  friend bool operator==(const CertaintyState&, const CertaintyState&) = default;
};

/// `clock` is the clock after this round; certainty is cleared when it is 0.
CertaintyState certainty_protocol_round(CertaintyState state, bool is_source, bool input,
                                        std::span<const CertaintyState> pulled, std::uint64_t clock);

ClockedProtocol certainty_clocked(std::uint64_t period);
/// Certainty baseline on an oracle clock of the given period.
ProtocolSpec certainty_protocol(std::uint64_t period);

// ---------------------------------------------------------------------------
// Subphase-sensitive baseline: message = output bit.

/// `clock` is the clock during this round; `period` must be even.
bool subphase_sensitive_round(bool output, bool is_source, bool input, std::span<const bool> pulled,
                              std::uint64_t clock, std::uint64_t period);

ClockedProtocol subphase_clocked(std::uint64_t period);
ProtocolSpec subphase_protocol(std::uint64_t period);

// ---------------------------------------------------------------------------
// Phase-Spread

enum class PhaseKind { kBoosting, kSpreading, kPolling };

struct Phase {
  PhaseKind kind = PhaseKind::kBoosting;
  /// 0 for boosting, 1..spreading_count for spreading, spreading_count + 1 for polling.
  std::uint64_t index = 0;
  friend bool operator==(const Phase&, const Phase&) = default;
};

/// Boosting and spreading phases are twice the nominal length so each pull
/// of the emulated PUSH step gets one round of each parity.
struct PhaseSchedule {
  std::uint64_t boosting_len = 0;
  std::uint64_t spreading_count = 0;
  std::uint64_t spreading_len = 0;
  std::uint64_t polling_len = 0;

  std::uint64_t period() const noexcept {
    return boosting_len + spreading_count * spreading_len + polling_len;
  }
  /// Phase containing clock value c (c < period).
  Phase phase_at(std::uint64_t c) const;
};

/// boosting 2*ceil(g log2 n), ceil(2 log2 n) spreading phases of 2*ceil(g),
/// polling ceil(g log2 n).
PhaseSchedule phase_schedule(std::size_t n, double gamma_phase);

/// Odd parity: only a speaker holding 0 shows 0. Even parity: only a speaker
/// holding 1 shows 1.
constexpr bool parity_display(bool speaking, bool b1, bool parity) noexcept {
  return parity ? !(speaking && !b1) : (speaking && b1);
}

/// The bit a display proves its sender speaks, if any.
constexpr std::optional<bool> certified_bit(bool display, bool parity) noexcept {
  if (parity && !display) return false;
  if (!parity && display) return true;
  return std::nullopt;
}

struct PhaseSpreadState {
  std::uint64_t speaking = 0;
  std::uint64_t b1 = 0;
  std::uint64_t pending = 0;  // certified a speaker; speaks from the next phase
  std::uint64_t c0 = 0;
  std::uint64_t c1 = 0;
};

/// One round. `pulled` is the first pull's display (the second is ignored);
/// clock_before is the clock this round runs under, clock_after the next
/// one. Updates `output` at the end of polling.
PhaseSpreadState phase_spread_round(const PhaseSchedule& schedule, PhaseSpreadState state,
                                    bool is_source, bool input, bool pulled,
                                    std::uint64_t clock_before, std::uint64_t clock_after,
                                    bool& output);

ClockedProtocol phase_spread_clocked(const PhaseSchedule& schedule);
/// Phase-Spread on an oracle clock (2 pulls, 1 bit, second pull ignored).
ProtocolSpec phase_spread_protocol(const PhaseSchedule& schedule);

struct SynPhaseSpreadParams {
  std::size_t n = 0;
  double gamma = 8.0;         // Syn-Clock constant
  double gamma_phase = 20.0;  // Phase-Spread constant
};

/// emulate(Syn-Clock mod period + Phase-Spread bit): eta 2, ell 3.
ProtocolSpec syn_phase_spread_protocol(const SynPhaseSpreadParams& params);

}  // namespace pullsync
