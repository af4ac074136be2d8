#include "pullsync/dissemination.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pullsync/detail/packing.hpp"

namespace pullsync {

std::uint64_t baseline_period(std::size_t n, double gamma) {
  if (n < 2 || !(gamma > 0.0)) throw ContractError("baseline_period: needs n >= 2 and gamma > 0");
  return static_cast<std::uint64_t>(std::ceil(gamma * std::log2(static_cast<double>(n))));
}

// ---------------------------------------------------------------------------
// Certainty baseline

CertaintyState certainty_protocol_round(CertaintyState state, bool is_source, bool input,
                                        std::span<const CertaintyState> pulled, std::uint64_t clock) {
  if (is_source) return {input, true};
  for (const CertaintyState& p : pulled) {
    if (p.certain) {
      state = {p.output, true};
      break;
    }
  }
  if (clock == 0) state.certain = false;
  return state;
}

namespace {

CertaintyState decode_certainty(const BitString& m) { return {m.bit(0), m.bit(1)}; }

BitString encode_certainty(CertaintyState s) {
  return BitString(2, static_cast<std::uint64_t>(s.output) | (static_cast<std::uint64_t>(s.certain) << 1));
}

}  // namespace

ClockedProtocol certainty_clocked(std::uint64_t period) {
  if (period < 1) throw ContractError("certainty protocol needs a positive period");
  ClockedProtocol p;
  p.name = "certainty";
  p.eta = 2;
  p.ell = 2;
  p.bitwise_independent = false;
  p.modulus = period;
  p.words = {{2, false}};  // certainty bit
  p.canonicalize = [](AgentView& self, std::uint64_t) {
    CertaintyState s{self.output_bit, self.memory[0] != 0};
    if (self.is_source) s = {self.input_bit, true};
    self.memory[0] = s.certain;
    self.output_bit = s.output;
    self.visible = encode_certainty(s);
  };
  p.update = [](AgentView& self, std::span<const BitString> observed, std::uint64_t,
                std::uint64_t clock_after, SplitMix64&) {
    std::array<CertaintyState, 2> pulled{decode_certainty(observed[0]), decode_certainty(observed[1])};
    const CertaintyState s = certainty_protocol_round({self.output_bit, self.memory[0] != 0},
                                                      self.is_source, self.input_bit, pulled, clock_after);
    self.memory[0] = s.certain;
    self.output_bit = s.output;
    self.visible = encode_certainty(s);
  };
  return p;
}

ProtocolSpec certainty_protocol(std::uint64_t period) { return with_oracle_clock(certainty_clocked(period)); }

// ---------------------------------------------------------------------------
// Subphase-sensitive baseline

bool subphase_sensitive_round(bool output, bool is_source, bool input, std::span<const bool> pulled,
                              std::uint64_t clock, std::uint64_t period) {
  if (is_source) return input;
  const bool sensitive_to = clock >= period / 2;
  for (const bool b : pulled) {
    if (b == sensitive_to) return sensitive_to;
  }
  return output;
}

ClockedProtocol subphase_clocked(std::uint64_t period) {
  if (period < 2 || period % 2 != 0) {
    throw ContractError("subphase protocol needs an even period, got " + std::to_string(period));
  }
  ClockedProtocol p;
  p.name = "subphase";
  p.eta = 2;
  p.ell = 1;
  p.bitwise_independent = true;
  p.modulus = period;
  p.canonicalize = [](AgentView& self, std::uint64_t) {
    if (self.is_source) self.output_bit = self.input_bit;
    self.visible = BitString(1, self.output_bit);
  };
  p.update = [period](AgentView& self, std::span<const BitString> observed, std::uint64_t clock_before,
                      std::uint64_t, SplitMix64&) {
    const std::array<bool, 2> pulled{observed[0].bit(0), observed[1].bit(0)};
    self.output_bit = subphase_sensitive_round(self.output_bit, self.is_source, self.input_bit, pulled,
                                               clock_before, period);
    self.visible = BitString(1, self.output_bit);
  };
  return p;
}

ProtocolSpec subphase_protocol(std::uint64_t period) { return with_oracle_clock(subphase_clocked(period)); }

// ---------------------------------------------------------------------------
// Phase-Spread

Phase PhaseSchedule::phase_at(std::uint64_t c) const {
  if (c >= period()) throw ContractError("phase_at: clock outside the period");
  if (c < boosting_len) return {PhaseKind::kBoosting, 0};
  c -= boosting_len;
  if (c < spreading_count * spreading_len) return {PhaseKind::kSpreading, 1 + c / spreading_len};
  return {PhaseKind::kPolling, spreading_count + 1};
}

PhaseSchedule phase_schedule(std::size_t n, double gamma_phase) {
  if (n < 2) throw ContractError("phase_schedule: n must be at least 2");
  if (!(gamma_phase >= 1.0)) throw ContractError("phase_schedule: gamma_phase must be at least 1");
  const double log_n = std::log2(static_cast<double>(n));
  const auto g_log_n = static_cast<std::uint64_t>(std::ceil(gamma_phase * log_n));
  PhaseSchedule s;
  s.boosting_len = 2 * g_log_n;
  s.spreading_count = static_cast<std::uint64_t>(std::ceil(2.0 * log_n));
  s.spreading_len = 2 * static_cast<std::uint64_t>(std::ceil(gamma_phase));
  s.polling_len = g_log_n;
  return s;
}

PhaseSpreadState phase_spread_round(const PhaseSchedule& schedule, PhaseSpreadState state,
                                    bool is_source, bool input, bool pulled,
                                    std::uint64_t clock_before, std::uint64_t clock_after,
                                    bool& output) {
  const std::uint64_t period = schedule.period();
  clock_before %= period;
  clock_after %= period;
  if (is_source) {
    state.speaking = 1;
    state.b1 = input;
  }
  const Phase phase = schedule.phase_at(clock_before);
  const std::optional<bool> cert = certified_bit(pulled, (clock_before & 1U) != 0);

  if (phase.kind == PhaseKind::kPolling) {
    if (cert) {
      std::uint64_t& counter = *cert ? state.c1 : state.c0;
      counter = std::min(counter + 1, period);
    }
  } else {
    if (state.speaking == 0 && state.pending == 0 && cert) {
      state.b1 = *cert;
      state.pending = 1;
    }
    state.c0 = 0;
    state.c1 = 0;
  }

  if (schedule.phase_at(clock_after).index != phase.index && state.pending != 0) {
    state.speaking = 1;
    state.pending = 0;
  }
  if (clock_after == 0) {
    output = state.c1 > state.c0;
    state.c0 = 0;
    state.c1 = 0;
    state.pending = 0;
    if (!is_source) state.speaking = 0;
  }
  return state;
}

namespace {

void show(AgentView& self, const PhaseSpreadState& s, std::uint64_t clock) {
  self.visible = BitString(1, parity_display(s.speaking != 0, s.b1 != 0, (clock & 1U) != 0));
}

}  // namespace

ClockedProtocol phase_spread_clocked(const PhaseSchedule& schedule) {
  using detail::load;
  using detail::store;
  const std::uint64_t period = schedule.period();
  if (period < 2) throw ContractError("phase_spread: empty schedule");

  ClockedProtocol p;
  p.name = "phase-spread";
  p.eta = 2;
  p.ell = 1;
  p.bitwise_independent = true;
  p.modulus = period;
  p.words = {{2, false}, {2, false}, {2, false}, {period + 1, false}, {period + 1, false}};
  p.canonicalize = [](AgentView& self, std::uint64_t clock) {
    auto s = load<PhaseSpreadState>(self.memory);
    if (self.is_source) {
      s.speaking = 1;
      s.b1 = self.input_bit;
    }
    store(s, self.memory);
    show(self, s, clock);
  };
  p.update = [schedule](AgentView& self, std::span<const BitString> observed, std::uint64_t clock_before,
                        std::uint64_t clock_after, SplitMix64&) {
    bool output = self.output_bit;
    const auto s = phase_spread_round(schedule, load<PhaseSpreadState>(self.memory), self.is_source,
                                      self.input_bit, observed[0].bit(0), clock_before, clock_after,
                                      output);
    store(s, self.memory);
    self.output_bit = output;
    show(self, s, clock_after);
  };
  p.speaking = [](const AgentSnapshot& s) { return load<PhaseSpreadState>(s.memory).speaking != 0; };
  return p;
}

ProtocolSpec phase_spread_protocol(const PhaseSchedule& schedule) {
  return with_oracle_clock(phase_spread_clocked(schedule));
}

ProtocolSpec syn_phase_spread_protocol(const SynPhaseSpreadParams& params) {
  const PhaseSchedule schedule = phase_schedule(params.n, params.gamma_phase);
  const ProtocolSpec clock = syn_clock_protocol({schedule.period(), params.n, params.gamma});
  ProtocolSpec spec = emulate(compose_with_clock(clock, phase_spread_clocked(schedule)));
  spec.name = "syn-phase-spread";
  return spec;
}

}  // namespace pullsync
