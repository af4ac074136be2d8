#include "pullsync/clocks.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "pullsync/consensus.hpp"
#include "pullsync/detail/packing.hpp"

namespace pullsync {

ClockValue::ClockValue(std::uint64_t value, std::uint64_t modulus) : value_(value), modulus_(modulus) {
  if (modulus == 0) throw ContractError("clock modulus must be positive");
  if (value >= modulus) {
    throw ContractError("clock value " + std::to_string(value) + " outside [0, " +
                        std::to_string(modulus) + ")");
  }
}

ClockValue ClockValue::advanced(std::uint64_t by) const {
  const auto sum = (static_cast<unsigned __int128>(value_) + by) % modulus_;
  return {static_cast<std::uint64_t>(sum), modulus_};
}

int floor_log2(std::uint64_t x) noexcept { return 63 - std::countl_zero(x); }

int ceil_log2(std::uint64_t x) noexcept { return x <= 1 ? 0 : floor_log2(x - 1) + 1; }

BitString bitwise_majority(const BitString& x, const BitString& y, const BitString& z) {
  if (x.empty() || x.width() != y.width() || x.width() != z.width()) {
    throw ContractError("bitwise_majority: width mismatch (" + std::to_string(x.width()) + ", " +
                        std::to_string(y.width()) + ", " + std::to_string(z.width()) + ")");
  }
  return BitString(x.width(), majority_word(x.value(), y.value(), z.value()));
}

// ---------------------------------------------------------------------------
// Syn-Simple

namespace {

int checked_log2_modulus(std::uint64_t modulus) {
  if (!is_power_of_two(modulus) || modulus < 2) {
    throw ContractError("Syn-Simple needs a power-of-two modulus >= 2, got " +
                        std::to_string(modulus));
  }
  return floor_log2(modulus);
}

}  // namespace

SynSimpleState SynSimpleState::make(std::uint64_t modulus, std::uint64_t value) {
  const int bits = checked_log2_modulus(modulus);
  return {BitString(bits, value)};
}

SynSimpleState syn_simple_update(const SynSimpleState& state, std::span<const BitString> pulled) {
  if (pulled.size() != 2) throw ContractError("Syn-Simple pulls exactly two clocks");
  const BitString m = bitwise_majority(state.clock, pulled[0], pulled[1]);
  return {BitString(m.width(), (m.value() + 1) & low_mask(m.width()))};
}

ProtocolSpec syn_simple_protocol(std::uint64_t modulus, bool increment) {
  const int bits = checked_log2_modulus(modulus);
  ProtocolSpec spec;
  spec.name = increment ? "syn-simple" : "syn-simple-frozen";
  spec.eta = 2;
  spec.ell = bits;
  spec.bitwise_independent = true;
  spec.init_space.visible_is_state = true;
  spec.init_space.principal_bound = modulus;
  spec.update = [increment](AgentView& self, std::span<const BitString> observed, SplitMix64&) {
    if (increment) {
      self.visible = syn_simple_update({self.visible}, observed).clock;
    } else {
      self.visible = bitwise_majority(self.visible, observed[0], observed[1]);
    }
  };
  spec.clock_modulus = modulus;
  spec.clock = [](const AgentSnapshot& s) { return s.visible.value(); };
  spec.output = OutputKind::kClock;
  return spec;
}

// ---------------------------------------------------------------------------
// Recursion bookkeeping

int iterations_to_three(int x) {
  int steps = 0;
  while (x > 3) {
    x = ceil_log2(static_cast<std::uint64_t>(x)) + 1;
    ++steps;
  }
  return steps;
}

EllSequence ell_sequence(int log2_modulus) {
  if (log2_modulus < 1) throw ContractError("ell_sequence: log2 T must be at least 1");
  EllSequence seq{{log2_modulus}};
  while (seq.lengths.back() > 3) {
    seq.lengths.push_back(ceil_log2(static_cast<std::uint64_t>(seq.lengths.back())) + 1);
  }
  return seq;
}

ClockValue compose_clock(const ClockValue& c_small, const ClockValue& q, std::uint64_t modulus) {
  if (modulus == 0) throw ContractError("compose_clock: modulus must be positive");
  const unsigned __int128 sum =
      static_cast<unsigned __int128>(c_small.value()) +
      static_cast<unsigned __int128>(q.value()) * c_small.modulus();
  return {static_cast<std::uint64_t>(sum % modulus), modulus};
}

std::uint64_t t_prime(std::uint64_t modulus, std::uint64_t n, double gamma) {
  if (modulus < 2 || n < 2 || !(gamma > 0.0)) {
    throw ContractError("t_prime needs T >= 2, n >= 2, gamma > 0");
  }
  const double log_t = std::log2(static_cast<double>(modulus));
  const double loglog_t = std::max(1.0, std::log2(log_t));
  const double bound = log_t * (gamma * std::log2(static_cast<double>(n)) + gamma * loglog_t);
  if (!(bound < 9.2e18)) throw ContractError("t_prime: modulus overflows 64 bits");
  std::uint64_t p = 1;
  while (static_cast<double>(p) <= bound) p <<= 1;
  return p;
}

// ---------------------------------------------------------------------------
// Syn-Intermediate

SynIntermediateLayout::SynIntermediateLayout(std::uint64_t modulus)
    : modulus_(modulus), sequence_(ell_sequence(checked_log2_modulus(modulus))) {
  levels_ = sequence_.tau();
  if (levels_ > kMaxClockLevels) throw ContractError("Syn-Intermediate: too many levels");
  clock_bits_[0] = sequence_.lengths[0];
  for (int k = 1; k < levels_; ++k) {
    clock_bits_[static_cast<std::size_t>(k)] = sequence_.lengths[static_cast<std::size_t>(k)] - 1;
    superphase_ <<= clock_bits_[static_cast<std::size_t>(k)];
  }
}

namespace {

std::uint64_t message_value(const SynIntermediateLayout& layout, const SynIntermediateState& s,
                            int level);

bool data_bit(const SynIntermediateLayout& layout, const SynIntermediateState& s, int level) {
  const auto len = static_cast<std::uint64_t>(layout.message_bits(level - 1));
  const std::uint64_t pos = s.clocks[static_cast<std::size_t>(level)] % len;
  return ((message_value(layout, s, level - 1) >> pos) & 1U) != 0;
}

// Level 0 sends its clock; level k >= 1 sends (C_k, b_k).
std::uint64_t message_value(const SynIntermediateLayout& layout, const SynIntermediateState& s,
                            int level) {
  const std::uint64_t c = s.clocks[static_cast<std::size_t>(level)];
  if (level == 0) return c;
  return c | (static_cast<std::uint64_t>(data_bit(layout, s, level)) << layout.clock_bits(level));
}

}  // namespace

bool syn_intermediate_data_bit(const SynIntermediateLayout& layout,
                               const SynIntermediateState& state, int level) {
  if (level < 1 || level >= layout.levels()) throw ContractError("no data bit at this level");
  return data_bit(layout, state, level);
}

BitString syn_intermediate_visible(const SynIntermediateLayout& layout,
                                   const SynIntermediateState& state) {
  const int bottom = layout.levels() - 1;
  return BitString(layout.message_bits(bottom), message_value(layout, state, bottom));
}

std::uint64_t syn_intermediate_clock(const SynIntermediateLayout& layout,
                                     const SynIntermediateState& state) {
  unsigned __int128 low = 0;
  for (int k = 1; k < layout.levels(); ++k) {
    low = (low << layout.clock_bits(k)) | state.clocks[static_cast<std::size_t>(k)];
  }
  const unsigned __int128 total =
      static_cast<unsigned __int128>(state.clocks[0]) * layout.superphase() + low;
  return static_cast<std::uint64_t>(total % layout.modulus());
}

SynIntermediateState syn_intermediate_round(const SynIntermediateLayout& layout,
                                            SynIntermediateState state,
                                            std::span<const BitString> pulled) {
  if (pulled.size() != 2) throw ContractError("Syn-Intermediate pulls exactly two messages");
  const int bottom = layout.levels() - 1;
  const int bottom_bits = layout.clock_bits(bottom);

  if (bottom > 0) {
    // The pulled data bit sits at position C_bottom of message (bottom - 1).
    // If that position is itself a data bit, it is a bit of the message one
    // level further up; follow the chain with the agent's own clocks.
    int level = bottom - 1;
    std::uint64_t pos = state.clocks[static_cast<std::size_t>(bottom)];
    bool keep = true;
    while (true) {
      if (pos >= static_cast<std::uint64_t>(layout.message_bits(level))) {
        keep = false;
        break;
      }
      if (level == 0 || pos < static_cast<std::uint64_t>(layout.clock_bits(level))) break;
      pos = state.clocks[static_cast<std::size_t>(level)];
      --level;
    }
    if (keep) {
      const auto lv = static_cast<std::size_t>(level);
      for (std::size_t d = 0; d < 2; ++d) {
        const std::uint64_t b = (pulled[d].value() >> bottom_bits) & 1U;
        state.buffer_bits[d][lv] = (state.buffer_bits[d][lv] & ~(std::uint64_t{1} << pos)) | (b << pos);
        state.buffer_filled[d][lv] |= std::uint64_t{1} << pos;
      }
    }
  }

  const std::uint64_t mask = low_mask(bottom_bits);
  auto& c_bottom = state.clocks[static_cast<std::size_t>(bottom)];
  c_bottom = (majority_word(c_bottom, pulled[0].value() & mask, pulled[1].value() & mask) + 1) & mask;

  for (int k = bottom; k >= 1 && state.clocks[static_cast<std::size_t>(k)] == 0; --k) {
    const auto up = static_cast<std::size_t>(k - 1);
    const std::uint64_t up_mask = low_mask(layout.clock_bits(k - 1));
    const std::uint64_t own = state.clocks[up];
    std::array<std::uint64_t, 2> seen{};
    for (std::size_t d = 0; d < 2; ++d) {
      const std::uint64_t filled = state.buffer_filled[d][up] & up_mask;
      seen[d] = (state.buffer_bits[d][up] & filled) | (own & ~filled);
      state.underflow += static_cast<std::uint64_t>(std::popcount(up_mask & ~filled));
      state.buffer_bits[d][up] = 0;
      state.buffer_filled[d][up] = 0;
    }
    state.clocks[up] = (majority_word(own, seen[0], seen[1]) + 1) & up_mask;
  }
  return state;
}

SynIntermediateState syn_intermediate_at(const SynIntermediateLayout& layout, std::uint64_t value) {
  value %= layout.modulus();
  SynIntermediateState s;
  std::uint64_t low = value % layout.superphase();
  for (int k = layout.levels() - 1; k >= 1; --k) {
    s.clocks[static_cast<std::size_t>(k)] = low & low_mask(layout.clock_bits(k));
    low >>= layout.clock_bits(k);
  }
  s.clocks[0] = (value / layout.superphase()) & low_mask(layout.clock_bits(0));
  return s;
}

namespace {

// Memory domain of a Syn-Intermediate state, word by word.
std::vector<WordDomain> syn_intermediate_domain(const SynIntermediateLayout& layout) {
  std::vector<WordDomain> words;
  for (int k = 0; k < kMaxClockLevels; ++k) {
    words.push_back({k < layout.levels() ? layout.clock_modulus(k) : 1, false});
  }
  for (int rep = 0; rep < 2; ++rep) {  // buffer_bits, then buffer_filled
    for (int d = 0; d < 2; ++d) {
      for (int k = 0; k < kMaxClockLevels; ++k) {
        const bool used = k < layout.levels() - 1;
        const int width = used ? layout.clock_bits(k) : 0;
        words.push_back({width >= 64 ? 0 : (std::uint64_t{1} << width), false});
      }
    }
  }
  words.push_back({1, false});  // underflow counter starts at zero
  return words;
}

}  // namespace

ProtocolSpec syn_intermediate_protocol(std::uint64_t modulus) {
  const SynIntermediateLayout layout(modulus);
  using detail::load;
  using detail::store;
  static_assert(detail::words_of<SynIntermediateState>() == 21);

  ProtocolSpec spec;
  spec.name = "syn-intermediate";
  spec.eta = 2;
  spec.ell = layout.visible_bits();
  spec.bitwise_independent = true;
  spec.init_space.words = syn_intermediate_domain(layout);
  spec.init_space.principal_bound = modulus;
  spec.init_space.canonicalize = [layout](AgentView& self) {
    self.visible = syn_intermediate_visible(layout, load<SynIntermediateState>(self.memory));
  };
  spec.update = [layout](AgentView& self, std::span<const BitString> observed, SplitMix64&) {
    const auto next = syn_intermediate_round(layout, load<SynIntermediateState>(self.memory), observed);
    store(next, self.memory);
    self.visible = syn_intermediate_visible(layout, next);
  };
  spec.clock_modulus = modulus;
  spec.clock = [layout](const AgentSnapshot& s) {
    return syn_intermediate_clock(layout, load<SynIntermediateState>(s.memory));
  };
  spec.output = OutputKind::kClock;
  return spec;
}

// ---------------------------------------------------------------------------
// Syn-Clock

namespace {

SynClockParams checked(const SynClockParams& p) {
  if (p.modulus < 2) throw ContractError("Syn-Clock needs T >= 2");
  if (p.n < 2) throw ContractError("Syn-Clock needs n >= 2");
  if (!(p.gamma > 0.0)) throw ContractError("Syn-Clock needs gamma > 0");
  return p;
}

}  // namespace

SynClockLayout::SynClockLayout(const SynClockParams& params)
    : params_(checked(params)),
      inner_(std::max<std::uint64_t>(t_prime(params.modulus, params.n, params.gamma), 8)),
      display_phase_(static_cast<std::uint64_t>(
          std::ceil(params.gamma * std::log2(static_cast<double>(params.n))))),
      q_bits_(std::max(1, ceil_log2(params.modulus))) {}

std::uint64_t syn_clock_display_index(std::uint64_t c_prime, std::uint64_t display_phase,
                                      int q_bits) {
  if (display_phase == 0 || q_bits < 1) throw ContractError("display index: empty schedule");
  return (c_prime / display_phase) % static_cast<std::uint64_t>(q_bits);
}

SynClockState syn_clock_round(const SynClockLayout& layout, SynClockState state,
                              std::span<const BitString> pulled) {
  if (pulled.size() != 2) throw ContractError("Syn-Clock pulls exactly two messages");
  const int inner_bits = layout.inner().visible_bits();
  const std::uint64_t j = syn_clock_display_index(syn_intermediate_clock(layout.inner(), state.inner),
                                                  layout.display_phase(), layout.q_bits());
  const bool own = ((state.q >> j) & 1U) != 0;
  const bool b = maj3(own, pulled[0].bit(inner_bits), pulled[1].bit(inner_bits));
  state.q = (state.q & ~(std::uint64_t{1} << j)) | (static_cast<std::uint64_t>(b) << j);

  const std::array<BitString, 2> inner_pulled{pulled[0].slice(0, inner_bits),
                                              pulled[1].slice(0, inner_bits)};
  state.inner = syn_intermediate_round(layout.inner(), state.inner, inner_pulled);
  if (syn_intermediate_clock(layout.inner(), state.inner) == 0) {
    state.q = (state.q + 1) % layout.modulus();
  }
  return state;
}

BitString syn_clock_visible(const SynClockLayout& layout, const SynClockState& state) {
  const std::uint64_t j = syn_clock_display_index(syn_intermediate_clock(layout.inner(), state.inner),
                                                  layout.display_phase(), layout.q_bits());
  return BitString::concat(syn_intermediate_visible(layout.inner(), state.inner),
                           BitString(1, (state.q >> j) & 1U));
}

std::uint64_t syn_clock_output(const SynClockLayout& layout, const SynClockState& state) {
  const ClockValue c_small(syn_intermediate_clock(layout.inner(), state.inner),
                           layout.small_modulus());
  const ClockValue q(state.q % layout.modulus(), layout.modulus());
  return compose_clock(c_small, q, layout.modulus()).value();
}

ProtocolSpec syn_clock_4bit_protocol(const SynClockParams& params) {
  const SynClockLayout layout(params);
  using detail::load;
  using detail::store;

  ProtocolSpec spec;
  spec.name = "syn-clock-4bit";
  spec.eta = 2;
  spec.ell = layout.visible_bits();
  spec.bitwise_independent = true;
  spec.init_space.words = syn_intermediate_domain(layout.inner());
  spec.init_space.words.push_back({std::uint64_t{1} << layout.q_bits(), false});
  spec.init_space.principal_bound = params.modulus;
  spec.init_space.canonicalize = [layout](AgentView& self) {
    self.visible = syn_clock_visible(layout, load<SynClockState>(self.memory));
  };
  spec.update = [layout](AgentView& self, std::span<const BitString> observed, SplitMix64&) {
    const auto next = syn_clock_round(layout, load<SynClockState>(self.memory), observed);
    store(next, self.memory);
    self.visible = syn_clock_visible(layout, next);
  };
  spec.clock_modulus = params.modulus;
  spec.clock = [layout](const AgentSnapshot& s) {
    return syn_clock_output(layout, load<SynClockState>(s.memory));
  };
  spec.output = OutputKind::kClock;
  return spec;
}

}  // namespace pullsync
