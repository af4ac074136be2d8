#include "pullsync/reducer.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "pullsync/clocks.hpp"

namespace pullsync {

PhaseStructure phase_structure(int eta, int ell) {
  if (eta < 2 || eta % 2 != 0) {
    throw ContractError("phase_structure: eta must be even and positive, got " + std::to_string(eta));
  }
  if (ell < 1) throw ContractError("phase_structure: ell must be positive");
  const auto half = static_cast<std::uint64_t>(eta / 2);
  const auto len = static_cast<std::uint64_t>(ell);
  return {half * len, half, len};
}

EmulLayout emul_layout(const ProtocolSpec& inner) {
  EmulLayout layout;
  layout.eta = inner.eta + (inner.eta % 2);
  layout.ell = inner.ell;
  layout.phase_len = phase_structure(layout.eta, inner.ell).phase_len;
  layout.clock_bits = std::max(1, ceil_log2(layout.phase_len));
  return layout;
}

AgentSnapshot emul_inner_snapshot(const EmulLayout& layout, const AgentSnapshot& outer) {
  return {BitString(layout.ell, outer.memory[EmulLayout::kMessage]),
          outer.memory.subspan(layout.inner_offset()), outer.is_source, outer.input_bit,
          outer.output_bit};
}

namespace {

BitString emul_visible(const EmulLayout& layout, std::uint64_t clock, std::uint64_t message) {
  const auto pos = clock % static_cast<std::uint64_t>(layout.ell);
  return BitString(layout.visible_bits(), clock | (((message >> pos) & 1U) << layout.clock_bits));
}

AgentView inner_view(const EmulLayout& layout, AgentView& outer) {
  return {BitString(layout.ell, outer.memory[EmulLayout::kMessage]),
          outer.memory.subspan(layout.inner_offset()), outer.is_source, outer.input_bit,
          outer.output_bit};
}

void absorb(const EmulLayout& layout, AgentView& outer, const AgentView& inner) {
  outer.memory[EmulLayout::kMessage] = inner.visible.value();
  outer.is_source = inner.is_source;
  outer.input_bit = inner.input_bit;
  outer.output_bit = inner.output_bit;
  (void)layout;
}

}  // namespace

ProtocolSpec emulate(const ProtocolSpec& inner) {
  if (!inner.bitwise_independent) {
    throw ContractError("emulate: '" + inner.name + "' is not bitwise independent");
  }
  if (inner.eta < 1 || inner.eta + (inner.eta % 2) > kMaxEmulatedEta) {
    throw ContractError("emulate: unsupported pull count " + std::to_string(inner.eta));
  }
  const EmulLayout layout = emul_layout(inner);
  const std::uint64_t message_bound = inner.ell >= 64 ? 0 : (std::uint64_t{1} << inner.ell);

  ProtocolSpec spec;
  spec.name = "emul(" + inner.name + ")";
  spec.eta = 2;
  spec.ell = layout.visible_bits();
  spec.bitwise_independent = true;
  spec.output = inner.output;

  InitSpace& space = spec.init_space;
  space.words.push_back({layout.clock_modulus(), false});
  space.words.push_back({message_bound, false});
  for (int m = 0; m < layout.eta; ++m) space.words.push_back({message_bound, false});
  space.words.insert(space.words.end(), inner.init_space.words.begin(), inner.init_space.words.end());
  space.principal_bound = inner.init_space.principal_bound;
  space.canonicalize = [layout, canon = inner.init_space.canonicalize](AgentView& self) {
    AgentView in = inner_view(layout, self);
    if (canon) canon(in);
    absorb(layout, self, in);
    self.visible = emul_visible(layout, self.memory[EmulLayout::kClock],
                                self.memory[EmulLayout::kMessage]);
  };

  spec.update = [layout, update = inner.update, inner_eta = inner.eta](
                    AgentView& self, std::span<const BitString> observed, SplitMix64& rng) {
    auto mem = self.memory;
    const std::uint64_t c = mem[EmulLayout::kClock];
    const int w = layout.clock_bits;

    // Round z = j * ell + i of the phase fills bit i of messages 2j and 2j+1.
    if (c < layout.phase_len) {
      const auto j = c / static_cast<std::uint64_t>(layout.ell);
      const auto i = c % static_cast<std::uint64_t>(layout.ell);
      for (std::size_t d = 0; d < 2; ++d) {
        std::uint64_t& slot = mem[EmulLayout::kInbox + 2 * j + d];
        const std::uint64_t b = (observed[d].value() >> w) & 1U;
        slot = (slot & ~(std::uint64_t{1} << i)) | (b << i);
      }
    }

    const std::uint64_t mask = low_mask(w);
    const std::uint64_t next =
        (majority_word(c, observed[0].value() & mask, observed[1].value() & mask) + 1) & mask;
    mem[EmulLayout::kClock] = next;

    if (next == 0) {
      std::array<BitString, kMaxEmulatedEta> inbox;
      for (int m = 0; m < inner_eta; ++m) {
        inbox[static_cast<std::size_t>(m)] =
            BitString(layout.ell, mem[EmulLayout::kInbox + static_cast<std::size_t>(m)]);
      }
      AgentView in = inner_view(layout, self);
      update(in, std::span<const BitString>(inbox.data(), static_cast<std::size_t>(inner_eta)), rng);
      absorb(layout, self, in);
      // Positions nobody fills before the next wrap vote for the agent's own message.
      for (int m = 0; m < layout.eta; ++m) {
        mem[EmulLayout::kInbox + static_cast<std::size_t>(m)] = mem[EmulLayout::kMessage];
      }
    }
    self.visible = emul_visible(layout, next, mem[EmulLayout::kMessage]);
  };

  if (inner.has_clock()) {
    spec.clock_modulus = inner.clock_modulus;
    spec.clock = [layout, clock = inner.clock, modulus = inner.clock_modulus](const AgentSnapshot& s) {
      const unsigned __int128 inner_clock = clock(emul_inner_snapshot(layout, s));
      const unsigned __int128 total = inner_clock * layout.clock_modulus() + s.memory[EmulLayout::kClock];
      return static_cast<std::uint64_t>(total % modulus);
    };
  }
  if (inner.speaking) {
    spec.speaking = [layout, speaking = inner.speaking](const AgentSnapshot& s) {
      return speaking(emul_inner_snapshot(layout, s));
    };
  }
  return spec;
}

std::vector<Population> run_bit_model(Population pop, const ProtocolSpec& spec,
                                      std::uint64_t master_seed, std::uint64_t rounds,
                                      StepOptions options) {
  options.mode = SamplingMode::kBit;
  RoundRunner runner(spec, master_seed, std::move(options));
  std::vector<Population> trace;
  trace.reserve(rounds + 1);
  trace.push_back(pop);
  for (std::uint64_t t = 0; t < rounds; ++t) {
    runner.step(pop);
    trace.push_back(pop);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Composition

namespace {

AgentView slice_view(AgentView& whole, int lo, int width, std::size_t offset, std::size_t words) {
  return {whole.visible.slice(lo, width), whole.memory.subspan(offset, words), whole.is_source,
          whole.input_bit, whole.output_bit};
}

AgentSnapshot slice_snapshot(const AgentSnapshot& whole, int lo, int width, std::size_t offset,
                             std::size_t words) {
  return {whole.visible.slice(lo, width), whole.memory.subspan(offset, words), whole.is_source,
          whole.input_bit, whole.output_bit};
}

}  // namespace

ProtocolSpec compose_with_clock(const ProtocolSpec& clock, const ClockedProtocol& payload) {
  if (!clock.has_clock()) throw ContractError("compose_with_clock: '" + clock.name + "' has no clock");
  if (clock.clock_modulus != payload.modulus) {
    throw ContractError("compose_with_clock: clock modulus " + std::to_string(clock.clock_modulus) +
                        " differs from payload period " + std::to_string(payload.modulus));
  }
  if (clock.eta != payload.eta) throw ContractError("compose_with_clock: pull counts differ");
  if (clock.ell + payload.ell > BitString::kMaxWidth) {
    throw ContractError("compose_with_clock: message too wide");
  }

  const int c_bits = clock.ell;
  const int p_bits = payload.ell;
  const std::size_t c_words = clock.memory_words();
  const std::size_t p_words = payload.words.size();

  ProtocolSpec spec;
  spec.name = clock.name + "+" + payload.name;
  spec.eta = clock.eta;
  spec.ell = c_bits + p_bits;
  spec.bitwise_independent = clock.bitwise_independent && payload.bitwise_independent;
  spec.output = OutputKind::kBit;

  InitSpace& space = spec.init_space;
  space.words = clock.init_space.words;
  space.words.insert(space.words.end(), payload.words.begin(), payload.words.end());
  space.visible_is_state = clock.init_space.visible_is_state;
  space.principal_bound = payload.principal_bound;
  space.canonicalize = [=, canon_clock = clock.init_space.canonicalize, clock_of = clock.clock,
                        canon_payload = payload.canonicalize](AgentView& self) {
    AgentView c = slice_view(self, 0, c_bits, 0, c_words);
    if (canon_clock) canon_clock(c);
    const std::uint64_t now = clock_of(as_snapshot(c));
    AgentView p = slice_view(self, c_bits, p_bits, c_words, p_words);
    p.visible = BitString::zeros(p_bits);
    p.output_bit = c.output_bit;
    canon_payload(p, now);
    self.visible = BitString::concat(c.visible, p.visible);
    self.output_bit = p.output_bit;
  };

  spec.update = [=, update_clock = clock.update, clock_of = clock.clock,
                 update_payload = payload.update](AgentView& self, std::span<const BitString> observed,
                                                  SplitMix64& rng) {
    std::array<BitString, kMaxEmulatedEta> c_obs;
    std::array<BitString, kMaxEmulatedEta> p_obs;
    const std::size_t eta = observed.size();
    for (std::size_t m = 0; m < eta; ++m) {
      c_obs[m] = observed[m].slice(0, c_bits);
      p_obs[m] = observed[m].slice(c_bits, p_bits);
    }
    AgentView c = slice_view(self, 0, c_bits, 0, c_words);
    const std::uint64_t before = clock_of(as_snapshot(c));
    update_clock(c, std::span<const BitString>(c_obs.data(), eta), rng);
    const std::uint64_t after = clock_of(as_snapshot(c));

    AgentView p = slice_view(self, c_bits, p_bits, c_words, p_words);
    update_payload(p, std::span<const BitString>(p_obs.data(), eta), before, after, rng);
    self.visible = BitString::concat(c.visible, p.visible);
    self.output_bit = p.output_bit;
  };

  spec.clock_modulus = clock.clock_modulus;
  spec.clock = [=, clock_of = clock.clock](const AgentSnapshot& s) {
    return clock_of(slice_snapshot(s, 0, c_bits, 0, c_words));
  };
  if (payload.speaking) {
    spec.speaking = [=, speaking = payload.speaking](const AgentSnapshot& s) {
      return speaking(slice_snapshot(s, c_bits, p_bits, c_words, p_words));
    };
  }
  return spec;
}

ProtocolSpec with_oracle_clock(const ClockedProtocol& payload) {
  if (payload.modulus == 0) throw ContractError("with_oracle_clock: payload has no period");
  const std::uint64_t modulus = payload.modulus;
  const std::size_t p_words = payload.words.size();

  ProtocolSpec spec;
  spec.name = payload.name;
  spec.eta = payload.eta;
  spec.ell = payload.ell;
  spec.bitwise_independent = payload.bitwise_independent;
  spec.output = OutputKind::kBit;

  InitSpace& space = spec.init_space;
  space.words.push_back({modulus, true});
  space.words.insert(space.words.end(), payload.words.begin(), payload.words.end());
  space.principal_bound = payload.principal_bound;
  space.canonicalize = [=, canon = payload.canonicalize](AgentView& self) {
    AgentView p{self.visible, self.memory.subspan(1, p_words), self.is_source, self.input_bit,
                self.output_bit};
    canon(p, self.memory[0]);
    self.visible = p.visible;
    self.output_bit = p.output_bit;
  };
  spec.update = [=, update = payload.update](AgentView& self, std::span<const BitString> observed,
                                             SplitMix64& rng) {
    const std::uint64_t before = self.memory[0];
    const std::uint64_t after = (before + 1) % modulus;
    AgentView p{self.visible, self.memory.subspan(1, p_words), self.is_source, self.input_bit,
                self.output_bit};
    update(p, observed, before, after, rng);
    self.memory[0] = after;
    self.visible = p.visible;
    self.output_bit = p.output_bit;
  };
  spec.clock_modulus = modulus;
  spec.clock = [](const AgentSnapshot& s) { return s.memory[0]; };
  if (payload.speaking) {
    spec.speaking = [=, speaking = payload.speaking](const AgentSnapshot& s) {
      return speaking({s.visible, s.memory.subspan(1, p_words), s.is_source, s.input_bit,
                       s.output_bit});
    };
  }
  return spec;
}

ProtocolSpec syn_intermediate_nested_protocol(std::uint64_t modulus) {
  ProtocolSpec spec = syn_simple_protocol(modulus);
  while (spec.ell > 3) spec = emulate(spec);
  spec.name = "syn-intermediate-nested";
  return spec;
}

ProtocolSpec syn_clock_protocol(const SynClockParams& params) {
  ProtocolSpec spec = emulate(syn_clock_4bit_protocol(params));
  spec.name = "syn-clock";
  return spec;
}

}  // namespace pullsync
