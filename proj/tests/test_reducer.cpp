#include <doctest.h>

#include <vector>

#include "pullsync/clocks.hpp"
#include "pullsync/consensus.hpp"
#include "pullsync/dissemination.hpp"
#include "pullsync/harness.hpp"
#include "pullsync/reducer.hpp"

using namespace pullsync;

namespace {

// eta = 1 protocol that copies the pulled message.
ProtocolSpec copy_protocol(int ell) {
  ProtocolSpec spec;
  spec.name = "copy";
  spec.eta = 1;
  spec.ell = ell;
  spec.bitwise_independent = true;
  spec.init_space.visible_is_state = true;
  spec.init_space.principal_bound = std::uint64_t{1} << ell;
  spec.update = [](AgentView& self, std::span<const BitString> observed, SplitMix64&) {
    REQUIRE(observed.size() == 1);
    self.visible = observed[0];
  };
  return spec;
}

// Every agent's P-bit equals private_message[C mod ell].
void require_display_invariant(const ProtocolSpec& inner, const ProtocolSpec& compiled,
                               const Population& pop) {
  const EmulLayout layout = emul_layout(inner);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const auto mem = pop.memory(i);
    const std::uint64_t c = mem[EmulLayout::kClock];
    const std::uint64_t msg = mem[EmulLayout::kMessage];
    REQUIRE(pop.visible(i).width() == compiled.ell);
    REQUIRE(pop.visible(i).slice(0, layout.clock_bits).value() == c);
    REQUIRE(pop.visible(i).bit(layout.clock_bits) == (((msg >> (c % layout.ell)) & 1) != 0));
  }
}

}  // namespace

TEST_SUITE("phase structure") {
  TEST_CASE("spec examples") {
    CHECK(phase_structure(2, 8) == PhaseStructure{8, 1, 8});
    CHECK(phase_structure(4, 8) == PhaseStructure{16, 2, 8});
    CHECK(phase_structure(2, 4) == PhaseStructure{4, 1, 4});
    CHECK_THROWS_AS(phase_structure(3, 4), ContractError);
  }
}

TEST_SUITE("emulate") {
  TEST_CASE("message widths") {
    CHECK(emulate(syn_clock_4bit_protocol({10, 1000, 8.0})).ell == 3);
    CHECK(emulate(syn_simple_protocol(256)).ell == 4);
    const ProtocolSpec lifted = emulate(copy_protocol(8));
    CHECK(lifted.ell == 4);
    CHECK(lifted.eta == 2);
    CHECK(lifted.bitwise_independent);
    CHECK(emul_layout(copy_protocol(8)).eta == 2);
  }

  TEST_CASE("eta = 2 and ell = log2 T gives one subphase of ell rounds") {
    const EmulLayout layout = emul_layout(syn_simple_protocol(256));
    CHECK(layout.phase_len == 8);
    CHECK(phase_structure(layout.eta, layout.ell).subphase_count == 1);
  }

  TEST_CASE("non bitwise-independent input is rejected") {
    CHECK_THROWS_AS(emulate(certainty_protocol(20)), ContractError);
  }

  TEST_CASE("odd eta: the copy protocol still copies") {
    const ProtocolSpec inner = copy_protocol(8);
    const ProtocolSpec spec = emulate(inner);
    Population pop = adversarial_init(60, spec, AdversaryStrategy::uniform_random(), {}, 2);
    for (std::size_t i = 0; i < pop.size(); ++i) {
      AgentView v = pop.view(i);
      v.memory[EmulLayout::kClock] = 0;
      spec.init_space.canonicalize(v);
      pop.commit(i, v);
    }
    RoundRunner runner(spec, 2);
    for (int r = 0; r < 40; ++r) {
      runner.step(pop);
      require_display_invariant(inner, spec, pop);
    }
  }

  TEST_CASE("display invariant and quiescence on every compiled protocol") {
    std::vector<std::pair<ProtocolSpec, ProtocolSpec>> cases;
    cases.emplace_back(syn_simple_protocol(16), emulate(syn_simple_protocol(16)));
    cases.emplace_back(emulate(syn_simple_protocol(256)), syn_intermediate_nested_protocol(256));
    const ProtocolSpec four = syn_clock_4bit_protocol({10, 200, 8.0});
    cases.emplace_back(four, syn_clock_protocol({10, 200, 8.0}));
    const PhaseSchedule schedule = phase_schedule(200, 4.0);
    const ProtocolSpec composite = compose_with_clock(syn_clock_protocol({schedule.period(), 200, 8.0}),
                                                      phase_spread_clocked(schedule));
    cases.emplace_back(composite, syn_phase_spread_protocol({200, 8.0, 4.0}));

    for (const auto& [inner, spec] : cases) {
      CAPTURE(spec.name);
      const EmulLayout layout = emul_layout(inner);
      Population pop = adversarial_init(200, spec, AdversaryStrategy::uniform_random(), {3, 1}, 4);
      require_display_invariant(inner, spec, pop);
      RoundRunner runner(spec, 4);
      for (int r = 0; r < 400; ++r) {
        const Population before = pop;
        runner.step(pop);
        require_display_invariant(inner, spec, pop);
        for (std::size_t i = 0; i < pop.size(); ++i) {
          if (pop.memory(i)[EmulLayout::kClock] == 0) continue;  // wrapped this round
          const auto a = before.memory(i);
          const auto b = pop.memory(i);
          REQUIRE(a[EmulLayout::kMessage] == b[EmulLayout::kMessage]);
          for (std::size_t w = layout.inner_offset(); w < a.size(); ++w) REQUIRE(a[w] == b[w]);
          REQUIRE(before.output_bit(i) == pop.output_bit(i));
        }
      }
    }
  }

  TEST_CASE("compiled Syn-Simple replays the BIT-model run at phase boundaries") {
    constexpr std::size_t n = 256;
    constexpr std::uint64_t seed = 31;
    const ProtocolSpec inner = syn_simple_protocol(16);
    const ProtocolSpec spec = emulate(inner);
    const EmulLayout layout = emul_layout(inner);
    REQUIRE(layout.phase_len == layout.clock_modulus());

    const Population start = adversarial_init(n, inner, AdversaryStrategy::uniform_random(), {}, seed);
    Population emul = Population::for_protocol(n, spec);
    for (std::size_t i = 0; i < n; ++i) {
      AgentView v = emul.view(i);
      v.memory[EmulLayout::kClock] = 0;
      v.memory[EmulLayout::kMessage] = start.visible(i).value();
      spec.init_space.canonicalize(v);
      emul.commit(i, v);
    }

    // Bit i of message m in BIT round p is the bit the compiled agent pulled
    // from its (m mod 2)-th target in round p * M + (m / 2) * ell + i.
    const StreamFactory streams(seed);
    const auto ell = static_cast<std::uint64_t>(layout.ell);
    StepOptions coupled;
    coupled.targets = [&](std::uint64_t p, std::size_t agent, std::span<std::size_t> out) {
      for (std::size_t m = 0; m < static_cast<std::size_t>(layout.eta); ++m) {
        for (std::uint64_t i = 0; i < ell; ++i) {
          std::array<std::size_t, 2> t{};
          draw_targets(streams, p * layout.clock_modulus() + (m / 2) * ell + i, agent, n, t);
          out[m * ell + i] = t[m % 2];
        }
      }
    };
    const auto bit_trace = run_bit_model(start, inner, 999, 50, coupled);

    RoundRunner runner(spec, seed);
    for (std::uint64_t p = 1; p <= 50; ++p) {
      for (std::uint64_t z = 0; z < layout.clock_modulus(); ++z) runner.step(emul);
      for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(emul.memory(i)[EmulLayout::kClock] == 0);
        REQUIRE(emul.memory(i)[EmulLayout::kMessage] == bit_trace[p].visible(i).value());
      }
    }
  }
}

TEST_SUITE("BIT model") {
  TEST_CASE("one-bit protocols: BIT and PULL runs coincide") {
    const ProtocolSpec spec = maj_consensus_protocol();
    const Population start = adversarial_init(500, spec, AdversaryStrategy::uniform_random(), {}, 6);
    const auto bit = run_bit_model(start, spec, 6, 60);
    Population pull = start;
    RoundRunner runner(spec, 6);
    for (std::size_t t = 1; t <= 60; ++t) {
      runner.step(pull);
      REQUIRE(pull == bit[t]);
    }
  }

  TEST_CASE("Syn-Simple synchronizes under BIT sampling") {
    const ProtocolSpec spec = syn_simple_protocol(16);
    Population pop = adversarial_init(1000, spec, AdversaryStrategy::uniform_random(), {}, 8);
    RunOptions opts{.max_rounds = 500, .hold_window = 100};
    opts.step.mode = SamplingMode::kBit;
    const auto r = run_until(pop, spec, LegalPredicate::clocks_equal(spec).as_function(), 8, opts);
    CHECK(r.converged);
  }
}

TEST_SUITE("composition") {
  TEST_CASE("oracle clock advances by one and stays hidden") {
    const ProtocolSpec spec = phase_spread_protocol(phase_schedule(64, 2.0));
    CHECK(spec.ell == 1);
    Population pop = adversarial_init(64, spec, AdversaryStrategy::uniform_random(), {1, 0}, 3);
    const std::uint64_t c0 = spec.clock(pop.snapshot(0));
    for (std::size_t i = 1; i < pop.size(); ++i) REQUIRE(spec.clock(pop.snapshot(i)) == c0);
    RoundRunner runner(spec, 3);
    for (std::uint64_t r = 1; r <= 300; ++r) {
      runner.step(pop);
      for (std::size_t i = 0; i < pop.size(); ++i) {
        REQUIRE(spec.clock(pop.snapshot(i)) == (c0 + r) % spec.clock_modulus);
      }
    }
  }

  TEST_CASE("clock and payload sit side by side") {
    const PhaseSchedule schedule = phase_schedule(100, 2.0);
    const ProtocolSpec clock = syn_clock_protocol({schedule.period(), 100, 8.0});
    const ProtocolSpec both = compose_with_clock(clock, phase_spread_clocked(schedule));
    CHECK(both.ell == 4);
    CHECK(both.bitwise_independent);
    CHECK(both.memory_words() == clock.memory_words() + 5);
    CHECK(both.clock_modulus == schedule.period());
    CHECK_THROWS_AS(compose_with_clock(syn_clock_protocol({7, 100, 8.0}), phase_spread_clocked(schedule)),
                    ContractError);
  }
}
