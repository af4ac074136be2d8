#include <doctest.h>

#include <array>

#include "pullsync/consensus.hpp"
#include "pullsync/harness.hpp"

using namespace pullsync;

namespace {

bool brute_majority(int a, int b, int c) { return a + b + c >= 2; }

}  // namespace

TEST_SUITE("maj3") {
  TEST_CASE("spot values") {
    CHECK(maj3(true, true, true));
    CHECK_FALSE(maj3(false, true, false));
  }

  TEST_CASE("matches counting on all 8 inputs and is symmetric") {
    for (int m = 0; m < 8; ++m) {
      const bool a = m & 1, b = m & 2, c = m & 4;
      CHECK(maj3(a, b, c) == brute_majority(a, b, c));
      CHECK(maj3(a, b, c) == maj3(b, a, c));
      CHECK(maj3(a, b, c) == maj3(c, b, a));
      CHECK(maj3(a, a, c) == a);
    }
  }
}

TEST_SUITE("maj_consensus_update") {
  TEST_CASE("outvoted and two-of-three") {
    const std::array<Opinion, 2> ones{Opinion{true}, Opinion{true}};
    CHECK(maj_consensus_update(Opinion{false}, ones).bit);
    const std::array<Opinion, 2> mixed{Opinion{true}, Opinion{false}};
    CHECK(maj_consensus_update(Opinion{true}, mixed).bit);
  }

  TEST_CASE("equals maj3 on all 8 cases") {
    for (int m = 0; m < 8; ++m) {
      const std::array<Opinion, 2> pulled{Opinion{(m & 2) != 0}, Opinion{(m & 4) != 0}};
      CHECK(maj_consensus_update(Opinion{(m & 1) != 0}, pulled).bit ==
            brute_majority(m & 1, (m >> 1) & 1, (m >> 2) & 1));
    }
  }

  TEST_CASE("protocol shape") {
    const ProtocolSpec spec = maj_consensus_protocol();
    CHECK(spec.eta == 2);
    CHECK(spec.ell == 1);
    CHECK(spec.bitwise_independent);
  }

  TEST_CASE("unanimity is absorbing for 100 rounds") {
    const ProtocolSpec spec = maj_consensus_protocol();
    for (const std::uint64_t b : {0, 1}) {
      Population pop = adversarial_init(300, spec, AdversaryStrategy::all_equal(b), {}, 3);
      RoundRunner runner(spec, 3);
      for (int r = 0; r < 100; ++r) {
        runner.step(pop);
        for (std::size_t i = 0; i < pop.size(); ++i) {
          REQUIRE(pop.visible(i).value() == b);
          REQUIRE(pop.output_bit(i) == (b == 1));
        }
      }
    }
  }
}
