#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace pullsync {

/// SplitMix64 finalizer: a bijective avalanche mix of one 64-bit word.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Small counter-style generator (Steele, Lea & Flood's SplitMix64). Models
/// std::uniform_random_bit_generator so it plugs into <random> distributions.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  constexpr explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound) {
    return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(*this);
  }

  bool coin() { return ((*this)() >> 63) != 0; }

 private:
  std::uint64_t state_;
};

/// What a derived stream is used for. Distinct purposes never share a stream.
enum class StreamPurpose : std::uint64_t {
  kAgentRound = 1,  // target sampling and update randomness of one agent in one round
  kByzantine = 2,   // adversarial displays
  kInit = 3,        // adversarial initialization
};

/// Counter-based splitting of one master seed. The stream of (round, agent)
/// depends only on those coordinates, never on iteration order, so traces are
/// identical whatever order agents are visited in.
class StreamFactory {
 public:
  constexpr explicit StreamFactory(std::uint64_t master_seed) noexcept : master_(master_seed) {}

  constexpr std::uint64_t master_seed() const noexcept { return master_; }

  constexpr SplitMix64 stream(StreamPurpose purpose, std::uint64_t round,
                              std::uint64_t agent) const noexcept {
    std::uint64_t h = mix64(master_ ^ (static_cast<std::uint64_t>(purpose) * 0xd1b54a32d192ed03ULL));
    h = mix64(h ^ round);
    h = mix64(h ^ (agent * 0x8cb92ba72f3d8dd7ULL));
    return SplitMix64(h);
  }

  constexpr SplitMix64 agent_round(std::uint64_t round, std::uint64_t agent) const noexcept {
    return stream(StreamPurpose::kAgentRound, round, agent);
  }

 private:
  std::uint64_t master_;
};

}  // namespace pullsync
