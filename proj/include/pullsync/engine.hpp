#pragma once

// Round engine for the synchronous PULL(eta, ell) model and its BIT variant.
//
// A protocol is data (ProtocolSpec): pull count, visible width, the domain
// an adversary may initialize private memory from, and a per-agent update
// rule. The engine owns nothing protocol specific; it snapshots visible
// parts, draws observation targets from counter-derived streams and hands
// each agent its observations.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pullsync/bitstring.hpp"
#include "pullsync/rng.hpp"

namespace pullsync {

struct AgentId {
  std::size_t index = 0;
  friend constexpr auto operator<=>(const AgentId&, const AgentId&) = default;
};

/// Mutable working copy of one agent, handed to update rules. Memory points
/// into the population's storage (or, for wrapped protocols, into a slice of
/// the wrapper's memory).
struct AgentView {
  BitString visible;
  std::span<std::uint64_t> memory;
  bool is_source = false;
  bool input_bit = false;
  bool output_bit = false;
};

/// Read-only view used by decoders and metrics.
struct AgentSnapshot {
  BitString visible;
  std::span<const std::uint64_t> memory;
  bool is_source = false;
  bool input_bit = false;
  bool output_bit = false;
};

/// Owning copy of one agent's full state.
struct AgentState {
  BitString visible;
  std::vector<std::uint64_t> private_memory;
  bool is_source = false;
  bool input_bit = false;
  bool output_bit = false;

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

inline AgentSnapshot as_snapshot(const AgentView& v) {
  return {v.visible, v.memory, v.is_source, v.input_bit, v.output_bit};
}

using UpdateFn =
    std::function<void(AgentView& self, std::span<const BitString> observed, SplitMix64& rng)>;
using ClockFn = std::function<std::uint64_t(const AgentSnapshot&)>;
using SpeakingFn = std::function<bool(const AgentSnapshot&)>;
using CanonicalizeFn = std::function<void(AgentView&)>;

/// Legal values of one private memory word.
struct WordDomain {
  std::uint64_t bound = 0;  // values in [0, bound); 0 means the full 64-bit range
  bool shared = false;      // every agent holds the same value (oracle-provided state)
};

/// What an adversary may write into an agent.
struct InitSpace {
  std::vector<WordDomain> words;
  /// The visible part is state in its own right (not derived from memory) and
  /// is randomized directly.
  bool visible_is_state = false;
  /// Domain of the principal value (opinion, clock) addressed by the
  /// all_equal and custom strategies.
  std::uint64_t principal_bound = 2;
  /// Recomputes derived fields (the visible part, the output bit) from memory.
  CanonicalizeFn canonicalize;
};

/// What "agreement" means for a protocol: equal output bits or equal clocks.
enum class OutputKind { kBit, kClock };

struct ProtocolSpec {
  std::string name;
  int eta = 2;
  int ell = 1;
  bool bitwise_independent = false;
  InitSpace init_space;
  UpdateFn update;
  /// Present for clock-synchronization protocols: decodes the agent's output
  /// clock modulo clock_modulus.
  std::uint64_t clock_modulus = 0;
  ClockFn clock;
  /// Present for dissemination protocols with a speaking/silent notion.
  SpeakingFn speaking;
  OutputKind output = OutputKind::kBit;

  std::size_t memory_words() const noexcept { return init_space.words.size(); }
  bool has_clock() const noexcept { return clock_modulus != 0 && static_cast<bool>(clock); }
};

enum class SamplingMode { kPull, kBit };

std::string to_string(SamplingMode mode);

struct SourceCounts {
  std::size_t zeros = 0;  // k0
  std::size_t ones = 0;   // k1
  std::size_t total() const noexcept { return zeros + ones; }
  friend bool operator==(const SourceCounts&, const SourceCounts&) = default;
};

/// Default Byzantine cap floor(n^0.4).
std::size_t default_byzantine_cap(std::size_t n);

/// n agents sharing one protocol's memory layout, stored flat.
class Population {
 public:
  Population() = default;
  Population(std::size_t n, std::size_t memory_words, int ell);
  static Population for_protocol(std::size_t n, const ProtocolSpec& spec);

  std::size_t size() const noexcept { return n_; }
  std::size_t memory_words() const noexcept { return words_; }
  int ell() const noexcept { return ell_; }

  AgentView view(std::size_t i);
  void commit(std::size_t i, const AgentView& v);
  AgentSnapshot snapshot(std::size_t i) const;
  AgentState state(std::size_t i) const;
  void set_state(std::size_t i, const AgentState& s);

  const BitString& visible(std::size_t i) const { return visible_[i]; }
  std::span<const BitString> visible_parts() const noexcept { return visible_; }
  std::span<std::uint64_t> memory(std::size_t i) {
    return {memory_.data() + i * words_, words_};
  }
  std::span<const std::uint64_t> memory(std::size_t i) const {
    return {memory_.data() + i * words_, words_};
  }

  bool is_source(std::size_t i) const noexcept { return flags_[i] & kSource; }
  bool input_bit(std::size_t i) const noexcept { return flags_[i] & kInput; }
  bool output_bit(std::size_t i) const noexcept { return flags_[i] & kOutput; }
  bool is_byzantine(std::size_t i) const noexcept { return flags_[i] & kByzantine; }

  void set_source(std::size_t i, bool source, bool input);
  void set_output(std::size_t i, bool output);

  /// Marks agents Byzantine; throws ContractError when ids exceed the cap or n.
  void set_byzantine(std::span<const AgentId> ids, std::size_t cap);
  std::vector<AgentId> byzantine() const;
  std::size_t byzantine_count() const noexcept;
  std::size_t honest_count() const noexcept { return n_ - byzantine_count(); }

  /// Current (k0, k1) over source flags.
  SourceCounts source_counts() const;
  /// Source configuration frozen by adversarial_init; legality of dissemination
  /// is defined against it.
  const std::optional<SourceCounts>& initial_sources() const noexcept { return initial_sources_; }
  void freeze_initial_sources() { initial_sources_ = source_counts(); }

  friend bool operator==(const Population&, const Population&) = default;

 private:
  static constexpr std::uint8_t kSource = 1, kInput = 2, kOutput = 4, kByzantine = 8;

  std::size_t n_ = 0;
  std::size_t words_ = 0;
  int ell_ = 0;
  std::vector<BitString> visible_;
  std::vector<std::uint64_t> memory_;
  std::vector<std::uint8_t> flags_;
  std::optional<SourceCounts> initial_sources_;
};

/// Source of the bits displayed by Byzantine agents. Displays are redrawn
/// every round; Byzantine agents never run the protocol update.
class ByzantineStrategy {
 public:
  virtual ~ByzantineStrategy() = default;
  virtual std::string name() const = 0;
  /// Called once per round with the honest snapshot before any display.
  virtual void prepare(const Population& pop) { (void)pop; }
  virtual BitString display(int width, SplitMix64& rng) const = 0;
};

/// Names: "fixed" (every bit = param), "random", "worst-opinion" (per-bit
/// complement of the honest majority).
std::shared_ptr<ByzantineStrategy> make_byzantine_strategy(const std::string& name, bool bit = false);

/// Overrides where observations come from: fills `out` with target ids for
/// one agent in one round (eta entries in PULL mode, eta*ell in BIT mode,
/// entry j*ell+i feeding bit i of message j).
using TargetFn =
    std::function<void(std::uint64_t round, std::size_t agent, std::span<std::size_t> out)>;

struct StepOptions {
  SamplingMode mode = SamplingMode::kPull;
  std::shared_ptr<ByzantineStrategy> byzantine;
  TargetFn targets;
  /// Order in which agents are visited; empty means 0..n-1. Results never
  /// depend on it.
  std::vector<std::size_t> visit_order;
};

/// eta ids drawn independently and uniformly with replacement from [0, n).
std::vector<AgentId> sample_targets(SplitMix64& rng, std::size_t n, int eta);

/// Default target draw used by the engine for (round, agent).
void draw_targets(const StreamFactory& streams, std::uint64_t round, std::size_t agent,
                  std::size_t n, std::span<std::size_t> out);

/// Executes rounds of one protocol over a population in place. Keeps scratch
/// buffers between rounds.
class RoundRunner {
 public:
  RoundRunner(ProtocolSpec spec, std::uint64_t master_seed, StepOptions options = {});

  /// Runs round `round()` and advances the counter.
  void step(Population& pop);

  std::uint64_t round() const noexcept { return round_; }
  void set_round(std::uint64_t r) noexcept { round_ = r; }
  const ProtocolSpec& spec() const noexcept { return spec_; }
  const StreamFactory& streams() const noexcept { return streams_; }

 private:
  ProtocolSpec spec_;
  StreamFactory streams_;
  StepOptions options_;
  std::uint64_t round_ = 0;
  std::vector<BitString> snapshot_;
  std::vector<std::size_t> targets_;
  std::vector<BitString> observed_;
};

/// Functional single-round form: returns the population after round `round`.
Population step_round(const Population& pop, const ProtocolSpec& spec, std::uint64_t master_seed,
                      std::uint64_t round, const StepOptions& options = {});

struct AdversaryStrategy {
  enum class Kind { kUniformRandom, kAllEqual, kHalfSplit, kMaxSpreadClocks, kCustom };
  Kind kind = Kind::kUniformRandom;
  std::vector<std::uint64_t> values;  // all_equal: {v}; custom: per-agent values, cycled

  static AdversaryStrategy uniform_random() { return {Kind::kUniformRandom, {}}; }
  static AdversaryStrategy all_equal(std::uint64_t v) { return {Kind::kAllEqual, {v}}; }
  static AdversaryStrategy half_split() { return {Kind::kHalfSplit, {}}; }
  static AdversaryStrategy max_spread_clocks() { return {Kind::kMaxSpreadClocks, {}}; }
  static AdversaryStrategy custom(std::vector<std::uint64_t> v) { return {Kind::kCustom, std::move(v)}; }

  /// Parses "uniform_random", "all_equal", "half_split", "max_spread_clocks",
  /// "custom"; throws ConfigError for unknown names or missing values.
  static AdversaryStrategy parse(const std::string& name, std::vector<std::uint64_t> values);
  std::string name() const;
};

struct SourceSetup {
  std::size_t ones = 0;   // k1
  std::size_t zeros = 0;  // k0
};

/// Builds a population whose every state field is chosen by the adversary
/// within spec.init_space. all_equal(v) writes v (reduced into each field's
/// domain) everywhere; half_split gives the first floor(n/2) agents
/// all_equal(0) and the rest all_equal(1); max_spread_clocks spreads agent i
/// to floor(i * bound / n) in every field; custom cycles the given values.
/// Sources are placed at seeded random positions; n itself is never touched.
Population adversarial_init(std::size_t n, const ProtocolSpec& spec,
                            const AdversaryStrategy& strategy, const SourceSetup& sources,
                            std::uint64_t seed);

/// Picks `count` Byzantine agents among non-sources at seeded positions.
void assign_byzantine(Population& pop, std::size_t count, std::uint64_t seed, std::size_t cap);

struct RoundMetrics {
  std::uint64_t round = 0;
  double agreement_fraction = 0.0;  // share of honest agents holding the modal output
  bool legal = false;
  std::size_t speakers = 0;
  double clock_entropy = 0.0;  // Shannon entropy (bits) of honest decoded clocks
};

RoundMetrics compute_metrics(const Population& pop, const ProtocolSpec& spec, std::uint64_t round,
                             bool legal);

using LegalFn = std::function<bool(const Population&)>;

struct RunOptions {
  std::uint64_t max_rounds = 1000;
  std::uint64_t hold_window = 0;
  bool record_trace = false;
  std::uint64_t trace_stride = 1;
  StepOptions step;
};

struct ConvergenceResult {
  bool converged = false;
  std::optional<std::uint64_t> t_converge;
  std::uint64_t held_for = 0;
  std::uint64_t rounds_run = 0;
  std::vector<RoundMetrics> trace;
};

/// 10 * ceil(log2 n).
std::uint64_t default_hold_window(std::size_t n);

/// Steps `pop` until some round t <= max_rounds is legal and stays legal for
/// hold_window further rounds. Round 0 is the initial population.
ConvergenceResult run_until(Population& pop, const ProtocolSpec& spec, const LegalFn& legal,
                            std::uint64_t master_seed, const RunOptions& options);

}  // namespace pullsync
