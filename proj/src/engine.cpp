#include "pullsync/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace pullsync {

std::string to_string(SamplingMode mode) { return mode == SamplingMode::kPull ? "pull" : "bit"; }

std::size_t default_byzantine_cap(std::size_t n) {
  return static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n), 0.4)));
}

std::uint64_t default_hold_window(std::size_t n) {
  std::uint64_t log2n = 0;
  while ((std::uint64_t{1} << log2n) < n) ++log2n;
  return 10 * log2n;
}

// ---------------------------------------------------------------------------
// Population

Population::Population(std::size_t n, std::size_t memory_words, int ell)
    : n_(n),
      words_(memory_words),
      ell_(ell),
      visible_(n, BitString::zeros(ell)),
      memory_(n * memory_words, 0),
      flags_(n, 0) {}

Population Population::for_protocol(std::size_t n, const ProtocolSpec& spec) {
  return Population(n, spec.memory_words(), spec.ell);
}

AgentView Population::view(std::size_t i) {
  return {visible_[i], memory(i), is_source(i), input_bit(i), output_bit(i)};
}

void Population::commit(std::size_t i, const AgentView& v) {
  visible_[i] = v.visible;
  set_source(i, v.is_source, v.input_bit);
  set_output(i, v.output_bit);
}

AgentSnapshot Population::snapshot(std::size_t i) const {
  return {visible_[i], memory(i), is_source(i), input_bit(i), output_bit(i)};
}

AgentState Population::state(std::size_t i) const {
  const auto mem = memory(i);
  return {visible_[i], {mem.begin(), mem.end()}, is_source(i), input_bit(i), output_bit(i)};
}

void Population::set_state(std::size_t i, const AgentState& s) {
  if (s.private_memory.size() != words_ || s.visible.width() != ell_) {
    throw ContractError("agent state does not match the population layout");
  }
  visible_[i] = s.visible;
  std::copy(s.private_memory.begin(), s.private_memory.end(), memory(i).begin());
  set_source(i, s.is_source, s.input_bit);
  set_output(i, s.output_bit);
}

void Population::set_source(std::size_t i, bool source, bool input) {
  auto& f = flags_[i];
  f = static_cast<std::uint8_t>((f & ~(kSource | kInput)) | (source ? kSource : 0) |
                                (source && input ? kInput : 0));
}

void Population::set_output(std::size_t i, bool output) {
  auto& f = flags_[i];
  f = static_cast<std::uint8_t>((f & ~kOutput) | (output ? kOutput : 0));
}

void Population::set_byzantine(std::span<const AgentId> ids, std::size_t cap) {
  if (ids.size() > cap) {
    throw ContractError("Byzantine count " + std::to_string(ids.size()) + " exceeds cap " +
                        std::to_string(cap));
  }
  for (auto& f : flags_) f = static_cast<std::uint8_t>(f & ~kByzantine);
  for (const AgentId id : ids) {
    if (id.index >= n_) throw ContractError("Byzantine id out of range");
    flags_[id.index] |= kByzantine;
  }
}

std::vector<AgentId> Population::byzantine() const {
  std::vector<AgentId> out;
  for (std::size_t i = 0; i < n_; ++i) {
    if (is_byzantine(i)) out.push_back({i});
  }
  return out;
}

std::size_t Population::byzantine_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(flags_.begin(), flags_.end(), [](std::uint8_t f) { return f & kByzantine; }));
}

SourceCounts Population::source_counts() const {
  SourceCounts c;
  for (std::size_t i = 0; i < n_; ++i) {
    if (!is_source(i)) continue;
    if (input_bit(i)) {
      ++c.ones;
    } else {
      ++c.zeros;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Byzantine displays

namespace {

class FixedBitStrategy final : public ByzantineStrategy {
 public:
  explicit FixedBitStrategy(bool bit) : bit_(bit) {}
  std::string name() const override { return bit_ ? "fixed-1" : "fixed-0"; }
  BitString display(int width, SplitMix64&) const override {
    return BitString(width, bit_ ? low_mask(width) : 0);
  }

 private:
  bool bit_;
};

class RandomStrategy final : public ByzantineStrategy {
 public:
  std::string name() const override { return "random"; }
  BitString display(int width, SplitMix64& rng) const override {
    return BitString(width, rng() & low_mask(width));
  }
};

class WorstOpinionStrategy final : public ByzantineStrategy {
 public:
  std::string name() const override { return "worst-opinion"; }

  void prepare(const Population& pop) override {
    const int width = pop.ell();
    std::vector<std::size_t> ones(static_cast<std::size_t>(width), 0);
    std::size_t honest = 0;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (pop.is_byzantine(i)) continue;
      ++honest;
      const std::uint64_t v = pop.visible(i).value();
      for (int b = 0; b < width; ++b) ones[b] += (v >> b) & 1U;
    }
    minority_ = 0;
    for (int b = 0; b < width; ++b) {
      if (2 * ones[b] <= honest) minority_ |= std::uint64_t{1} << b;
    }
  }

  BitString display(int width, SplitMix64&) const override {
    return BitString(width, minority_ & low_mask(width));
  }

 private:
  std::uint64_t minority_ = 0;
};

}  // namespace

std::shared_ptr<ByzantineStrategy> make_byzantine_strategy(const std::string& name, bool bit) {
  if (name == "fixed") return std::make_shared<FixedBitStrategy>(bit);
  if (name == "random") return std::make_shared<RandomStrategy>();
  if (name == "worst-opinion") return std::make_shared<WorstOpinionStrategy>();
  throw ConfigError({"byzantine_strategy: unknown strategy '" + name +
                     "' (expected fixed, random, worst-opinion)"});
}

// ---------------------------------------------------------------------------
// Sampling and rounds

std::vector<AgentId> sample_targets(SplitMix64& rng, std::size_t n, int eta) {
  if (n == 0) throw ContractError("invalid population: n = 0");
  if (eta < 1) throw ContractError("eta must be at least 1");
  std::vector<AgentId> out(static_cast<std::size_t>(eta));
  for (auto& id : out) id.index = rng.below(n);
  return out;
}

void draw_targets(const StreamFactory& streams, std::uint64_t round, std::size_t agent,
                  std::size_t n, std::span<std::size_t> out) {
  SplitMix64 rng = streams.agent_round(round, agent);
  for (auto& t : out) t = rng.below(n);
}

RoundRunner::RoundRunner(ProtocolSpec spec, std::uint64_t master_seed, StepOptions options)
    : spec_(std::move(spec)), streams_(master_seed), options_(std::move(options)) {
  if (options_.mode == SamplingMode::kBit && !spec_.bitwise_independent) {
    throw ContractError("BIT sampling requires a bitwise-independent protocol; '" + spec_.name +
                        "' is not");
  }
  if (!spec_.update) throw ContractError("protocol '" + spec_.name + "' has no update rule");
}

void RoundRunner::step(Population& pop) {
  const std::size_t n = pop.size();
  if (n == 0) throw ContractError("invalid population: n = 0");
  if (pop.ell() != spec_.ell || pop.memory_words() != spec_.memory_words()) {
    throw ContractError("population layout does not match protocol '" + spec_.name + "'");
  }
  const bool bit_mode = options_.mode == SamplingMode::kBit;
  const auto eta = static_cast<std::size_t>(spec_.eta);
  const auto ell = static_cast<std::size_t>(spec_.ell);

  snapshot_.assign(pop.visible_parts().begin(), pop.visible_parts().end());
  const bool has_byzantine = options_.byzantine && pop.byzantine_count() > 0;
  if (has_byzantine) {
    options_.byzantine->prepare(pop);
    for (std::size_t i = 0; i < n; ++i) {
      if (!pop.is_byzantine(i)) continue;
      SplitMix64 rng = streams_.stream(StreamPurpose::kByzantine, round_, i);
      snapshot_[i] = options_.byzantine->display(spec_.ell, rng);
    }
  }

  targets_.resize(bit_mode ? eta * ell : eta);
  observed_.resize(eta);
  const bool custom_order = !options_.visit_order.empty();
  if (custom_order && options_.visit_order.size() != n) {
    throw ContractError("visit order must list every agent once");
  }

  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = custom_order ? options_.visit_order[k] : k;
    if (has_byzantine && pop.is_byzantine(i)) continue;
    SplitMix64 rng = streams_.agent_round(round_, i);
    if (options_.targets) {
      options_.targets(round_, i, targets_);
    } else {
      for (auto& t : targets_) t = rng.below(n);
    }
    if (bit_mode) {
      for (std::size_t j = 0; j < eta; ++j) {
        std::uint64_t v = 0;
        for (std::size_t b = 0; b < ell; ++b) {
          v |= ((snapshot_[targets_[j * ell + b]].value() >> b) & 1U) << b;
        }
        observed_[j] = BitString(spec_.ell, v);
      }
    } else {
      for (std::size_t j = 0; j < eta; ++j) observed_[j] = snapshot_[targets_[j]];
    }
    AgentView v = pop.view(i);
    spec_.update(v, observed_, rng);
    if (v.visible.width() != spec_.ell) {
      throw ContractError("protocol '" + spec_.name + "' wrote a visible part of width " +
                          std::to_string(v.visible.width()) + ", budget is " +
                          std::to_string(spec_.ell));
    }
    pop.commit(i, v);
  }
  ++round_;
}

Population step_round(const Population& pop, const ProtocolSpec& spec, std::uint64_t master_seed,
                      std::uint64_t round, const StepOptions& options) {
  Population next = pop;
  RoundRunner runner(spec, master_seed, options);
  runner.set_round(round);
  runner.step(next);
  return next;
}

// ---------------------------------------------------------------------------
// Adversarial initialization

AdversaryStrategy AdversaryStrategy::parse(const std::string& name,
                                           std::vector<std::uint64_t> values) {
  if (name == "uniform_random") return uniform_random();
  if (name == "half_split") return half_split();
  if (name == "max_spread_clocks") return max_spread_clocks();
  if (name == "all_equal") {
    if (values.size() != 1) {
      throw ConfigError({"adversary_values: all_equal takes exactly one value"});
    }
    return all_equal(values.front());
  }
  if (name == "custom") {
    if (values.empty()) throw ConfigError({"adversary_values: custom needs at least one value"});
    return custom(std::move(values));
  }
  throw ConfigError({"adversary: unknown strategy '" + name +
                     "' (expected uniform_random, all_equal, half_split, max_spread_clocks, "
                     "custom)"});
}

std::string AdversaryStrategy::name() const {
  switch (kind) {
    case Kind::kUniformRandom: return "uniform_random";
    case Kind::kAllEqual: return "all_equal";
    case Kind::kHalfSplit: return "half_split";
    case Kind::kMaxSpreadClocks: return "max_spread_clocks";
    case Kind::kCustom: return "custom";
  }
  return "unknown";
}

namespace {

std::uint64_t reduce(std::uint64_t v, std::uint64_t bound) { return bound == 0 ? v : v % bound; }

// floor(i * bound / n) with bound 0 meaning 2^64.
std::uint64_t spread(std::size_t i, std::size_t n, std::uint64_t bound) {
  const unsigned __int128 b = bound == 0 ? (static_cast<unsigned __int128>(1) << 64) : bound;
  return static_cast<std::uint64_t>(b * i / n);
}

std::uint64_t draw(SplitMix64& rng, std::uint64_t bound) { return bound == 0 ? rng() : rng.below(bound); }

void shuffle(std::vector<std::size_t>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

Population adversarial_init(std::size_t n, const ProtocolSpec& spec,
                            const AdversaryStrategy& strategy, const SourceSetup& sources,
                            std::uint64_t seed) {
  using Kind = AdversaryStrategy::Kind;
  if (n == 0) throw ContractError("invalid population: n = 0");
  const InitSpace& space = spec.init_space;

  std::vector<std::string> problems;
  if (sources.ones + sources.zeros > n) {
    problems.push_back("sources: k1 + k0 = " + std::to_string(sources.ones + sources.zeros) +
                       " exceeds n = " + std::to_string(n));
  }
  for (const std::uint64_t v : strategy.values) {
    if (v >= space.principal_bound) {
      problems.push_back("adversary_values: " + std::to_string(v) + " outside init space [0, " +
                         std::to_string(space.principal_bound) + ") of " + spec.name);
    }
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));

  Population pop = Population::for_protocol(n, spec);
  const StreamFactory streams(seed);
  SplitMix64 rng = streams.stream(StreamPurpose::kInit, 0, 0);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  shuffle(order, rng);
  for (std::size_t k = 0; k < sources.ones + sources.zeros; ++k) {
    pop.set_source(order[k], true, k < sources.ones);
  }

  // Value an agent is pinned to, if the strategy pins one.
  auto pinned = [&](std::size_t i) -> std::optional<std::uint64_t> {
    switch (strategy.kind) {
      case Kind::kAllEqual: return strategy.values.front();
      case Kind::kHalfSplit: return i < n / 2 ? 0 : 1;
      case Kind::kCustom: return strategy.values[i % strategy.values.size()];
      default: return std::nullopt;
    }
  };
  auto field = [&](std::size_t i, std::uint64_t bound, SplitMix64& r) -> std::uint64_t {
    if (strategy.kind == Kind::kUniformRandom) return draw(r, bound);
    if (strategy.kind == Kind::kMaxSpreadClocks) return spread(i, n, bound);
    return reduce(*pinned(i), bound);
  };

  std::vector<std::uint64_t> shared(space.words.size(), 0);
  for (std::size_t w = 0; w < space.words.size(); ++w) {
    if (space.words[w].shared) shared[w] = field(0, space.words[w].bound, rng);
  }

  const std::uint64_t visible_bound = spec.ell >= 64 ? 0 : (std::uint64_t{1} << spec.ell);
  for (std::size_t i = 0; i < n; ++i) {
    AgentView v = pop.view(i);
    for (std::size_t w = 0; w < space.words.size(); ++w) {
      v.memory[w] = space.words[w].shared ? shared[w] : field(i, space.words[w].bound, rng);
    }
    if (space.visible_is_state) v.visible = BitString(spec.ell, field(i, visible_bound, rng));
    v.output_bit = (field(i, 2, rng) & 1U) != 0;
    if (space.canonicalize) space.canonicalize(v);
    pop.commit(i, v);
  }
  pop.freeze_initial_sources();
  return pop;
}

void assign_byzantine(Population& pop, std::size_t count, std::uint64_t seed, std::size_t cap) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (!pop.is_source(i)) candidates.push_back(i);
  }
  if (count > candidates.size()) {
    throw ContractError("not enough non-source agents to host " + std::to_string(count) +
                        " Byzantine agents");
  }
  SplitMix64 rng = StreamFactory(seed).stream(StreamPurpose::kInit, 1, 0);
  shuffle(candidates, rng);
  std::vector<AgentId> ids;
  for (std::size_t k = 0; k < count; ++k) ids.push_back({candidates[k]});
  pop.set_byzantine(ids, cap);
}

// ---------------------------------------------------------------------------
// Metrics and convergence

RoundMetrics compute_metrics(const Population& pop, const ProtocolSpec& spec, std::uint64_t round,
                             bool legal) {
  RoundMetrics m;
  m.round = round;
  m.legal = legal;
  const std::size_t honest = pop.honest_count();
  if (honest == 0) return m;

  if (spec.has_clock()) {
    std::vector<std::uint64_t> clocks;
    clocks.reserve(honest);
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (!pop.is_byzantine(i)) clocks.push_back(spec.clock(pop.snapshot(i)));
    }
    std::sort(clocks.begin(), clocks.end());
    std::size_t best = 0;
    double entropy = 0.0;
    for (std::size_t lo = 0; lo < clocks.size();) {
      std::size_t hi = lo;
      while (hi < clocks.size() && clocks[hi] == clocks[lo]) ++hi;
      const std::size_t count = hi - lo;
      best = std::max(best, count);
      const double p = static_cast<double>(count) / static_cast<double>(honest);
      entropy -= p * std::log2(p);
      lo = hi;
    }
    if (spec.output == OutputKind::kClock) {
      m.agreement_fraction = static_cast<double>(best) / static_cast<double>(honest);
    }
    m.clock_entropy = entropy == 0.0 ? 0.0 : entropy;
  }
  if (spec.output == OutputKind::kBit) {
    std::size_t ones = 0;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (!pop.is_byzantine(i) && pop.output_bit(i)) ++ones;
    }
    m.agreement_fraction =
        static_cast<double>(std::max(ones, honest - ones)) / static_cast<double>(honest);
  }
  if (spec.speaking) {
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (!pop.is_byzantine(i) && spec.speaking(pop.snapshot(i))) ++m.speakers;
    }
  }
  return m;
}

ConvergenceResult run_until(Population& pop, const ProtocolSpec& spec, const LegalFn& legal,
                            std::uint64_t master_seed, const RunOptions& options) {
  if (options.max_rounds < 1) throw ContractError("max_rounds must be at least 1");
  if (options.trace_stride < 1) throw ContractError("trace_stride must be at least 1");
  RoundRunner runner(spec, master_seed, options.step);
  ConvergenceResult result;

  std::optional<std::uint64_t> streak;
  auto observe = [&](std::uint64_t r) {
    const bool ok = legal(pop);
    if (!ok) {
      streak.reset();
    } else if (!streak && r <= options.max_rounds) {
      streak = r;
    }
    if (options.record_trace && r % options.trace_stride == 0) {
      result.trace.push_back(compute_metrics(pop, spec, r, ok));
    }
  };

  observe(0);
  for (std::uint64_t r = 0;; ++r) {
    if (streak && r - *streak >= options.hold_window) {
      result.converged = true;
      result.t_converge = streak;
      result.held_for = r - *streak;
      result.rounds_run = r;
      break;
    }
    if (!streak && r >= options.max_rounds) {
      result.rounds_run = r;
      break;
    }
    runner.step(pop);
    observe(r + 1);
  }
  return result;
}

}  // namespace pullsync
