#pragma once

// Experiment orchestration: legality predicates, configs, seeded trial
// batches, sweeps, calibration pilots and report serialization.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pullsync/engine.hpp"

namespace pullsync {

class LegalPredicate {
 public:
  enum class Kind { kClocksEqual, kOutputsEqual, kCustom };

  /// Every honest agent decodes the same clock under spec.clock.
  static LegalPredicate clocks_equal(const ProtocolSpec& spec);
  /// Every honest agent outputs b_maj.
  static LegalPredicate outputs_equal(bool b_maj);
  static LegalPredicate custom(std::string name, LegalFn fn);

  Kind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }
  bool operator()(const Population& pop) const { return fn_(pop); }
  LegalFn as_function() const { return fn_; }

 private:
  LegalPredicate(Kind kind, std::string name, LegalFn fn)
      : kind_(kind), name_(std::move(name)), fn_(std::move(fn)) {}
  Kind kind_;
  std::string name_;
  LegalFn fn_;
};

/// All honest agents hold the same output bit, whichever it is.
LegalPredicate consensus_reached();

/// Majority input bit among the frozen initial sources. Throws ContractError
/// when there are no sources or k1 == k0.
bool majority_input(const Population& pop);

struct ExperimentConfig {
  std::string protocol;
  std::size_t n = 0;
  std::uint64_t modulus = 0;  // T; 0 lets baselines derive it from n and gamma
  double gamma = 8.0;
  double gamma_phase = 20.0;
  double epsilon = 0.0;  // required |k1/k0 - 1| margin for dissemination
  std::size_t sources_one = 0;
  std::size_t sources_zero = 0;
  AdversaryStrategy adversary = AdversaryStrategy::uniform_random();
  std::size_t byzantine = 0;
  std::string byzantine_strategy = "fixed";
  bool byzantine_bit = false;
  SamplingMode sampling = SamplingMode::kPull;
  std::size_t trials = 1;
  std::uint64_t max_rounds = 1000;
  std::optional<std::uint64_t> hold_window;  // default 10 * ceil(log2 n)
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool trace = false;
  std::uint64_t trace_stride = 1;

  std::uint64_t effective_hold_window() const;
};

/// Names accepted in ExperimentConfig::protocol.
const std::vector<std::string>& protocol_names();

/// Every violated constraint, one line each; empty when the config is usable.
std::vector<std::string> validate(const ExperimentConfig& config);

/// The protocol a config describes. Throws ConfigError listing every
/// violated constraint.
ProtocolSpec build_protocol(const ExperimentConfig& config);

/// The legality notion for a protocol: clocks equal for clock protocols,
/// outputs equal to b_maj for dissemination, agreement for maj-consensus.
LegalPredicate legal_predicate_for(const ExperimentConfig& config, const ProtocolSpec& spec,
                                   const Population& initial);

/// Initial population of trial `seed` (adversary, sources, Byzantine agents).
Population initial_population(const ExperimentConfig& config, const ProtocolSpec& spec,
                              std::uint64_t seed);

struct TrialDigest {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  std::optional<std::uint64_t> t_converge;
  std::uint64_t held_for = 0;
  std::uint64_t rounds_run = 0;
};

struct TrialBatchReport {
  ExperimentConfig config;
  std::string protocol_name;
  int ell = 0;
  std::vector<TrialDigest> trials;
  std::vector<std::vector<RoundMetrics>> traces;  // filled when config.trace
  double success_rate = 0.0;
  std::optional<std::uint64_t> p50;
  std::optional<std::uint64_t> p95;
  /// Wall-clock time of the batch. Not serialized: reports are replayable.
  double wall_clock_seconds = 0.0;
};

/// Nearest-rank quantile with non-converged trials ranked last; empty when
/// the rank lands on a non-converged trial. Throws ContractError unless
/// 0 < q <= 1.
std::optional<std::uint64_t> convergence_quantile(const std::vector<TrialDigest>& trials, double q);

/// Trials seed, seed + 1, ...; results merged by trial index, so the report
/// does not depend on config.threads.
TrialBatchReport run_batch(const ExperimentConfig& config);

/// Numeric config keys a sweep may vary.
const std::vector<std::string>& sweep_axes();

/// Sets one numeric key; throws ConfigError for unknown axes or bad values.
void set_axis(ExperimentConfig& config, const std::string& axis, double value);

/// One batch per value, all with the config's master seed.
std::vector<TrialBatchReport> sweep(const ExperimentConfig& config, const std::string& axis,
                                    const std::vector<double>& values);

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Empirical quantile of a pilot batch's convergence rounds. Throws
/// CalibrationError when the quantile falls on a trial that did not converge.
std::uint64_t calibrate(const ExperimentConfig& config, double target_quantile);

inline constexpr int kReportSchemaVersion = 1;

std::string report_json(const TrialBatchReport& report);
std::string sweep_json(const std::string& axis, const std::vector<double>& values,
                       const std::vector<TrialBatchReport>& reports);
void write_trace_csv(const TrialBatchReport& report, std::ostream& out);

}  // namespace pullsync
