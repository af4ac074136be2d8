#include "pullsync/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <thread>

#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wmaybe-uninitialized"
#include <json.hpp>
#pragma GCC diagnostic pop

#include "pullsync/clocks.hpp"
#include "pullsync/consensus.hpp"
#include "pullsync/dissemination.hpp"
#include "pullsync/reducer.hpp"

namespace pullsync {

// ---------------------------------------------------------------------------
// Legality

LegalPredicate LegalPredicate::clocks_equal(const ProtocolSpec& spec) {
  if (!spec.has_clock()) throw ContractError("clocks_equal: '" + spec.name + "' has no clock");
  return {Kind::kClocksEqual, "clocks_equal", [clock = spec.clock](const Population& pop) {
            std::optional<std::uint64_t> first;
            for (std::size_t i = 0; i < pop.size(); ++i) {
              if (pop.is_byzantine(i)) continue;
              const std::uint64_t c = clock(pop.snapshot(i));
              if (!first) {
                first = c;
              } else if (c != *first) {
                return false;
              }
            }
            return true;
          }};
}

LegalPredicate LegalPredicate::outputs_equal(bool b_maj) {
  return {Kind::kOutputsEqual, b_maj ? "outputs_equal(1)" : "outputs_equal(0)",
          [b_maj](const Population& pop) {
            for (std::size_t i = 0; i < pop.size(); ++i) {
              if (!pop.is_byzantine(i) && pop.output_bit(i) != b_maj) return false;
            }
            return true;
          }};
}

LegalPredicate LegalPredicate::custom(std::string name, LegalFn fn) {
  return {Kind::kCustom, std::move(name), std::move(fn)};
}

LegalPredicate consensus_reached() {
  return LegalPredicate::custom("consensus", [](const Population& pop) {
    std::optional<bool> first;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (pop.is_byzantine(i)) continue;
      if (!first) {
        first = pop.output_bit(i);
      } else if (pop.output_bit(i) != *first) {
        return false;
      }
    }
    return true;
  });
}

bool majority_input(const Population& pop) {
  const auto& s = pop.initial_sources();
  if (!s || s->total() == 0) throw ContractError("majority input undefined: no sources");
  if (s->ones == s->zeros) throw ContractError("majority input undefined: k1 == k0");
  return s->ones > s->zeros;
}

// ---------------------------------------------------------------------------
// Configs and protocols

std::uint64_t ExperimentConfig::effective_hold_window() const {
  return hold_window ? *hold_window : default_hold_window(n);
}

const std::vector<std::string>& protocol_names() {
  static const std::vector<std::string> names{
      "maj-consensus", "syn-simple", "syn-intermediate", "syn-intermediate-nested",
      "syn-clock",     "syn-clock-4bit", "certainty",   "subphase",
      "phase-spread",  "syn-phase-spread"};
  return names;
}

namespace {

bool is_dissemination(const std::string& p) {
  return p == "certainty" || p == "subphase" || p == "phase-spread" || p == "syn-phase-spread";
}

bool needs_power_of_two(const std::string& p) {
  return p == "syn-simple" || p == "syn-intermediate" || p == "syn-intermediate-nested";
}

bool is_syn_clock(const std::string& p) { return p == "syn-clock" || p == "syn-clock-4bit"; }

std::uint64_t baseline_modulus(const ExperimentConfig& c) {
  std::uint64_t t = c.modulus != 0 ? c.modulus : baseline_period(c.n, c.gamma);
  if (c.protocol == "subphase" && c.modulus == 0 && t % 2 != 0) ++t;
  return t;
}

// Parameter checks that do not need a constructed protocol.
std::vector<std::string> parameter_problems(const ExperimentConfig& c) {
  std::vector<std::string> out;
  const auto& names = protocol_names();
  if (std::find(names.begin(), names.end(), c.protocol) == names.end()) {
    out.push_back("protocol: unknown protocol '" + c.protocol + "'");
    return out;
  }
  if (c.n < 1) out.push_back("n: must be at least 1");
  if (c.n < 2 && c.protocol != "maj-consensus" && !needs_power_of_two(c.protocol)) {
    out.push_back("n: " + c.protocol + " needs n >= 2");
  }
  if (c.trials < 1) out.push_back("trials: must be at least 1");
  if (c.max_rounds < 1) out.push_back("max_rounds: must be at least 1");
  if (c.trace_stride < 1) out.push_back("trace_stride: must be at least 1");
  if (c.threads < 1) out.push_back("threads: must be at least 1");
  if (!c.seed) out.push_back("seed: required (set it in the config or pass --seed)");
  if (!(c.gamma > 0.0)) out.push_back("gamma: must be positive");
  if (!(c.gamma_phase >= 1.0)) out.push_back("gamma_phase: must be at least 1");
  if (!(c.epsilon >= 0.0)) out.push_back("epsilon: must be non-negative");

  if (needs_power_of_two(c.protocol)) {
    if (!is_power_of_two(c.modulus) || c.modulus < 2 || c.modulus > (std::uint64_t{1} << 63)) {
      out.push_back("T: " + c.protocol + " needs a power of two >= 2 (got " +
                    std::to_string(c.modulus) + ")");
    }
  }
  if (is_syn_clock(c.protocol) && c.modulus < 2) {
    out.push_back("T: " + c.protocol + " needs T >= 2 (got " + std::to_string(c.modulus) + ")");
  }
  if ((c.protocol == "certainty" || c.protocol == "subphase") && c.n >= 2 && c.gamma > 0.0) {
    const std::uint64_t t = baseline_modulus(c);
    if (t < 2) out.push_back("T: period must be at least 2");
    if (c.protocol == "subphase" && t % 2 != 0) {
      out.push_back("T: subphase needs an even period (got " + std::to_string(t) + ")");
    }
  }

  const std::size_t k = c.sources_one + c.sources_zero;
  if (k > c.n) out.push_back("sources: k1 + k0 = " + std::to_string(k) + " exceeds n");
  if (is_dissemination(c.protocol)) {
    if (k == 0) {
      out.push_back("sources: " + c.protocol + " needs at least one source");
    } else if (c.sources_one == c.sources_zero) {
      out.push_back("sources: tie k1 = k0 leaves the majority bit undefined");
    } else if (c.sources_zero > 0 && c.sources_one > 0) {
      const double ratio = static_cast<double>(c.sources_one) / static_cast<double>(c.sources_zero);
      if (std::abs(ratio - 1.0) <= c.epsilon) {
        out.push_back("epsilon: |k1/k0 - 1| = " + std::to_string(std::abs(ratio - 1.0)) +
                      " does not exceed epsilon");
      }
    }
  }

  if (c.byzantine > 0) {
    const std::size_t cap = default_byzantine_cap(c.n);
    if (c.byzantine > cap) {
      out.push_back("byzantine: " + std::to_string(c.byzantine) + " exceeds the cap floor(n^0.4) = " +
                    std::to_string(cap));
    }
    if (c.byzantine + k > c.n) out.push_back("byzantine: not enough non-source agents");
  }
  if (c.byzantine_strategy != "fixed" && c.byzantine_strategy != "random" &&
      c.byzantine_strategy != "worst-opinion") {
    out.push_back("byzantine_strategy: unknown strategy '" + c.byzantine_strategy + "'");
  }
  return out;
}

ProtocolSpec construct(const ExperimentConfig& c) {
  const std::string& p = c.protocol;
  if (p == "maj-consensus") return maj_consensus_protocol();
  if (p == "syn-simple") return syn_simple_protocol(c.modulus);
  if (p == "syn-intermediate") return syn_intermediate_protocol(c.modulus);
  if (p == "syn-intermediate-nested") return syn_intermediate_nested_protocol(c.modulus);
  if (p == "syn-clock") return syn_clock_protocol({c.modulus, c.n, c.gamma});
  if (p == "syn-clock-4bit") return syn_clock_4bit_protocol({c.modulus, c.n, c.gamma});
  if (p == "certainty") return certainty_protocol(baseline_modulus(c));
  if (p == "subphase") return subphase_protocol(baseline_modulus(c));
  if (p == "phase-spread") return phase_spread_protocol(phase_schedule(c.n, c.gamma_phase));
  if (p == "syn-phase-spread") return syn_phase_spread_protocol({c.n, c.gamma, c.gamma_phase});
  throw ConfigError({"protocol: unknown protocol '" + p + "'"});
}

std::vector<std::string> spec_problems(const ExperimentConfig& c, const ProtocolSpec& spec) {
  std::vector<std::string> out;
  if (c.sampling == SamplingMode::kBit && !spec.bitwise_independent) {
    out.push_back("sampling: BIT needs a bitwise-independent protocol; " + c.protocol + " is not");
  }
  for (const std::uint64_t v : c.adversary.values) {
    if (v >= spec.init_space.principal_bound) {
      out.push_back("adversary_values: " + std::to_string(v) + " outside [0, " +
                    std::to_string(spec.init_space.principal_bound) + ")");
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> validate(const ExperimentConfig& config) {
  std::vector<std::string> problems = parameter_problems(config);
  // a missing seed does not stop the protocol from being checked
  const bool blocked = std::any_of(problems.begin(), problems.end(),
                                   [](const std::string& p) { return p.rfind("seed:", 0) != 0; });
  if (blocked) return problems;
  try {
    for (auto& p : spec_problems(config, construct(config))) problems.push_back(std::move(p));
  } catch (const ContractError& e) {
    problems.push_back(std::string("protocol: ") + e.what());
  }
  return problems;
}

ProtocolSpec build_protocol(const ExperimentConfig& config) {
  std::vector<std::string> problems = parameter_problems(config);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  ProtocolSpec spec;
  try {
    spec = construct(config);
  } catch (const ContractError& e) {
    throw ConfigError({std::string("protocol: ") + e.what()});
  }
  problems = spec_problems(config, spec);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return spec;
}

LegalPredicate legal_predicate_for(const ExperimentConfig& config, const ProtocolSpec& spec,
                                   const Population& initial) {
  if (is_dissemination(config.protocol)) return LegalPredicate::outputs_equal(majority_input(initial));
  if (spec.has_clock()) return LegalPredicate::clocks_equal(spec);
  return consensus_reached();
}

Population initial_population(const ExperimentConfig& config, const ProtocolSpec& spec,
                              std::uint64_t seed) {
  Population pop = adversarial_init(config.n, spec, config.adversary,
                                    {config.sources_one, config.sources_zero}, seed);
  if (config.byzantine > 0) {
    assign_byzantine(pop, config.byzantine, seed, default_byzantine_cap(config.n));
  }
  return pop;
}

// ---------------------------------------------------------------------------
// Batches

std::optional<std::uint64_t> convergence_quantile(const std::vector<TrialDigest>& trials, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw ContractError("quantile must lie in (0, 1]");
  if (trials.empty()) return std::nullopt;
  constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();
  std::vector<std::uint64_t> rounds;
  rounds.reserve(trials.size());
  for (const auto& t : trials) rounds.push_back(t.converged ? *t.t_converge : kNever);
  std::sort(rounds.begin(), rounds.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(rounds.size())));
  const std::uint64_t v = rounds[std::max<std::size_t>(rank, 1) - 1];
  if (v == kNever) return std::nullopt;
  return v;
}

namespace {

struct TrialOutcome {
  TrialDigest digest;
  std::vector<RoundMetrics> trace;
};

TrialOutcome run_trial(const ExperimentConfig& config, const ProtocolSpec& spec, std::size_t index) {
  const std::uint64_t seed = *config.seed + index;
  Population pop = initial_population(config, spec, seed);
  const LegalPredicate legal = legal_predicate_for(config, spec, pop);

  RunOptions options;
  options.max_rounds = config.max_rounds;
  options.hold_window = config.effective_hold_window();
  options.record_trace = config.trace;
  options.trace_stride = config.trace_stride;
  options.step.mode = config.sampling;
  if (config.byzantine > 0) {
    options.step.byzantine = make_byzantine_strategy(config.byzantine_strategy, config.byzantine_bit);
  }
  ConvergenceResult r = run_until(pop, spec, legal.as_function(), seed, options);

  TrialOutcome out;
  out.digest = {index, seed, r.converged, r.t_converge, r.held_for, r.rounds_run};
  out.trace = std::move(r.trace);
  return out;
}

}  // namespace

TrialBatchReport run_batch(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const ProtocolSpec spec = build_protocol(config);

  std::vector<TrialOutcome> outcomes(config.trials);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.trials; i = next++) outcomes[i] = run_trial(config, spec, i);
  };
  const unsigned workers = std::max(1U, std::min<unsigned>(config.threads,
                                                           static_cast<unsigned>(config.trials)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  TrialBatchReport report;
  report.config = config;
  report.protocol_name = spec.name;
  report.ell = spec.ell;
  std::size_t converged = 0;
  for (auto& o : outcomes) {
    converged += o.digest.converged ? 1 : 0;
    report.trials.push_back(o.digest);
    if (config.trace) report.traces.push_back(std::move(o.trace));
  }
  report.success_rate = static_cast<double>(converged) / static_cast<double>(config.trials);
  report.p50 = convergence_quantile(report.trials, 0.5);
  report.p95 = convergence_quantile(report.trials, 0.95);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{
      "n",       "T",           "gamma",     "gamma_phase", "epsilon",     "sources_one",
      "sources_zero", "byzantine", "trials",  "max_rounds",  "hold_window", "seed"};
  return axes;
}

namespace {

std::uint64_t as_count(const std::string& axis, double value) {
  if (!(value >= 0.0) || value != std::floor(value) || value > 9.0e18) {
    throw ConfigError({axis + ": expected a non-negative integer, got " + std::to_string(value)});
  }
  return static_cast<std::uint64_t>(value);
}

}  // namespace

void set_axis(ExperimentConfig& c, const std::string& axis, double value) {
  if (axis == "n") c.n = as_count(axis, value);
  else if (axis == "T") c.modulus = as_count(axis, value);
  else if (axis == "gamma") c.gamma = value;
  else if (axis == "gamma_phase") c.gamma_phase = value;
  else if (axis == "epsilon") c.epsilon = value;
  else if (axis == "sources_one") c.sources_one = as_count(axis, value);
  else if (axis == "sources_zero") c.sources_zero = as_count(axis, value);
  else if (axis == "byzantine") c.byzantine = as_count(axis, value);
  else if (axis == "trials") c.trials = as_count(axis, value);
  else if (axis == "max_rounds") c.max_rounds = as_count(axis, value);
  else if (axis == "hold_window") c.hold_window = as_count(axis, value);
  else if (axis == "seed") c.seed = as_count(axis, value);
  else throw ConfigError({"axis: unknown sweep axis '" + axis + "'"});
}

std::vector<TrialBatchReport> sweep(const ExperimentConfig& config, const std::string& axis,
                                    const std::vector<double>& values) {
  const auto& axes = sweep_axes();
  if (std::find(axes.begin(), axes.end(), axis) == axes.end()) {
    throw ConfigError({"axis: unknown sweep axis '" + axis + "'"});
  }
  std::vector<ExperimentConfig> configs;
  std::vector<std::string> problems;
  for (const double v : values) {
    ExperimentConfig c = config;
    set_axis(c, axis, v);
    for (auto& p : validate(c)) problems.push_back(axis + "=" + std::to_string(v) + ": " + p);
    configs.push_back(std::move(c));
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  std::vector<TrialBatchReport> reports;
  for (const auto& c : configs) reports.push_back(run_batch(c));
  return reports;
}

std::uint64_t calibrate(const ExperimentConfig& config, double target_quantile) {
  if (!(target_quantile > 0.0 && target_quantile < 1.0)) {
    throw ContractError("calibrate: target quantile must lie in (0, 1)");
  }
  const TrialBatchReport report = run_batch(config);
  const auto q = convergence_quantile(report.trials, target_quantile);
  if (!q) {
    throw CalibrationError("calibrate: pilot did not converge within max_rounds = " +
                           std::to_string(config.max_rounds) + " at quantile " +
                           std::to_string(target_quantile));
  }
  return *q;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using nlohmann::ordered_json;

ordered_json optional_json(const std::optional<std::uint64_t>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json config_json(const ExperimentConfig& c) {
  ordered_json j;
  j["protocol"] = c.protocol;
  j["n"] = c.n;
  j["T"] = c.modulus;
  j["gamma"] = c.gamma;
  j["gamma_phase"] = c.gamma_phase;
  j["epsilon"] = c.epsilon;
  j["sources_one"] = c.sources_one;
  j["sources_zero"] = c.sources_zero;
  j["adversary"] = c.adversary.name();
  j["adversary_values"] = c.adversary.values;
  j["byzantine"] = c.byzantine;
  j["byzantine_strategy"] = c.byzantine_strategy;
  j["byzantine_bit"] = c.byzantine_bit ? 1 : 0;
  j["sampling"] = to_string(c.sampling);
  j["trials"] = c.trials;
  j["max_rounds"] = c.max_rounds;
  j["hold_window"] = c.effective_hold_window();
  j["seed"] = c.seed ? *c.seed : 0;
  j["trace"] = c.trace;
  j["trace_stride"] = c.trace_stride;
  return j;
}

ordered_json report_body(const TrialBatchReport& r) {
  ordered_json j;
  j["protocol_name"] = r.protocol_name;
  j["ell"] = r.ell;
  j["config"] = config_json(r.config);
  j["seed_policy"] = "trial i runs with seed + i";
  j["success_rate"] = r.success_rate;
  j["p50"] = optional_json(r.p50);
  j["p95"] = optional_json(r.p95);
  ordered_json trials = ordered_json::array();
  for (const auto& t : r.trials) {
    ordered_json d;
    d["index"] = t.index;
    d["seed"] = t.seed;
    d["converged"] = t.converged;
    d["t_converge"] = optional_json(t.t_converge);
    d["held_for"] = t.held_for;
    d["rounds_run"] = t.rounds_run;
    trials.push_back(std::move(d));
  }
  j["trials"] = std::move(trials);
  return j;
}

}  // namespace

std::string report_json(const TrialBatchReport& report) {
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  const ordered_json body = report_body(report);
  for (const auto& [k, v] : body.items()) j[k] = v;
  return j.dump(2) + "\n";
}

std::string sweep_json(const std::string& axis, const std::vector<double>& values,
                       const std::vector<TrialBatchReport>& reports) {
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["axis"] = axis;
  j["values"] = values;
  j["seed_policy"] = "every value reuses the master seed; trial i runs with seed + i";
  ordered_json list = ordered_json::array();
  for (const auto& r : reports) list.push_back(report_body(r));
  j["reports"] = std::move(list);
  return j.dump(2) + "\n";
}

void write_trace_csv(const TrialBatchReport& report, std::ostream& out) {
  out << "trial,round,agreement_fraction,legal_flag,speakers,clock_entropy\n";
  char line[160];
  for (std::size_t t = 0; t < report.traces.size(); ++t) {
    for (const RoundMetrics& m : report.traces[t]) {
      std::snprintf(line, sizeof line, "%zu,%llu,%.6f,%d,%zu,%.6f\n", t,
                    static_cast<unsigned long long>(m.round), m.agreement_fraction, m.legal ? 1 : 0,
                    m.speakers, m.clock_entropy);
      out << line;
    }
  }
}

}  // namespace pullsync
