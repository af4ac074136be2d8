// Command-line front end for the experiment harness.
//
//   pullsync run --config exp.cfg --out out/ [--seed S]
//   pullsync sweep --config exp.cfg --axis T --values 8,16,32 --out out/
//   pullsync calibrate --config exp.cfg --quantile 0.95
//   pullsync list-protocols
//   pullsync validate-config --config exp.cfg
//
// Exit codes: 0 success, 1 configuration error, 2 non-convergence (with
// --require-convergence, or a calibration pilot that did not converge).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "pullsync/config.hpp"
#include "pullsync/harness.hpp"

namespace fs = std::filesystem;
using namespace pullsync;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kNotConverged = 2;

struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> max_rounds;
  bool require_convergence = false;
};

void report_config_error(const ConfigError& e) {
  for (const auto& d : e.diagnostics()) std::cerr << "error: config: " << d << "\n";
}

ExperimentConfig load(const Common& opts) {
  ExperimentConfig c = parse_config(opts.config_path);
  if (opts.seed) c.seed = *opts.seed;
  if (opts.threads) c.threads = *opts.threads;
  if (opts.max_rounds) c.max_rounds = *opts.max_rounds;
  if (auto problems = validate(c); !problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void write_batch(const fs::path& dir, const TrialBatchReport& report) {
  fs::create_directories(dir);
  write_file(dir / "report.json", report_json(report));
  std::ostringstream csv;
  write_trace_csv(report, csv);
  write_file(dir / "trace.csv", csv.str());
}

std::string summary(const TrialBatchReport& r) {
  std::ostringstream s;
  s << r.protocol_name << ": success_rate=" << r.success_rate
    << " p50=" << (r.p50 ? std::to_string(*r.p50) : "none")
    << " p95=" << (r.p95 ? std::to_string(*r.p95) : "none") << " wall_clock=" << r.wall_clock_seconds
    << "s";
  return s.str();
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> values;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError({"values: not a number: '" + item + "'"});
    values.push_back(v);
  }
  return values;
}

std::string value_label(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

void add_common(CLI::App* cmd, Common& opts, bool needs_out) {
  cmd->add_option("--config", opts.config_path, "experiment file")->required();
  auto* out = cmd->add_option("--out", opts.out_dir, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--seed", opts.seed, "master seed (overrides the file)");
  cmd->add_option("--threads", opts.threads, "worker threads for trials");
  cmd->add_option("--max-rounds", opts.max_rounds, "round budget per trial");
  cmd->add_flag("--require-convergence", opts.require_convergence,
                "exit 2 unless every trial converged");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-stabilizing PULL-model protocol experiments"};
  app.require_subcommand(1, 1);

  Common run_opts, sweep_opts, calib_opts;
  std::string axis, values_text;
  double quantile = 0.95;
  std::string validate_path;
  std::optional<std::uint64_t> validate_seed;

  auto* run = app.add_subcommand("run", "run one trial batch");
  add_common(run, run_opts, true);
  auto* sw = app.add_subcommand("sweep", "run one batch per value of a parameter");
  add_common(sw, sweep_opts, true);
  sw->add_option("--axis", axis, "parameter to vary")->required();
  sw->add_option("--values", values_text, "comma-separated values")->required();
  auto* cal = app.add_subcommand("calibrate", "quantile of convergence rounds in a pilot batch");
  add_common(cal, calib_opts, false);
  cal->add_option("--quantile", quantile, "target quantile in (0, 1)");
  auto* list = app.add_subcommand("list-protocols", "print protocol names");
  auto* val = app.add_subcommand("validate-config", "check an experiment file");
  val->add_option("--config", validate_path, "experiment file")->required();
  val->add_option("--seed", validate_seed, "master seed (overrides the file)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*list) {
      for (const auto& name : protocol_names()) std::cout << name << "\n";
      return kOk;
    }
    if (*val) {
      ExperimentConfig c = parse_config(validate_path);
      if (validate_seed) c.seed = *validate_seed;
      if (auto problems = validate(c); !problems.empty()) throw ConfigError(std::move(problems));
      std::cout << "ok: " << c.protocol << "\n";
      return kOk;
    }
    if (*run) {
      const ExperimentConfig c = load(run_opts);
      const TrialBatchReport report = run_batch(c);
      write_batch(run_opts.out_dir, report);
      std::cerr << summary(report) << "\n";
      if (run_opts.require_convergence && report.success_rate < 1.0) {
        std::cerr << "error: convergence: " << report.success_rate * 100.0
                  << "% of trials converged\n";
        return kNotConverged;
      }
      return kOk;
    }
    if (*sw) {
      const ExperimentConfig c = load(sweep_opts);
      const std::vector<double> values = parse_values(values_text);
      const auto reports = sweep(c, axis, values);
      fs::create_directories(sweep_opts.out_dir);
      bool all = true;
      for (std::size_t k = 0; k < reports.size(); ++k) {
        write_batch(fs::path(sweep_opts.out_dir) / (axis + "=" + value_label(values[k])), reports[k]);
        std::cerr << axis << "=" << value_label(values[k]) << " " << summary(reports[k]) << "\n";
        all = all && reports[k].success_rate == 1.0;
      }
      write_file(fs::path(sweep_opts.out_dir) / "sweep.json", sweep_json(axis, values, reports));
      if (sweep_opts.require_convergence && !all) {
        std::cerr << "error: convergence: some trials did not converge\n";
        return kNotConverged;
      }
      return kOk;
    }
    if (*cal) {
      const ExperimentConfig c = load(calib_opts);
      if (!(quantile > 0.0 && quantile < 1.0)) throw ConfigError({"quantile: must lie in (0, 1)"});
      const std::uint64_t threshold = calibrate(c, quantile);
      std::ostringstream j;
      j << "{\"schema_version\": " << kReportSchemaVersion << ", \"quantile\": " << quantile
        << ", \"threshold\": " << threshold << "}\n";
      std::cout << j.str();
      if (!calib_opts.out_dir.empty()) {
        fs::create_directories(calib_opts.out_dir);
        write_file(fs::path(calib_opts.out_dir) / "calibration.json", j.str());
      }
      return kOk;
    }
  } catch (const ConfigError& e) {
    report_config_error(e);
    return kConfigError;
  } catch (const CalibrationError& e) {
    std::cerr << "error: convergence: " << e.what() << "\n";
    return kNotConverged;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}
