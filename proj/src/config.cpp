#include "pullsync/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace pullsync {

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "protocol",  "n",           "T",           "gamma",          "gamma_phase",
      "epsilon",   "sources_one", "sources_zero", "adversary",     "adversary_values",
      "byzantine", "byzantine_strategy", "byzantine_bit", "sampling", "trials",
      "max_rounds", "hold_window", "seed",       "threads",        "trace",
      "trace_stride"};
  return keys;
}

namespace {

std::string trim(std::string s) {
  auto blank = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), blank));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), blank).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

class Reader {
 public:
  explicit Reader(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (!has(key)) return;
    const std::string& v = values_.at(key);
    unsigned long long x = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || end != v.data() + v.size()) {
      problems.push_back(key + ": expected a non-negative integer, got '" + v + "'");
      return;
    }
    out = static_cast<Int>(x);
  }

  void real(const std::string& key, double& out) {
    if (!has(key)) return;
    const std::string& v = values_.at(key);
    std::istringstream in(v);
    double x = 0.0;
    if (!(in >> x) || !in.eof() || !std::isfinite(x)) {
      problems.push_back(key + ": expected a number, got '" + v + "'");
      return;
    }
    out = x;
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const std::string v = lower(values_.at(key));
    if (v == "true" || v == "1") {
      out = true;
    } else if (v == "false" || v == "0") {
      out = false;
    } else {
      problems.push_back(key + ": expected true/false/1/0, got '" + values_.at(key) + "'");
    }
  }

  std::vector<std::uint64_t> list(const std::string& key) {
    std::vector<std::uint64_t> out;
    if (!has(key)) return out;
    std::istringstream in(values_.at(key));
    std::string item;
    while (std::getline(in, item, ',')) {
      item = trim(item);
      std::uint64_t x = 0;
      const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
      if (item.empty() || ec != std::errc() || end != item.data() + item.size()) {
        problems.push_back(key + ": expected comma-separated integers, got '" + values_.at(key) + "'");
        return {};
      }
      out.push_back(x);
    }
    return out;
  }

  const std::string& text(const std::string& key) const { return values_.at(key); }

  std::vector<std::string> problems;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  std::vector<std::string> problems;
  std::map<std::string, std::string> values;
  const auto& keys = config_keys();

  std::istringstream in(text);
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(number);
    if (eq == std::string::npos) {
      problems.push_back(where + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      problems.push_back(where + ": unknown key '" + key + "'");
    } else if (values.count(key) != 0) {
      problems.push_back(where + ": duplicate key '" + key + "'");
    } else if (value.empty()) {
      problems.push_back(where + ": empty value for '" + key + "'");
    } else {
      values[key] = value;
    }
  }
  for (const char* required : {"protocol", "n"}) {
    if (values.count(required) == 0) problems.push_back(std::string(required) + ": missing required key");
  }

  ExperimentConfig c;
  Reader r(values);
  if (r.has("protocol")) c.protocol = r.text("protocol");
  r.integer("n", c.n);
  r.integer("T", c.modulus);
  r.real("gamma", c.gamma);
  r.real("gamma_phase", c.gamma_phase);
  r.real("epsilon", c.epsilon);
  r.integer("sources_one", c.sources_one);
  r.integer("sources_zero", c.sources_zero);
  r.integer("byzantine", c.byzantine);
  if (r.has("byzantine_strategy")) c.byzantine_strategy = r.text("byzantine_strategy");
  r.boolean("byzantine_bit", c.byzantine_bit);
  r.integer("trials", c.trials);
  r.integer("max_rounds", c.max_rounds);
  if (r.has("hold_window")) {
    std::uint64_t h = 0;
    r.integer("hold_window", h);
    c.hold_window = h;
  }
  if (r.has("seed")) {
    std::uint64_t s = 0;
    r.integer("seed", s);
    c.seed = s;
  }
  r.integer("threads", c.threads);
  r.boolean("trace", c.trace);
  r.integer("trace_stride", c.trace_stride);
  if (r.has("sampling")) {
    const std::string s = lower(r.text("sampling"));
    if (s == "pull") {
      c.sampling = SamplingMode::kPull;
    } else if (s == "bit") {
      c.sampling = SamplingMode::kBit;
    } else {
      r.problems.push_back("sampling: expected PULL or BIT, got '" + r.text("sampling") + "'");
    }
  }
  const std::vector<std::uint64_t> adversary_values = r.list("adversary_values");
  if (r.has("adversary")) {
    try {
      c.adversary = AdversaryStrategy::parse(r.text("adversary"), adversary_values);
    } catch (const ConfigError& e) {
      for (const auto& d : e.diagnostics()) r.problems.push_back(d);
    }
  } else if (r.has("adversary_values")) {
    r.problems.push_back("adversary_values: given without an adversary");
  }
  problems.insert(problems.end(), r.problems.begin(), r.problems.end());

  for (auto& p : validate(c)) {
    const bool reported = std::any_of(problems.begin(), problems.end(), [&](const std::string& q) {
      return q.rfind(p.substr(0, p.find(':') + 1), 0) == 0;
    });
    if (p.rfind("seed:", 0) != 0 && !reported) problems.push_back(std::move(p));
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot read '" + path + "'"});
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

}  // namespace pullsync
