#pragma once

// Flat `key = value` experiment files. Lines starting with '#' and blank
// lines are ignored; every key may appear at most once; unknown keys are
// errors. Required: protocol, n. See README.md for the key list.

#include <string>
#include <vector>

#include "pullsync/harness.hpp"

namespace pullsync {

const std::vector<std::string>& config_keys();

/// Parses and validates config text; a missing seed is allowed here so a
/// command-line seed can supply it. Throws ConfigError listing every problem.
ExperimentConfig parse_config_text(const std::string& text);

/// Reads `path` and parses it. Throws ConfigError when unreadable or invalid.
ExperimentConfig parse_config(const std::string& path);

}  // namespace pullsync
