#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "flowservo/servo.hpp"

namespace flowservo {

// Config files are plain text, one `key = value` per line. `#` starts a comment.
// Vectors are whitespace-separated numbers. Every file carries `schema_version = 1`.
// Suite files may add `[scenario <id>]` sections; keys above the first section apply
// to every scenario.

inline constexpr int kSchemaVersion = 1;

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

struct ConfigSection {
  std::string kind;  // empty for the leading global block
  std::string name;
  int line = 0;
  std::vector<ConfigEntry> entries;
};

/// Splits text into sections. Throws ConfigError on syntax errors and duplicate keys.
std::vector<ConfigSection> parse_sections(std::string_view text);

/// Names of all keys accepted in a scenario block, in print order.
const std::vector<std::string>& scenario_keys();
bool is_scenario_key(std::string_view key);

/// Assigns one key. Throws ConfigError naming the key on unknown keys or bad values.
void set_scenario_key(Scenario& scenario, std::string_view key, std::string_view value);
std::string get_scenario_key(const Scenario& scenario, std::string_view key);

/// Applies entries in order, rejecting rotation and rotation_matrix for the same pose.
/// Errors carry the entry's line number.
void apply_scenario_entries(Scenario& scenario, const std::vector<ConfigEntry>& entries);

/// A single-episode configuration.
struct RunConfig {
  Scenario scenario;
  std::uint64_t seed = 1;
  bool has_seed = false;  // the text carried an explicit `seed` entry
};

/// Parses and validates a run config. Throws ConfigError.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Emits every key, so parse_run_config(format_run_config(c)) reproduces c exactly.
std::string format_run_config(const RunConfig& config);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

std::string read_text_file(const std::filesystem::path& path);

/// Checks the mandatory schema_version entry of the global block.
void check_schema_version(const ConfigSection& global);

}  // namespace flowservo
