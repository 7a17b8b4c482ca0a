#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "flowservo/servo.hpp"

namespace flowservo {

/// A set of episodes: every scenario is run with every controller and every seed.
/// The episode seed is `seed + scenario index`, so scenarios sharing a base seed
/// still draw independent noise.
struct BenchSuite {
  std::vector<Scenario> scenarios;
  std::vector<ControllerKind> controllers;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir = "bench_out";

  /// Throws ConfigError on an empty suite or duplicate scenario ids.
  void validate() const;
};

/// The ten-scenario desk suite: offsets from 0.15 m / 5 deg up to 0.4 m / 15 deg
/// in seeded random directions, all four controllers.
BenchSuite default_desk_suite();

/// Suite file: a global block with `schema_version`, optional `controllers`, `seeds`
/// and `out`, and default scenario keys, followed by one `[scenario <id>]` section per
/// scenario. Throws ConfigError.
BenchSuite parse_bench_suite(std::string_view text);
BenchSuite load_bench_suite(const std::filesystem::path& path);
std::string format_bench_suite(const BenchSuite& suite);

struct EpisodeKey {
  std::size_t scenario = 0;
  ControllerKind controller = ControllerKind::kIbvs;
  std::uint64_t seed = 0;
};

/// All (scenario, controller, seed) triples in output order: sorted by scenario id,
/// controller id, then seed.
std::vector<EpisodeKey> bench_episodes(const BenchSuite& suite);

/// Runs every episode on up to `jobs` worker threads. Scenes are generated once per
/// distinct scene config. Exceptions from an episode are stored in its record with
/// status kControllerError. Records come back in bench_episodes order. `on_done` is
/// called from worker threads, serialized.
std::vector<EpisodeRecord> run_bench(const BenchSuite& suite, int jobs,
                                     const std::function<void(const EpisodeRecord&)>& on_done = {});

struct SummaryRow {
  std::string controller;
  int episodes = 0;
  int converged = 0;
  int diverged = 0;  // every episode that did not converge
  // Means over converged episodes; NaN when none converged.
  double t_err = 0.0;
  double r_err_deg = 0.0;
  double trajectory_length = 0.0;
  double iterations = 0.0;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;

  const SummaryRow* find(std::string_view controller) const;
};

/// One row per controller, in order of first appearance in `records`.
SummaryTable summarize(const std::vector<EpisodeRecord>& records);

/// controller,episodes,converged,diverged,t_err_m,r_err_deg,tj_length_m,iterations
std::string summary_csv(const SummaryTable& table);
/// One line per episode without wall-clock fields.
std::string episodes_csv(const std::vector<EpisodeRecord>& records);

/// Median relative depth error over translation-dominant steps of all records;
/// NaN when no step qualifies.
double median_depth_error(const std::vector<EpisodeRecord>& records);

}  // namespace flowservo
