#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "flowservo/bench.hpp"
#include "flowservo/config.hpp"
#include "flowservo/error.hpp"
#include "flowservo/record_io.hpp"

namespace fs = flowservo;

namespace {

enum ExitCode { kConverged = 0, kConfigError = 1, kMaxSteps = 2, kLost = 3, kControllerError = 4 };

struct Overrides {
  std::optional<std::string> controller;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_steps;
  std::optional<double> eps;
  std::optional<std::size_t> horizon;
  std::optional<int> train_iters;
  std::vector<double> noise_std;
  std::optional<bool> reset_net;
};

void add_overrides(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--controller", o.controller, "Controller id (ibvs, lstm, ff, cem)");
  cmd.add_option("--seed", o.seed, "Episode seed (bench: base seed)");
  cmd.add_option("--max-steps", o.max_steps, "Step budget");
  cmd.add_option("--eps", o.eps, "Photometric convergence threshold");
  cmd.add_option("--horizon", o.horizon, "Plan horizon");
  cmd.add_option("--train-iters", o.train_iters, "Inner optimization iterations");
  cmd.add_option("--noise-std", o.noise_std, "Actuation noise std: one value or six")->expected(1, 6)
      ->delimiter(',');
  cmd.add_option("--reset-net-each-step", o.reset_net, "Retrain networks from scratch every step (true/false)");
}

void apply_overrides(fs::Scenario& s, const Overrides& o) {
  auto set = [&](const char* key, const std::string& value) { fs::set_scenario_key(s, key, value); };
  if (o.controller) set("controller", *o.controller);
  if (o.max_steps) set("max_steps", std::to_string(*o.max_steps));
  if (o.eps) set("eps", fs::format_double(*o.eps));
  if (o.horizon) set("horizon", std::to_string(*o.horizon));
  if (o.train_iters) set("train.iterations", std::to_string(*o.train_iters));
  if (!o.noise_std.empty()) {
    std::string v;
    for (double x : o.noise_std) v += (v.empty() ? "" : " ") + fs::format_double(x);
    set("noise_std", v);
  }
  if (o.reset_net) set("train.reset_each_step", *o.reset_net ? "true" : "false");
  s.validate();
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("FLOWSERVO_SEED");
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long n = std::stoull(v, &used);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw fs::ConfigError("FLOWSERVO_SEED", std::string("not an unsigned integer: '") + v + "'");
  }
}

int exit_code(fs::EpisodeStatus status) {
  switch (status) {
    case fs::EpisodeStatus::kConverged:
      return kConverged;
    case fs::EpisodeStatus::kMaxSteps:
      return kMaxSteps;
    case fs::EpisodeStatus::kLostTarget:
      return kLost;
    case fs::EpisodeStatus::kControllerError:
      break;
  }
  return kControllerError;
}

int cmd_run(const std::string& config_path, const Overrides& o, const std::string& out, bool dump_training,
            bool print_config) {
  fs::RunConfig cfg = config_path.empty() ? fs::RunConfig{} : fs::load_run_config(config_path);
  if (o.seed) {
    cfg.seed = *o.seed;
  } else if (!cfg.has_seed) {
    if (auto s = env_seed()) cfg.seed = *s;
  }
  apply_overrides(cfg.scenario, o);
  if (print_config) {
    std::cout << fs::format_run_config(cfg);
    return kConverged;
  }
  const fs::EpisodeRecord record = fs::run_episode(cfg.scenario, cfg.seed);
  fs::write_episode_artifacts(record, out, dump_training);
  fs::write_text_file(std::filesystem::path(out) / "config.txt", fs::format_run_config(cfg));
  std::cout << record.scenario_id << ' ' << record.controller << ' ' << fs::status_name(record.status)
            << " iterations=" << record.iterations << " t_err=" << record.final_t_err
            << " r_err=" << record.final_r_err << " length=" << record.trajectory_length << '\n';
  if (!record.error.empty()) std::cerr << "error: " << record.error << '\n';
  return exit_code(record.status);
}

int cmd_bench(const std::string& suite_path, const Overrides& o, std::optional<std::string> out, int jobs,
              bool dump_training, bool print_config) {
  fs::BenchSuite suite = suite_path.empty() ? fs::default_desk_suite() : fs::load_bench_suite(suite_path);
  if (o.controller) suite.controllers = {fs::parse_controller(*o.controller)};
  if (o.seed) {
    suite.seeds = {*o.seed};
  } else if (suite_path.empty()) {
    if (auto s = env_seed()) suite.seeds = {*s};
  }
  Overrides per_scenario = o;
  per_scenario.controller.reset();
  for (fs::Scenario& s : suite.scenarios) apply_overrides(s, per_scenario);
  if (out) suite.out_dir = *out;
  suite.validate();
  if (print_config) {
    std::cout << fs::format_bench_suite(suite);
    return kConverged;
  }
  const auto total = fs::bench_episodes(suite).size();
  std::size_t done = 0;
  const auto records = fs::run_bench(suite, jobs, [&](const fs::EpisodeRecord& r) {
    std::cerr << '[' << ++done << '/' << total << "] " << r.scenario_id << ' ' << r.controller << " seed "
              << r.seed << ": " << fs::status_name(r.status) << " after " << r.iterations << " steps\n";
  });
  std::filesystem::create_directories(suite.out_dir);
  for (const fs::EpisodeRecord& r : records) {
    const std::string name = r.scenario_id + "_" + r.controller + "_" + std::to_string(r.seed);
    fs::write_episode_artifacts(r, suite.out_dir / "episodes" / name, dump_training);
  }
  const std::string summary = fs::summary_csv(fs::summarize(records));
  fs::write_text_file(suite.out_dir / "summary.csv", summary);
  fs::write_text_file(suite.out_dir / "episodes.csv", fs::episodes_csv(records));
  fs::write_text_file(suite.out_dir / "suite.txt", fs::format_bench_suite(suite));
  std::cout << summary;
  return kConverged;
}

int cmd_oracle(const std::string& config_path, const std::string& out) {
  const fs::RunConfig cfg = config_path.empty() ? fs::RunConfig{} : fs::load_run_config(config_path);
  const fs::Scenario& s = cfg.scenario;
  const fs::SyntheticScene scene = fs::generate_scene(s.scene);
  const fs::RenderResult a = fs::render(scene, s.start, s.intrinsics);
  const fs::RenderResult b = fs::render(scene, s.goal, s.intrinsics);
  const fs::FlowField flow = fs::flow_from_depth(a.depth, s.start, s.goal, s.intrinsics);
  const std::filesystem::path dir(out);
  std::filesystem::create_directories(dir);
  fs::write_flo(flow, dir / "flow.flo");
  fs::write_text_file(dir / "depth.csv", fs::depth_map_csv(a.depth));
  fs::write_pgm(a.image, dir / "start.pgm");
  fs::write_pgm(b.image, dir / "goal.pgm");
  const double coverage = static_cast<double>(flow.valid_count()) / static_cast<double>(flow.pixel_count());
  std::cout << "valid flow fraction " << coverage << '\n';
  if (coverage < s.lost_fraction) {
    std::cerr << "no overlap: valid flow fraction " << coverage << " below " << s.lost_fraction << '\n';
    return kLost;
  }
  return kConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-based visual servoing simulator"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  Overrides overrides;
  bool dump_training = false;
  bool print_config = false;
  int jobs = 1;

  auto* run = app.add_subcommand("run", "Run one episode");
  run->add_option("--config", config, "Run config file");
  run->add_option("--out", out, "Output directory")->default_val("run_out");
  run->add_flag("--dump-training", dump_training, "Write the inner-loop loss traces");
  run->add_flag("--print-config", print_config, "Print the effective config and exit");
  add_overrides(*run, overrides);

  std::optional<std::string> bench_out;
  auto* bench = app.add_subcommand("bench", "Run a benchmark suite (default: the desk suite)");
  bench->add_option("--config", config, "Suite file");
  bench->add_option("--out", bench_out, "Output directory");
  bench->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  bench->add_flag("--dump-training", dump_training, "Write the inner-loop loss traces");
  bench->add_flag("--print-config", print_config, "Print the effective suite and exit");
  add_overrides(*bench, overrides);

  auto* oracle = app.add_subcommand("oracle", "Dump analytic flow, depth and images for the start/goal pair");
  oracle->add_option("--config", config, "Run config file");
  oracle->add_option("--out", out, "Output directory")->default_val("oracle_out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) return cmd_run(config, overrides, out, dump_training, print_config);
    if (*bench) return cmd_bench(config, overrides, bench_out, jobs, dump_training, print_config);
    return cmd_oracle(config, out);
  } catch (const fs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
}
