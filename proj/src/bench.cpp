#include "flowservo/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "flowservo/config.hpp"
#include "flowservo/error.hpp"

namespace flowservo {

namespace {

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == ',')) ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != ',') ++j;
    if (j > i) words.push_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

std::uint64_t parse_seed(std::string_view word) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), v);
  if (ec != std::errc() || ptr != word.data() + word.size()) {
    throw ConfigError("seeds", "expected unsigned integers, got '" + std::string(word) + "'");
  }
  return v;
}

std::string cell(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

}  // namespace

void BenchSuite::validate() const {
  if (scenarios.empty()) throw ConfigError("", "suite has no scenarios");
  if (controllers.empty()) throw ConfigError("controllers", "suite has no controllers");
  if (seeds.empty()) throw ConfigError("seeds", "suite has no seeds");
  std::set<std::string> ids;
  for (const Scenario& s : scenarios) {
    if (!ids.insert(s.id).second) throw ConfigError("id", "duplicate scenario id '" + s.id + "'");
    s.validate();
  }
  std::set<ControllerKind> kinds(controllers.begin(), controllers.end());
  if (kinds.size() != controllers.size()) throw ConfigError("controllers", "duplicate controller");
}

BenchSuite default_desk_suite() {
  BenchSuite suite;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 10; ++i) {
    Vec3 dir_t(normal(rng), normal(rng), 0.5 * normal(rng));
    dir_t.normalize();
    Vec3 dir_r(normal(rng), normal(rng), normal(rng));
    dir_r.normalize();
    const double t_mag = 0.15 + 0.25 * i / 9.0;
    const double r_mag = (5.0 + 10.0 * i / 9.0) * std::numbers::pi / 180.0;
    Scenario s;
    s.id = "desk" + std::to_string(i);
    s.start = Pose::from_rotation_vector(dir_r * r_mag, dir_t * t_mag);
    suite.scenarios.push_back(std::move(s));
  }
  suite.controllers = {ControllerKind::kIbvs, ControllerKind::kRecurrentMpc, ControllerKind::kFeedforwardMpc,
                       ControllerKind::kCemMpc};
  suite.seeds = {7};
  return suite;
}

BenchSuite parse_bench_suite(std::string_view text) {
  const auto sections = parse_sections(text);
  check_schema_version(sections.front());
  BenchSuite suite;
  suite.controllers.clear();
  suite.seeds.clear();
  bool have_controllers = false;
  bool have_seeds = false;
  Scenario base;
  std::vector<ConfigEntry> defaults;
  for (const ConfigEntry& e : sections.front().entries) {
    if (e.key == "schema_version") continue;
    if (e.key == "controllers") {
      have_controllers = true;
      for (auto w : split_words(e.value)) suite.controllers.push_back(parse_controller(w));
    } else if (e.key == "seeds") {
      have_seeds = true;
      for (auto w : split_words(e.value)) suite.seeds.push_back(parse_seed(w));
    } else if (e.key == "out") {
      suite.out_dir = e.value;
    } else if (e.key == "id") {
      throw ConfigError("id", "scenario ids come from section headers (line " + std::to_string(e.line) + ")");
    } else {
      defaults.push_back(e);
    }
  }
  apply_scenario_entries(base, defaults);
  if (!have_controllers) suite.controllers = default_desk_suite().controllers;
  if (!have_seeds) suite.seeds = {1};
  for (std::size_t i = 1; i < sections.size(); ++i) {
    const ConfigSection& sec = sections[i];
    if (sec.kind != "scenario") {
      throw ConfigError("", "unknown section kind '" + sec.kind + "' (line " + std::to_string(sec.line) + ")");
    }
    Scenario s = base;
    for (const ConfigEntry& e : sec.entries) {
      if (e.key == "id" || e.key == "controllers" || e.key == "seeds" || e.key == "out" ||
          e.key == "schema_version") {
        throw ConfigError(e.key, "not allowed inside a scenario section (line " + std::to_string(e.line) + ")");
      }
    }
    apply_scenario_entries(s, sec.entries);
    s.id = sec.name;
    suite.scenarios.push_back(std::move(s));
  }
  suite.validate();
  return suite;
}

BenchSuite load_bench_suite(const std::filesystem::path& path) { return parse_bench_suite(read_text_file(path)); }

std::string format_bench_suite(const BenchSuite& suite) {
  std::ostringstream out;
  out << "schema_version = " << kSchemaVersion << "\n";
  out << "controllers =";
  for (ControllerKind c : suite.controllers) out << ' ' << controller_id(c);
  out << "\nseeds =";
  for (std::uint64_t s : suite.seeds) out << ' ' << s;
  out << "\nout = " << suite.out_dir.string() << "\n";
  for (const Scenario& s : suite.scenarios) {
    out << "\n[scenario " << s.id << "]\n";
    for (const std::string& key : scenario_keys()) {
      if (key == "id") continue;
      out << key << " = " << get_scenario_key(s, key) << "\n";
    }
  }
  return out.str();
}

std::vector<EpisodeKey> bench_episodes(const BenchSuite& suite) {
  std::vector<EpisodeKey> keys;
  for (std::size_t i = 0; i < suite.scenarios.size(); ++i) {
    for (ControllerKind c : suite.controllers) {
      for (std::uint64_t seed : suite.seeds) keys.push_back({i, c, seed + i});
    }
  }
  std::stable_sort(keys.begin(), keys.end(), [&](const EpisodeKey& a, const EpisodeKey& b) {
    const std::string& ia = suite.scenarios[a.scenario].id;
    const std::string& ib = suite.scenarios[b.scenario].id;
    if (ia != ib) return ia < ib;
    if (a.controller != b.controller) return controller_id(a.controller) < controller_id(b.controller);
    return a.seed < b.seed;
  });
  return keys;
}

std::vector<EpisodeRecord> run_bench(const BenchSuite& suite, int jobs,
                                     const std::function<void(const EpisodeRecord&)>& on_done) {
  suite.validate();
  std::vector<SceneConfig> configs;
  std::vector<SyntheticScene> scenes;
  std::vector<std::size_t> scene_of(suite.scenarios.size());
  for (std::size_t i = 0; i < suite.scenarios.size(); ++i) {
    const SceneConfig& sc = suite.scenarios[i].scene;
    auto it = std::find(configs.begin(), configs.end(), sc);
    if (it == configs.end()) {
      configs.push_back(sc);
      scenes.push_back(generate_scene(sc));
      it = configs.end() - 1;
    }
    scene_of[i] = static_cast<std::size_t>(it - configs.begin());
  }

  const auto keys = bench_episodes(suite);
  std::vector<EpisodeRecord> records(keys.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < keys.size(); k = next++) {
      const EpisodeKey& key = keys[k];
      Scenario s = suite.scenarios[key.scenario];
      s.controller = key.controller;
      EpisodeRecord r;
      try {
        r = run_episode(s, scenes[scene_of[key.scenario]], key.seed);
      } catch (const std::exception& e) {
        r.scenario_id = s.id;
        r.controller = std::string(controller_id(key.controller));
        r.seed = key.seed;
        r.status = EpisodeStatus::kControllerError;
        r.error = e.what();
      }
      records[k] = std::move(r);
      if (on_done) {
        std::lock_guard lock(done_mutex);
        on_done(records[k]);
      }
    }
  };
  const int n = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(keys.size(), 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return records;
}

const SummaryRow* SummaryTable::find(std::string_view controller) const {
  for (const SummaryRow& r : rows) {
    if (r.controller == controller) return &r;
  }
  return nullptr;
}

SummaryTable summarize(const std::vector<EpisodeRecord>& records) {
  SummaryTable table;
  for (const EpisodeRecord& r : records) {
    if (!table.find(r.controller)) table.rows.push_back({r.controller});
  }
  for (SummaryRow& row : table.rows) {
    for (const EpisodeRecord& r : records) {
      if (r.controller != row.controller) continue;
      ++row.episodes;
      if (!r.converged()) {
        ++row.diverged;
        continue;
      }
      ++row.converged;
      row.t_err += r.final_t_err;
      row.r_err_deg += r.final_r_err;
      row.trajectory_length += r.trajectory_length;
      row.iterations += r.iterations;
    }
    const double n = row.converged > 0 ? row.converged : std::numeric_limits<double>::quiet_NaN();
    row.t_err /= n;
    row.r_err_deg /= n;
    row.trajectory_length /= n;
    row.iterations /= n;
  }
  return table;
}

std::string summary_csv(const SummaryTable& table) {
  std::ostringstream out;
  out << "controller,episodes,converged,diverged,t_err_m,r_err_deg,tj_length_m,iterations\n";
  for (const SummaryRow& r : table.rows) {
    out << r.controller << ',' << r.episodes << ',' << r.converged << ',' << r.diverged << ',' << cell(r.t_err)
        << ',' << cell(r.r_err_deg) << ',' << cell(r.trajectory_length) << ',' << cell(r.iterations) << '\n';
  }
  return out.str();
}

std::string episodes_csv(const std::vector<EpisodeRecord>& records) {
  std::ostringstream out;
  out << "scenario,controller,seed,status,iterations,t_err_m,r_err_deg,tj_length_m\n";
  for (const EpisodeRecord& r : records) {
    out << r.scenario_id << ',' << r.controller << ',' << r.seed << ',' << status_name(r.status) << ','
        << r.iterations << ',' << cell(r.final_t_err) << ',' << cell(r.final_r_err) << ','
        << cell(r.trajectory_length) << '\n';
  }
  return out.str();
}

double median_depth_error(const std::vector<EpisodeRecord>& records) {
  std::vector<double> errs;
  for (const EpisodeRecord& r : records) {
    for (const StepRecord& s : r.steps) {
      if (s.translation_dominant && std::isfinite(s.depth_error)) errs.push_back(s.depth_error);
    }
  }
  if (errs.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = errs.begin() + static_cast<std::ptrdiff_t>(errs.size() / 2);
  std::nth_element(errs.begin(), mid, errs.end());
  return *mid;
}

}  // namespace flowservo
