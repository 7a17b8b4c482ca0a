#include "flowservo/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "flowservo/error.hpp"

namespace flowservo {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

double to_double(std::string_view key, std::string_view text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) {
    throw ConfigError(std::string(key), "expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

template <typename Int>
Int to_integer(std::string_view key, std::string_view text) {
  Int v = 0;
  const auto* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) {
    throw ConfigError(std::string(key), "expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

bool to_bool(std::string_view key, std::string_view text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(std::string(key), "expected true or false, got '" + std::string(text) + "'");
}

Eigen::VectorXd to_vector(std::string_view key, std::string_view text, std::initializer_list<int> sizes) {
  const auto parts = split_ws(text);
  if (std::find(sizes.begin(), sizes.end(), static_cast<int>(parts.size())) == sizes.end()) {
    std::string want;
    for (int n : sizes) want += (want.empty() ? "" : " or ") + std::to_string(n);
    throw ConfigError(std::string(key), "expected " + want + " numbers, got " + std::to_string(parts.size()));
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) v[static_cast<Eigen::Index>(i)] = to_double(key, parts[i]);
  return v;
}

std::string join(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += format_double(v[i]);
  }
  return out;
}

Mat3 to_rotation_matrix(std::string_view key, std::string_view text) {
  const Eigen::VectorXd v = to_vector(key, text, {9});
  Mat3 r;
  r << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
  Pose p;
  p.rotation = r;
  if (!p.is_valid(1e-6)) throw ConfigError(std::string(key), "not a rotation matrix");
  return r;
}

std::string format_rotation_matrix(const Mat3& r) {
  Eigen::VectorXd v(9);
  v << r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2);
  return join(v);
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

struct KeyHandler {
  std::string key;
  std::function<void(Scenario&, std::string_view, std::string_view)> set;
  // Empty getter: input-only alias that is never printed.
  std::function<std::string(const Scenario&)> get;
};

template <typename Field>
KeyHandler double_key(std::string key, Field field) {
  return {key,
          [field](Scenario& s, std::string_view k, std::string_view v) { field(s) = to_double(k, v); },
          [field](const Scenario& s) { return format_double(field(s)); }};
}

template <typename Int, typename Field>
KeyHandler int_key(std::string key, Field field) {
  return {key,
          [field](Scenario& s, std::string_view k, std::string_view v) { field(s) = to_integer<Int>(k, v); },
          [field](const Scenario& s) { return std::to_string(field(s)); }};
}

template <typename Field>
KeyHandler bool_key(std::string key, Field field) {
  return {key,
          [field](Scenario& s, std::string_view k, std::string_view v) { field(s) = to_bool(k, v); },
          [field](const Scenario& s) { return format_bool(field(s)); }};
}

template <typename Field>
KeyHandler vec3_key(std::string key, Field field) {
  return {key,
          [field](Scenario& s, std::string_view k, std::string_view v) { field(s) = Vec3(to_vector(k, v, {3})); },
          [field](const Scenario& s) { return join(field(s)); }};
}

template <typename Field>
KeyHandler path_key(std::string key, Field field) {
  return {key,
          [field](Scenario& s, std::string_view, std::string_view v) { field(s) = std::filesystem::path(v); },
          [field](const Scenario& s) { return field(s).string(); }};
}

std::vector<KeyHandler> make_handlers() {
  std::vector<KeyHandler> h;
  h.push_back({"id", [](Scenario& s, std::string_view k, std::string_view v) {
                 if (v.empty()) throw ConfigError(std::string(k), "must not be empty");
                 s.id = v;
               },
               [](const Scenario& s) { return s.id; }});
  h.push_back({"controller",
               [](Scenario& s, std::string_view, std::string_view v) { s.controller = parse_controller(v); },
               [](const Scenario& s) { return std::string(controller_id(s.controller)); }});

  h.push_back(int_key<int>("camera.width", [](auto& s) -> auto& { return s.intrinsics.width; }));
  h.push_back(int_key<int>("camera.height", [](auto& s) -> auto& { return s.intrinsics.height; }));
  h.push_back(double_key("camera.fx", [](auto& s) -> auto& { return s.intrinsics.fx; }));
  h.push_back(double_key("camera.fy", [](auto& s) -> auto& { return s.intrinsics.fy; }));
  h.push_back(double_key("camera.cx", [](auto& s) -> auto& { return s.intrinsics.cx; }));
  h.push_back(double_key("camera.cy", [](auto& s) -> auto& { return s.intrinsics.cy; }));

  for (const char* which : {"start", "goal"}) {
    const std::string prefix = which;
    auto pose = [prefix](auto& s) -> auto& { return prefix == "start" ? s.start : s.goal; };
    h.push_back(vec3_key(prefix + ".translation", [pose](auto& s) -> auto& { return pose(s).translation; }));
    h.push_back({prefix + ".rotation_matrix",
                 [pose](Scenario& s, std::string_view k, std::string_view v) {
                   pose(s).rotation = to_rotation_matrix(k, v);
                 },
                 [pose](const Scenario& s) { return format_rotation_matrix(pose(s).rotation); }});
    // Axis-angle (radians) input alias.
    h.push_back({prefix + ".rotation",
                 [pose](Scenario& s, std::string_view k, std::string_view v) {
                   pose(s).rotation = exp_so3(Vec3(to_vector(k, v, {3})));
                 },
                 {}});
  }

  h.push_back(double_key("dt", [](auto& s) -> auto& { return s.dt; }));
  h.push_back(double_key("eps", [](auto& s) -> auto& { return s.eps; }));
  h.push_back(int_key<int>("max_steps", [](auto& s) -> auto& { return s.max_steps; }));
  h.push_back(int_key<std::size_t>("horizon", [](auto& s) -> auto& { return s.horizon; }));
  h.push_back(double_key("limits.linear", [](auto& s) -> auto& { return s.limits.linear; }));
  h.push_back(double_key("limits.angular", [](auto& s) -> auto& { return s.limits.angular; }));

  h.push_back(double_key("ibvs.lambda", [](auto& s) -> auto& { return s.ibvs.lambda; }));
  h.push_back(double_key("ibvs.mu", [](auto& s) -> auto& { return s.ibvs.mu; }));
  h.push_back(int_key<int>("lstm.hidden", [](auto& s) -> auto& { return s.lstm_hidden; }));
  h.push_back(int_key<int>("lstm.layers", [](auto& s) -> auto& { return s.lstm_layers; }));
  h.push_back(int_key<int>("ff.hidden", [](auto& s) -> auto& { return s.ff_hidden; }));
  h.push_back(int_key<int>("cem.population", [](auto& s) -> auto& { return s.cem.population; }));
  h.push_back(double_key("cem.elite_fraction", [](auto& s) -> auto& { return s.cem.elite_fraction; }));
  h.push_back(int_key<int>("cem.iterations", [](auto& s) -> auto& { return s.cem.iterations; }));
  h.push_back(double_key("cem.initial_std_linear", [](auto& s) -> auto& { return s.cem.initial_std_linear; }));
  h.push_back(double_key("cem.initial_std_angular", [](auto& s) -> auto& { return s.cem.initial_std_angular; }));
  h.push_back(double_key("cem.std_floor", [](auto& s) -> auto& { return s.cem.std_floor; }));
  h.push_back(bool_key("cem.monotone", [](auto& s) -> auto& { return s.cem.monotone; }));

  h.push_back(int_key<int>("train.iterations", [](auto& s) -> auto& { return s.training.iterations; }));
  h.push_back(double_key("train.learning_rate", [](auto& s) -> auto& { return s.training.learning_rate; }));
  h.push_back(bool_key("train.early_stop", [](auto& s) -> auto& { return s.training.early_stop; }));
  h.push_back(double_key("train.plateau_tolerance", [](auto& s) -> auto& { return s.training.plateau_tolerance; }));
  h.push_back(int_key<int>("train.plateau_window", [](auto& s) -> auto& { return s.training.plateau_window; }));
  h.push_back(bool_key("train.monotone", [](auto& s) -> auto& { return s.training.monotone; }));
  h.push_back(double_key("train.backtrack_factor", [](auto& s) -> auto& { return s.training.backtrack_factor; }));
  h.push_back(double_key("train.regrow_factor", [](auto& s) -> auto& { return s.training.regrow_factor; }));
  h.push_back(bool_key("train.reset_each_step", [](auto& s) -> auto& { return s.reset_net_each_step; }));
  h.push_back(bool_key("train.zero_output", [](auto& s) -> auto& { return s.zero_output_init; }));

  h.push_back({"noise_std",
               [](Scenario& s, std::string_view k, std::string_view v) {
                 const Eigen::VectorXd x = to_vector(k, v, {1, 6});
                 s.noise_std = x.size() == 1 ? Vec6::Constant(x[0]) : Vec6(x);
               },
               [](const Scenario& s) { return join(s.noise_std); }});
  h.push_back(double_key("initial_velocity_std", [](auto& s) -> auto& { return s.initial_velocity_std; }));

  h.push_back({"flow.source",
               [](Scenario& s, std::string_view k, std::string_view v) {
                 if (v == "oracle") {
                   s.flow_source = FlowSource::kOracle;
                 } else if (v == "flo") {
                   s.flow_source = FlowSource::kFloDirectory;
                 } else {
                   throw ConfigError(std::string(k), "expected oracle or flo, got '" + std::string(v) + "'");
                 }
               },
               [](const Scenario& s) { return std::string(s.flow_source == FlowSource::kOracle ? "oracle" : "flo"); }});
  h.push_back(path_key("flow.dir", [](auto& s) -> auto& { return s.flow_dir; }));
  h.push_back(path_key("flow.dump_dir", [](auto& s) -> auto& { return s.flow_dump_dir; }));
  h.push_back(int_key<int>("grid.stride", [](auto& s) -> auto& { return s.grid.stride; }));
  h.push_back(double_key("depth.prior", [](auto& s) -> auto& { return s.depth_prior; }));
  h.push_back(double_key("depth.min_flow", [](auto& s) -> auto& { return s.depth_min_flow; }));
  h.push_back(double_key("lost_fraction", [](auto& s) -> auto& { return s.lost_fraction; }));

  h.push_back(int_key<std::uint64_t>("scene.seed", [](auto& s) -> auto& { return s.scene.seed; }));
  h.push_back(vec3_key("scene.extent_min", [](auto& s) -> auto& { return s.scene.extent_min; }));
  h.push_back(vec3_key("scene.extent_max", [](auto& s) -> auto& { return s.scene.extent_max; }));
  h.push_back(double_key("scene.wall_spacing", [](auto& s) -> auto& { return s.scene.wall_spacing; }));
  h.push_back(double_key("scene.desk_height", [](auto& s) -> auto& { return s.scene.desk_height; }));
  h.push_back(int_key<int>("scene.clutter_patches", [](auto& s) -> auto& { return s.scene.clutter_patches; }));
  h.push_back(double_key("scene.patch_size_min", [](auto& s) -> auto& { return s.scene.patch_size_min; }));
  h.push_back(double_key("scene.patch_size_max", [](auto& s) -> auto& { return s.scene.patch_size_max; }));
  h.push_back(double_key("scene.surface_spacing", [](auto& s) -> auto& { return s.scene.surface_spacing; }));
  h.push_back(double_key("scene.texture_cell", [](auto& s) -> auto& { return s.scene.texture_cell; }));
  return h;
}

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> h = make_handlers();
  return h;
}

const KeyHandler* find_handler(std::string_view key) {
  for (const KeyHandler& h : handlers()) {
    if (h.key == key) return &h;
  }
  return nullptr;
}

std::string at_line(int line) { return " (line " + std::to_string(line) + ")"; }

}  // namespace

std::string format_double(double value) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, r.ptr);
}

std::vector<ConfigSection> parse_sections(std::string_view text) {
  std::vector<ConfigSection> sections(1);
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", "unterminated section header" + at_line(line_no));
      const auto parts = split_ws(line.substr(1, line.size() - 2));
      if (parts.size() != 2) {
        throw ConfigError("", "section header must be [kind name]" + at_line(line_no));
      }
      sections.push_back({std::string(parts[0]), std::string(parts[1]), line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("", "expected key = value" + at_line(line_no));
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("", "missing key" + at_line(line_no));
    auto& entries = sections.back().entries;
    if (std::any_of(entries.begin(), entries.end(), [&](const ConfigEntry& e) { return e.key == key; })) {
      throw ConfigError(key, "duplicate key" + at_line(line_no));
    }
    entries.push_back({key, value, line_no});
  }
  return sections;
}

const std::vector<std::string>& scenario_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const KeyHandler& h : handlers()) {
      if (h.get) k.push_back(h.key);
    }
    return k;
  }();
  return keys;
}

bool is_scenario_key(std::string_view key) { return find_handler(key) != nullptr; }

void set_scenario_key(Scenario& scenario, std::string_view key, std::string_view value) {
  const KeyHandler* h = find_handler(key);
  if (!h) throw ConfigError(std::string(key), "unknown key");
  h->set(scenario, key, value);
}

std::string get_scenario_key(const Scenario& scenario, std::string_view key) {
  const KeyHandler* h = find_handler(key);
  if (!h || !h->get) throw ConfigError(std::string(key), "unknown key");
  return h->get(scenario);
}

void check_schema_version(const ConfigSection& global) {
  const auto it = std::find_if(global.entries.begin(), global.entries.end(),
                               [](const ConfigEntry& e) { return e.key == "schema_version"; });
  if (it == global.entries.end()) throw ConfigError("schema_version", "missing");
  const int v = to_integer<int>("schema_version", it->value);
  if (v != kSchemaVersion) {
    throw ConfigError("schema_version", "unsupported version " + it->value + " (expected " +
                                            std::to_string(kSchemaVersion) + ")");
  }
}

void apply_scenario_entries(Scenario& scenario, const std::vector<ConfigEntry>& entries) {
  bool matrix[2] = {false, false};
  bool rotvec[2] = {false, false};
  for (const ConfigEntry& e : entries) {
    for (int i = 0; i < 2; ++i) {
      const std::string p = i == 0 ? "start" : "goal";
      matrix[i] |= e.key == p + ".rotation_matrix";
      rotvec[i] |= e.key == p + ".rotation";
      if (matrix[i] && rotvec[i]) throw ConfigError(e.key, "give either rotation or rotation_matrix, not both");
    }
    try {
      set_scenario_key(scenario, e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(err.key(), err.detail() + at_line(e.line));
    }
  }
}

RunConfig parse_run_config(std::string_view text) {
  const auto sections = parse_sections(text);
  if (sections.size() > 1) {
    throw ConfigError("", "sections are only allowed in suite files" + at_line(sections[1].line));
  }
  const ConfigSection& global = sections.front();
  check_schema_version(global);
  RunConfig config;
  std::vector<ConfigEntry> rest;
  for (const ConfigEntry& e : global.entries) {
    if (e.key == "schema_version") continue;
    if (e.key == "seed") {
      config.seed = to_integer<std::uint64_t>(e.key, e.value);
      config.has_seed = true;
      continue;
    }
    rest.push_back(e);
  }
  apply_scenario_entries(config.scenario, rest);
  config.scenario.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_text_file(path)); }

std::string format_run_config(const RunConfig& config) {
  std::ostringstream out;
  out << "schema_version = " << kSchemaVersion << "\n";
  out << "seed = " << config.seed << "\n";
  for (const std::string& key : scenario_keys()) {
    out << key << " = " << get_scenario_key(config.scenario, key) << "\n";
  }
  return out.str();
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace flowservo
