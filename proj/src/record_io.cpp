#include "flowservo/record_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "flowservo/config.hpp"
#include "flowservo/error.hpp"

namespace flowservo {

namespace {

using nlohmann::json;

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

EpisodeStatus parse_status(const std::string& s) {
  for (EpisodeStatus st : {EpisodeStatus::kConverged, EpisodeStatus::kMaxSteps, EpisodeStatus::kLostTarget,
                           EpisodeStatus::kControllerError}) {
    if (status_name(st) == s) return st;
  }
  throw FormatError("unknown episode status '" + s + "'", 0);
}

// Empty CSV cell for NaN so spreadsheet tools treat it as missing.
std::string cell(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

}  // namespace

std::string episode_to_json(const EpisodeRecord& r) {
  json j;
  j["scenario_id"] = r.scenario_id;
  j["controller"] = r.controller;
  j["seed"] = r.seed;
  j["status"] = std::string(status_name(r.status));
  j["iterations"] = r.iterations;
  j["trajectory_length"] = r.trajectory_length;
  j["final_t_err"] = r.final_t_err;
  j["final_r_err"] = r.final_r_err;
  j["divergence_resets"] = r.divergence_resets;
  j["error"] = r.error;
  json poses = json::array();
  for (const Pose& p : r.trajectory) {
    const Mat3& m = p.rotation;
    poses.push_back({{"translation", vec(p.translation)},
                     {"rotation", {m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0), m(2, 1), m(2, 2)}}});
  }
  j["trajectory"] = std::move(poses);
  json steps = json::array();
  for (const StepRecord& s : r.steps) {
    steps.push_back({{"step", s.step},
                     {"t_err", s.t_err},
                     {"r_err", s.r_err},
                     {"photometric", s.photometric},
                     {"photometric_sum", s.photometric_sum},
                     {"wall_ms", s.wall_ms},
                     {"loss", number(s.loss)},
                     {"flow_residual", number(s.flow_residual)},
                     {"target_samples", s.target_samples},
                     {"depth_error", number(s.depth_error)},
                     {"depth_updates", s.depth_updates},
                     {"translation_dominant", s.translation_dominant},
                     {"command", vec(s.command.vector())},
                     {"loss_trace", s.loss_trace}});
  }
  j["steps"] = std::move(steps);
  return j.dump(2) + "\n";
}

EpisodeRecord episode_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid episode JSON: ") + e.what(), e.byte);
  }
  try {
    EpisodeRecord r;
    r.scenario_id = j.at("scenario_id").get<std::string>();
    r.controller = j.at("controller").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.status = parse_status(j.at("status").get<std::string>());
    r.iterations = j.at("iterations").get<int>();
    r.trajectory_length = j.at("trajectory_length").get<double>();
    r.final_t_err = j.at("final_t_err").get<double>();
    r.final_r_err = j.at("final_r_err").get<double>();
    r.divergence_resets = j.at("divergence_resets").get<int>();
    r.error = j.at("error").get<std::string>();
    for (const json& p : j.at("trajectory")) {
      Pose pose;
      const auto t = p.at("translation").get<std::vector<double>>();
      const auto m = p.at("rotation").get<std::vector<double>>();
      if (t.size() != 3 || m.size() != 9) throw FormatError("bad pose entry", 0);
      pose.translation = Vec3(t[0], t[1], t[2]);
      pose.rotation << m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8];
      r.trajectory.push_back(pose);
    }
    for (const json& s : j.at("steps")) {
      StepRecord st;
      st.step = s.at("step").get<int>();
      st.t_err = s.at("t_err").get<double>();
      st.r_err = s.at("r_err").get<double>();
      st.photometric = s.at("photometric").get<double>();
      st.photometric_sum = s.at("photometric_sum").get<double>();
      st.wall_ms = s.at("wall_ms").get<double>();
      st.loss = number_or_nan(s.at("loss"));
      st.flow_residual = number_or_nan(s.at("flow_residual"));
      st.target_samples = s.at("target_samples").get<std::size_t>();
      st.depth_error = number_or_nan(s.at("depth_error"));
      st.depth_updates = s.at("depth_updates").get<std::size_t>();
      st.translation_dominant = s.at("translation_dominant").get<bool>();
      const auto c = s.at("command").get<std::vector<double>>();
      if (c.size() != 6) throw FormatError("bad command entry", 0);
      st.command = VelocityScrew::from_vector(Vec6(c.data()));
      st.loss_trace = s.at("loss_trace").get<std::vector<double>>();
      r.steps.push_back(std::move(st));
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("episode JSON: ") + e.what(), 0);
  }
}

std::string steps_csv(const EpisodeRecord& r) {
  std::ostringstream out;
  out << "step,t_err,r_err,photometric,wall_ms,loss\n";
  for (const StepRecord& s : r.steps) {
    out << s.step << ',' << cell(s.t_err) << ',' << cell(s.r_err) << ',' << cell(s.photometric) << ','
        << cell(s.wall_ms) << ',' << cell(s.loss) << '\n';
  }
  return out.str();
}

std::string trajectory_csv(const EpisodeRecord& r) {
  std::ostringstream out;
  out << "step,x,y,z\n";
  for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
    const Vec3& t = r.trajectory[i].translation;
    out << i << ',' << format_double(t.x()) << ',' << format_double(t.y()) << ',' << format_double(t.z()) << '\n';
  }
  return out.str();
}

std::string training_csv(const EpisodeRecord& r) {
  std::ostringstream out;
  out << "step,iteration,loss\n";
  for (const StepRecord& s : r.steps) {
    for (std::size_t i = 0; i < s.loss_trace.size(); ++i) {
      out << s.step << ',' << i << ',' << cell(s.loss_trace[i]) << '\n';
    }
  }
  return out.str();
}

std::string depth_map_csv(const DepthMap& depth) {
  std::string out;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      if (u > 0) out += ',';
      out += format_double(depth.at(u, v));
    }
    out += '\n';
  }
  return out;
}

DepthMap parse_depth_map_csv(std::string_view text) {
  DepthMap depth;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    int count = 0;
    std::size_t i = 0;
    while (i <= line.size()) {
      std::size_t j = line.find(',', i);
      if (j == std::string_view::npos) j = line.size();
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + j, value);
      if (ec != std::errc() || ptr != line.data() + j) throw FormatError("bad depth value", pos + i);
      depth.depths.push_back(value);
      ++count;
      i = j + 1;
    }
    if (depth.height == 0) depth.width = count;
    if (count != depth.width) throw FormatError("ragged depth row", pos);
    ++depth.height;
    pos = end + 1;
  }
  return depth;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed: " + path.string());
}

void write_episode_artifacts(const EpisodeRecord& record, const std::filesystem::path& dir, bool with_training) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "episode.json", episode_to_json(record));
  write_text_file(dir / "steps.csv", steps_csv(record));
  write_text_file(dir / "trajectory.csv", trajectory_csv(record));
  if (with_training) write_text_file(dir / "training.csv", training_csv(record));
}

}  // namespace flowservo
