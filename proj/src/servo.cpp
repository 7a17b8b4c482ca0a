#include "flowservo/servo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>

#include "flowservo/error.hpp"

namespace flowservo {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum Stream : std::uint64_t { kInitialVelocity = 1, kNoise = 2, kNetwork = 3, kCem = 4 };

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

struct Action {
  VelocityScrew command;
  double loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> trace;
};

/// Controller state owned by one episode.
class Controller {
 public:
  Controller(const Scenario& s, std::uint64_t seed) : scenario_(s), seed_(seed) {
    const std::uint64_t net_seed = derive_seed(seed, kNetwork);
    if (s.controller == ControllerKind::kRecurrentMpc) {
      ControlNetConfig c;
      c.hidden = s.lstm_hidden;
      c.layers = s.lstm_layers;
      c.horizon = s.horizon;
      c.seed = net_seed;
      c.limits = s.limits;
      c.zero_output = s.zero_output_init;
      net_ = std::make_unique<ControlNet>(c);
    } else if (s.controller == ControllerKind::kFeedforwardMpc) {
      FeedforwardNetConfig c;
      c.hidden = s.ff_hidden;
      c.horizon = s.horizon;
      c.seed = net_seed;
      c.limits = s.limits;
      c.zero_output = s.zero_output_init;
      net_ = std::make_unique<FeedforwardNet>(c);
    }
  }

  Action act(const HorizonModel& model, const FlowSampleSet& target, const VelocityScrew& previous,
             int step) {
    Action a;
    switch (scenario_.controller) {
      case ControllerKind::kIbvs: {
        a.command = scenario_.limits.clamp(ibvs_step(model.interaction, target, scenario_.ibvs));
        a.loss = flow_loss(model, VelocityPlan{{a.command}}, target);
        break;
      }
      case ControllerKind::kCemMpc: {
        const PlanResult r = cem_plan(model, target, scenario_.cem,
                                      derive_seed(seed_, kCem + 16 * static_cast<std::uint64_t>(step)),
                                      scenario_.horizon, scenario_.limits);
        a.command = scenario_.limits.clamp(r.plan.twists.front());
        a.trace = r.loss_trace;
        break;
      }
      case ControllerKind::kRecurrentMpc:
      case ControllerKind::kFeedforwardMpc: {
        if (scenario_.reset_net_each_step) net_->reset();
        const FlowObjective objective(model, target);
        PlanResult r;
        try {
          r = train_plan(*net_, previous, objective, scenario_.training);
        } catch (const DivergenceError&) {
          ++divergence_resets;
          net_->reset();
          r = train_plan(*net_, previous, objective, scenario_.training);
        }
        // Receding horizon: only the first twist is executed.
        a.command = scenario_.limits.clamp(r.plan.twists.front());
        a.trace = std::move(r.loss_trace);
        break;
      }
    }
    if (!a.trace.empty()) a.loss = a.trace.back();
    return a;
  }

  int divergence_resets = 0;

 private:
  const Scenario& scenario_;
  std::uint64_t seed_;
  std::unique_ptr<PlanNetwork> net_;
};

/// Per-grid-cell depth estimates carried across steps.
class DepthGrid {
 public:
  DepthGrid(const Scenario& s)
      : grid_(s.grid),
        cols_(grid_.positions(s.intrinsics.width).size()),
        depths_(grid_.cell_count(s.intrinsics.width, s.intrinsics.height), s.depth_prior) {}

  double& at(int u, int v) {
    const auto col = static_cast<std::size_t>((u - grid_.stride / 2) / grid_.stride);
    const auto row = static_cast<std::size_t>((v - grid_.stride / 2) / grid_.stride);
    return depths_[row * cols_ + col];
  }

 private:
  SampleGrid grid_;
  std::size_t cols_;
  std::vector<double> depths_;
};

FlowField load_flow(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("missing flow file " + path.string());
  return read_flo(path);
}

}  // namespace

void Scenario::validate() const {
  if (intrinsics.width < 1 || intrinsics.height < 1) throw ConfigError("camera.width", "image size must be positive");
  try {
    intrinsics.validate();
  } catch (const DomainError& e) {
    throw ConfigError("camera.fx", e.what());
  }
  if (!start.is_valid(1e-6)) throw ConfigError("start.rotation", "invalid pose");
  if (!goal.is_valid(1e-6)) throw ConfigError("goal.rotation", "invalid pose");
  if (!(dt > 0.0)) throw ConfigError("dt", "must be positive");
  if (!(eps > 0.0)) throw ConfigError("eps", "must be positive");
  if (max_steps < 1) throw ConfigError("max_steps", "must be at least 1");
  if (horizon < 1) throw ConfigError("horizon", "must be at least 1");
  if (!(limits.linear > 0.0)) throw ConfigError("limits.linear", "must be positive");
  if (!(limits.angular > 0.0)) throw ConfigError("limits.angular", "must be positive");
  if (!(ibvs.lambda > 0.0)) throw ConfigError("ibvs.lambda", "must be positive");
  if (!(ibvs.mu >= 0.0)) throw ConfigError("ibvs.mu", "must be non-negative");
  if (lstm_hidden < 1) throw ConfigError("lstm.hidden", "must be positive");
  if (lstm_layers < 1) throw ConfigError("lstm.layers", "must be positive");
  if (ff_hidden < 1) throw ConfigError("ff.hidden", "must be positive");
  if (cem.population < 1) throw ConfigError("cem.population", "must be positive");
  if (!(cem.elite_fraction > 0.0 && cem.elite_fraction <= 1.0)) {
    throw ConfigError("cem.elite_fraction", "must be in (0, 1]");
  }
  if (cem.population * cem.elite_fraction < 2.0) {
    throw ConfigError("cem.elite_fraction", "population * elite_fraction must be at least 2");
  }
  if (cem.iterations < 1) throw ConfigError("cem.iterations", "must be positive");
  if (!(cem.initial_std_linear > 0.0)) throw ConfigError("cem.initial_std_linear", "must be positive");
  if (!(cem.initial_std_angular > 0.0)) throw ConfigError("cem.initial_std_angular", "must be positive");
  if (!(cem.std_floor > 0.0)) throw ConfigError("cem.std_floor", "must be positive");
  if (training.iterations < 1) throw ConfigError("train.iterations", "must be positive");
  if (!(training.learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be positive");
  if (!(training.plateau_tolerance >= 0.0)) throw ConfigError("train.plateau_tolerance", "must be non-negative");
  if (training.plateau_window < 1) throw ConfigError("train.plateau_window", "must be positive");
  if (!(training.backtrack_factor > 0.0 && training.backtrack_factor < 1.0)) {
    throw ConfigError("train.backtrack_factor", "must be in (0, 1)");
  }
  if (!(training.regrow_factor >= 1.0)) throw ConfigError("train.regrow_factor", "must be at least 1");
  if (!((noise_std.array() >= 0.0).all())) throw ConfigError("noise_std", "must be non-negative");
  if (!(initial_velocity_std >= 0.0)) throw ConfigError("initial_velocity_std", "must be non-negative");
  if (flow_source == FlowSource::kFloDirectory && flow_dir.empty()) {
    throw ConfigError("flow.dir", "required for the flo-directory flow source");
  }
  if (grid.stride < 1) throw ConfigError("grid.stride", "must be positive");
  if (!(depth_prior > kMinDepth)) throw ConfigError("depth.prior", "must exceed the minimum depth");
  if (!(depth_min_flow >= 0.0)) throw ConfigError("depth.min_flow", "must be non-negative");
  if (!(lost_fraction >= 0.0 && lost_fraction <= 1.0)) throw ConfigError("lost_fraction", "must be in [0, 1]");
  if (!((scene.extent_max - scene.extent_min).array() > 0.0).all()) {
    throw ConfigError("scene.extent_max", "must exceed scene.extent_min in every axis");
  }
  if (!(scene.wall_spacing > 0.0)) throw ConfigError("scene.wall_spacing", "must be positive");
  if (!(scene.surface_spacing > 0.0)) throw ConfigError("scene.surface_spacing", "must be positive");
  if (!(scene.texture_cell > 0.0)) throw ConfigError("scene.texture_cell", "must be positive");
  if (scene.clutter_patches < 0) throw ConfigError("scene.clutter_patches", "must be non-negative");
  if (!(scene.patch_size_min > 0.0)) throw ConfigError("scene.patch_size_min", "must be positive");
  if (scene.patch_size_max < scene.patch_size_min) {
    throw ConfigError("scene.patch_size_max", "must be at least scene.patch_size_min");
  }
}

std::filesystem::path target_flow_path(const std::filesystem::path& dir, int step) {
  char name[32];
  std::snprintf(name, sizeof(name), "target_%06d.flo", step);
  return dir / name;
}

std::filesystem::path proxy_flow_path(const std::filesystem::path& dir, int step) {
  char name[32];
  std::snprintf(name, sizeof(name), "proxy_%06d.flo", step);
  return dir / name;
}

std::string_view status_name(EpisodeStatus status) {
  switch (status) {
    case EpisodeStatus::kConverged: return "converged";
    case EpisodeStatus::kMaxSteps: return "max_steps";
    case EpisodeStatus::kLostTarget: return "lost_target";
    case EpisodeStatus::kControllerError: return "controller_error";
  }
  return "unknown";
}

double trajectory_length(const std::vector<Pose>& trajectory) {
  double len = 0.0;
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    len += (trajectory[i].translation - trajectory[i - 1].translation).norm();
  }
  return len;
}

VelocityScrew inject_noise(const VelocityScrew& twist, const Vec6& std, std::mt19937_64& rng,
                           const VelocityLimits& limits) {
  if ((std.array() < 0.0).any()) throw DomainError("inject_noise: negative std");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec6 v = twist.vector();
  for (int i = 0; i < 6; ++i) {
    if (std[i] > 0.0) v[i] += std[i] * normal(rng);
  }
  return limits.clamp(VelocityScrew::from_vector(v));
}

EpisodeRecord run_episode(const Scenario& scenario, std::uint64_t seed) {
  scenario.validate();
  return run_episode(scenario, generate_scene(scenario.scene), seed);
}

EpisodeRecord run_episode(const Scenario& s, const SyntheticScene& scene, std::uint64_t seed) {
  using Clock = std::chrono::steady_clock;
  s.validate();
  const Intrinsics& k = s.intrinsics;

  EpisodeRecord rec;
  rec.scenario_id = s.id;
  rec.controller = std::string(controller_id(s.controller));
  rec.seed = seed;

  const Image goal_image = render(scene, s.goal, k).image;
  if (!s.flow_dump_dir.empty()) std::filesystem::create_directories(s.flow_dump_dir);

  std::mt19937_64 init_rng(derive_seed(seed, kInitialVelocity));
  std::mt19937_64 noise_rng(derive_seed(seed, kNoise));
  VelocityScrew previous = inject_noise(VelocityScrew{}, Vec6::Constant(s.initial_velocity_std), init_rng, s.limits);

  Controller controller(s, seed);
  DepthGrid depth_grid(s);
  const std::size_t grid_cells = s.grid.cell_count(k.width, k.height);
  const auto lost_below = std::max<std::size_t>(
      kMinSamples, static_cast<std::size_t>(std::ceil(s.lost_fraction * static_cast<double>(grid_cells))));

  Pose pose = s.start;
  Pose previous_pose = pose;
  VelocityScrew last_command;
  bool moved = false;

  for (int step = 0;; ++step) {
    const auto t0 = Clock::now();
    StepRecord sr;
    sr.step = step;
    const RenderResult view = render(scene, pose, k);
    const PhotometricError phot = photometric_error(view.image, goal_image);
    const PoseError perr = pose_error(pose, s.goal);
    sr.t_err = perr.translation;
    sr.r_err = perr.rotation_deg;
    sr.photometric = phot.mean;
    sr.photometric_sum = phot.sum;
    rec.trajectory.push_back(pose);

    auto finish = [&](EpisodeStatus status) {
      rec.status = status;
      rec.iterations = step;
      sr.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      rec.steps.push_back(sr);
    };
    if (phot.mean <= s.eps) {
      finish(EpisodeStatus::kConverged);
      break;
    }
    if (step >= s.max_steps) {
      finish(EpisodeStatus::kMaxSteps);
      break;
    }

    FlowSampleSet target;
    try {
      const FlowField target_field = s.flow_source == FlowSource::kOracle
                                         ? flow_from_depth(view.depth, pose, s.goal, k)
                                         : load_flow(target_flow_path(s.flow_dir, step));
      if (!s.flow_dump_dir.empty()) write_flo(target_field, target_flow_path(s.flow_dump_dir, step));
      target = subsample(target_field, k, s.grid, 0);
    } catch (const Error& e) {
      rec.error = e.what();
      finish(EpisodeStatus::kControllerError);
      break;
    }
    sr.target_samples = target.size();
    if (target.size() < lost_below) {
      rec.error = "valid target flow on " + std::to_string(target.size()) + " of " +
                  std::to_string(grid_cells) + " samples";
      finish(EpisodeStatus::kLostTarget);
      break;
    }
    sr.flow_residual = target.displacement_vector().norm();

    // Refresh depths from the flow back to the previous frame.
    if (moved && last_command.linear.norm() > 0.0) {
      try {
        const FlowField proxy_field = s.flow_source == FlowSource::kOracle
                                          ? flow_from_depth(view.depth, pose, previous_pose, k)
                                          : load_flow(proxy_flow_path(s.flow_dir, step));
        if (!s.flow_dump_dir.empty()) write_flo(proxy_field, proxy_flow_path(s.flow_dump_dir, step));
        const FlowSampleSet proxy = subsample(proxy_field, k, s.grid, 0);
        std::vector<double> prior;
        prior.reserve(proxy.size());
        for (const auto& p : proxy.samples) prior.push_back(depth_grid.at(p.u, p.v));
        const VelocityScrew back{-last_command.linear, -last_command.angular};
        const DepthEstimate est = depth_from_flow(proxy, back, s.dt, prior, s.depth_prior, s.depth_min_flow);
        std::vector<double> rel_errors;
        std::vector<double> solved;
        for (std::size_t i = 0; i < proxy.size(); ++i) {
          const auto& p = proxy.samples[i];
          depth_grid.at(p.u, p.v) = est.depths[i];
          if (!est.conditioned[i]) continue;
          solved.push_back(est.depths[i]);
          if (view.depth.valid(p.u, p.v)) {
            const double truth = view.depth.at(p.u, p.v);
            rel_errors.push_back(std::abs(est.depths[i] - truth) / truth);
          }
        }
        sr.depth_updates = solved.size();
        sr.depth_error = median(rel_errors);
        if (!solved.empty()) {
          sr.translation_dominant =
              last_command.linear.norm() / median(solved) >= last_command.angular.norm();
        }
      } catch (const Error& e) {
        if (s.flow_source == FlowSource::kFloDirectory && !dynamic_cast<const UnobservableDepthError*>(&e)) {
          rec.error = e.what();
          finish(EpisodeStatus::kControllerError);
          break;
        }
        // Otherwise previous depths stay in place.
      }
    }

    std::vector<DepthSample> samples;
    samples.reserve(target.size());
    for (const auto& t : target.samples) samples.push_back({t.coord.x, t.coord.y, depth_grid.at(t.u, t.v)});
    const HorizonModel model{stack_interaction(samples), s.dt};

    Action action;
    try {
      action = controller.act(model, target, previous, step);
    } catch (const Error& e) {
      rec.error = e.what();
      finish(EpisodeStatus::kControllerError);
      break;
    }
    sr.command = action.command;
    sr.loss = action.loss;
    sr.loss_trace = std::move(action.trace);

    const VelocityScrew executed = inject_noise(action.command, s.noise_std, noise_rng, s.limits);
    previous_pose = pose;
    pose = integrate_twist(pose, executed, s.dt);
    last_command = action.command;
    previous = action.command;
    moved = true;

    sr.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    rec.steps.push_back(std::move(sr));
  }

  rec.divergence_resets = controller.divergence_resets;
  rec.trajectory_length = trajectory_length(rec.trajectory);
  const PoseError final_err = pose_error(rec.trajectory.back(), s.goal);
  rec.final_t_err = final_err.translation;
  rec.final_r_err = final_err.rotation_deg;
  return rec;
}

}  // namespace flowservo
