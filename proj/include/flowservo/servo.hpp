#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "flowservo/cem.hpp"
#include "flowservo/control.hpp"
#include "flowservo/control_net.hpp"
#include "flowservo/feedforward_net.hpp"
#include "flowservo/ibvs.hpp"
#include "flowservo/plan_network.hpp"
#include "flowservo/scene.hpp"

namespace flowservo {

enum class FlowSource { kOracle, kFloDirectory };

/// Everything needed to run one servo episode. Defaults describe the desk setup.
struct Scenario {
  std::string id = "scenario";
  SceneConfig scene;
  Intrinsics intrinsics;
  Pose start = Pose::from_rotation_vector(Vec3::Zero(), Vec3(0.2, 0.0, 0.0));
  Pose goal;
  double dt = 0.1;
  /// Convergence threshold on the per-pixel mean photometric error.
  double eps = 2e-4;
  int max_steps = 300;

  ControllerKind controller = ControllerKind::kRecurrentMpc;
  std::size_t horizon = kDefaultHorizon;
  VelocityLimits limits;
  IbvsConfig ibvs;
  int lstm_hidden = 32;
  int lstm_layers = 5;
  int ff_hidden = 64;
  CemConfig cem;
  InnerLoopConfig training;
  /// Retrain the network from its initial parameters at every step instead of
  /// continuing from the previous step's parameters.
  bool reset_net_each_step = true;
  /// Initialize network output projections to zero, so an untrained plan is all zeros.
  bool zero_output_init = true;

  /// Actuation noise std per twist component (m/s, rad/s).
  Vec6 noise_std = Vec6::Zero();
  /// Std of the random initial velocity fed to the networks at step 0.
  double initial_velocity_std = 0.01;

  FlowSource flow_source = FlowSource::kOracle;
  /// Input directory for FlowSource::kFloDirectory.
  std::filesystem::path flow_dir;
  /// When set, oracle flows are also written here in the flo-directory layout.
  std::filesystem::path flow_dump_dir;

  SampleGrid grid;
  double depth_prior = 2.0;
  /// Depth is refreshed only where the commanded translation moves the point by at least
  /// this much (normalized image units); elsewhere the previous estimate is kept.
  double depth_min_flow = 3e-3;
  /// Lost target when fewer than this fraction of grid cells carry valid target flow.
  double lost_fraction = 0.25;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// File names used by the flo-directory flow source at a given step.
std::filesystem::path target_flow_path(const std::filesystem::path& dir, int step);
std::filesystem::path proxy_flow_path(const std::filesystem::path& dir, int step);

enum class EpisodeStatus { kConverged, kMaxSteps, kLostTarget, kControllerError };

std::string_view status_name(EpisodeStatus status);

struct StepRecord {
  int step = 0;
  double t_err = 0.0;
  double r_err = 0.0;
  double photometric = 0.0;      // per-pixel mean
  double photometric_sum = 0.0;  // raw sum of squares
  double wall_ms = 0.0;
  /// Final inner-loop flow loss; NaN on the terminal step.
  double loss = std::numeric_limits<double>::quiet_NaN();
  /// Raw L2 norm of the target flow (normalized units).
  double flow_residual = std::numeric_limits<double>::quiet_NaN();
  std::size_t target_samples = 0;
  /// Median relative error of depths refreshed this step against the rendered depth;
  /// NaN when no depth was refreshed.
  double depth_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t depth_updates = 0;
  bool translation_dominant = false;
  VelocityScrew command;
  std::vector<double> loss_trace;
};

struct EpisodeRecord {
  std::string scenario_id;
  std::string controller;
  std::uint64_t seed = 0;
  EpisodeStatus status = EpisodeStatus::kMaxSteps;
  int iterations = 0;
  std::vector<Pose> trajectory;
  double trajectory_length = 0.0;
  double final_t_err = 0.0;
  double final_r_err = 0.0;
  int divergence_resets = 0;
  std::string error;
  std::vector<StepRecord> steps;

  bool converged() const { return status == EpisodeStatus::kConverged; }
};

double trajectory_length(const std::vector<Pose>& trajectory);

/// Adds independent zero-mean Gaussian noise per component, then saturates.
/// Components with zero std are passed through unchanged.
VelocityScrew inject_noise(const VelocityScrew& twist, const Vec6& std, std::mt19937_64& rng,
                           const VelocityLimits& limits = {});

/// Runs the receding-horizon servo loop until the photometric error falls to eps,
/// max_steps twists have been executed, or the target is lost.
EpisodeRecord run_episode(const Scenario& scenario, std::uint64_t seed);

/// Same, with a pre-generated scene shared between episodes.
EpisodeRecord run_episode(const Scenario& scenario, const SyntheticScene& scene, std::uint64_t seed);

}  // namespace flowservo
