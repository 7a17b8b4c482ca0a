#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "flowservo/geometry.hpp"
#include "flowservo/predict.hpp"

namespace flowservo {

/// Symmetric saturation box applied to every controller output.
struct VelocityLimits {
  double linear = 0.5;   // m/s
  double angular = 0.5;  // rad/s

  Vec6 bounds() const {
    Vec6 b;
    b << linear, linear, linear, angular, angular, angular;
    return b;
  }
  VelocityScrew clamp(const VelocityScrew& twist) const;
  bool contains(const VelocityScrew& twist) const;
};

/// Controller ids accepted in configs and on the command line.
enum class ControllerKind { kIbvs, kRecurrentMpc, kFeedforwardMpc, kCemMpc };

std::string_view controller_id(ControllerKind kind);
/// Throws ConfigError listing the valid ids.
ControllerKind parse_controller(std::string_view id);
std::vector<std::string_view> controller_ids();

/// Outcome of one inner optimization: the plan and the loss after every iteration.
struct PlanResult {
  VelocityPlan plan;
  std::vector<double> loss_trace;
};

}  // namespace flowservo
