#pragma once

#include "flowservo/control.hpp"
#include "flowservo/flow.hpp"
#include "flowservo/geometry.hpp"

namespace flowservo {

struct IbvsConfig {
  double lambda = 2.0;  // gain, 1/s
  double mu = 0.01;     // Levenberg-Marquardt damping on diag(L^T L)

  void validate() const;
};

/// One classical IBVS step toward the target flow F(I_t, I*).
///
/// The feature error is e = s(I_t) - s(I*) = -F, so
///   v = -lambda (L^T L + mu diag(L^T L))^-1 L^T e = lambda (...)^-1 L^T F.
/// With flow measured as a displacement, lambda * dt is the fraction of the error
/// closed per control period. The result is not saturated.
///
/// Throws ConditioningError when the damped normal matrix is singular.
VelocityScrew ibvs_step(const InteractionMatrix& interaction, const FlowSampleSet& target,
                        const IbvsConfig& config);

}  // namespace flowservo
