#pragma once

#include <string>
#include <vector>

#include "hydrodispatch/dispatch_model.hpp"
#include "hydrodispatch/types.hpp"

namespace hydrodispatch {

// Worst normalized residual found in one constraint family.
struct FamilyResidual {
  std::string family;
  double residual = 0.0;
  // Locator of the worst row: entity index, period (family-dependent, -1 when
  // not applicable).
  int entity = -1;
  int tau = -1;
};

struct FeasibilityReport {
  double tolerance = 0.0;
  bool passed = false;
  double max_residual = 0.0;
  std::string worst_family;
  std::vector<FamilyResidual> families;

  double family_residual(const std::string& name) const;
};

// Re-evaluates every constraint of the dispatch problem from the raw instance
// data with an independent code path: unit operating regions geometrically,
// the network temperatures by re-simulating the pipes and mixing nodes, the
// buildings by re-running the room simulator on the solution's heat inputs,
// and the hydraulics through the residual helpers. Residuals are normalized
// by the natural magnitude of each row. `x` is a decision vector over the
// layout implied by (instance, options); `flows` and `weights` are the fixed
// schedules the solution was produced for (weights empty in steady mode).
FeasibilityReport check_feasibility(const DispatchInstance& instance,
                                    const std::vector<double>& x, const FlowSchedule& flows,
                                    const WeightSchedule& weights, const ModelOptions& options,
                                    double tolerance);

}  // namespace hydrodispatch
