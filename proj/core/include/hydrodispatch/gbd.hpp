#pragma once

#include <limits>
#include <string>
#include <vector>

#include "hydrodispatch/dispatch_model.hpp"
#include "hydrodispatch/verify.hpp"

namespace hydrodispatch {

enum class CutKind { Optimality, Feasibility };

// One Benders cut: an affine under-model of the subproblem value (optimality)
// or of the slack total (feasibility) over the flattened mass-flow block.
// Flow coordinates are pipe-major: entry pipe * periods + tau.
struct Cut {
  CutKind kind = CutKind::Optimality;
  std::vector<double> multipliers;  // equality duals at the generating point
  std::vector<double> point;        // flows the cut was linearized at
  std::vector<double> gradient;     // sensitivity of the value to each flow
  double objective_at_point = 0.0;  // subproblem optimum / slack total there
  int iteration = 0;

  double value_at(const std::vector<double>& flows) const;
};

struct GbdTracePoint {
  int iteration = 0;
  double ubd = std::numeric_limits<double>::infinity();
  double lbd = 0.0;  // raw master bound of this iteration
  SolveStatus sp_status = SolveStatus::Optimal;
  double wall_ms = 0.0;
};

struct GbdOptions {
  double epsilon = 1e-4;  // relative upper/lower bound gap at termination
  int max_iterations = 60;
  // Starting flow schedule; empty picks the steady-state solution's flows
  // (dynamic mode) or the projected history tails (steady mode).
  FlowSchedule initial_flows;
  ModelOptions model;
  double sp_tolerance = 1e-8;
  int sp_max_iterations = 200;
  double feasibility_tolerance = 1e-4;  // verifier tolerance for the incumbent
  double refine_tolerance = 1e-6;       // projected-gradient stationarity
  int refine_max_iterations = 40;
};

// A complete dispatch: decision vector, the flow/weight schedule it was
// solved against, recomputed economics, and the independent feasibility
// report.
struct DispatchSolution {
  std::vector<double> x;
  FlowSchedule flows;
  WeightSchedule weights;
  ModelOptions options;
  std::vector<std::vector<double>> fixed_heat_w;  // steady-mode presolve
  ObjectiveBreakdown objective;
  std::vector<double> curtailment_mw;
  FeasibilityReport feasibility;
  bool refine_warning = false;  // local refinement accepted no step
};

struct GbdState {
  int iterations = 0;
  double ubd = std::numeric_limits<double>::infinity();
  double lbd = 0.0;
  double gap = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::string abort_reason;  // empty unless the loop stopped abnormally
  std::vector<Cut> optimality_cuts;
  std::vector<Cut> feasibility_cuts;
  std::vector<GbdTracePoint> trace;
  std::vector<FlowSchedule> flow_iterates;  // the m used at each iteration
};

struct GbdResult {
  DispatchSolution solution;
  GbdState state;
};

// Flow schedule holding every pipe at its last recorded pre-horizon flow.
FlowSchedule history_tail_flows(const DispatchInstance& instance);

// Water-column weights induced by a flow schedule: the unique fill mapping,
// one weight set per pipe per period. Errors from the fill (window too
// short, nonpositive flows) propagate.
WeightSchedule solve_ulp(const DispatchInstance& instance, const FlowSchedule& flows);

// Euclidean projection of a target schedule onto the flow domain (box bounds
// and interior-node continuity).
FlowSchedule project_flows(const DispatchInstance& instance, const FlowSchedule& target);

// Builds the cut generated by a solved subproblem (optimality) or
// feasibility variant (feasibility), differentiating the fixed-flow
// constraint rows and the weight fill mapping at the model's flows.
Cut make_cut(const DispatchInstance& instance, const SubproblemModel& model,
             const QpSolution& solution, int iteration);

struct LlpResult {
  FlowSchedule flows;
  double bound = 0.0;  // epigraph value; 0 while no optimality cuts exist
  SolveStatus status = SolveStatus::Optimal;
};

// Master step: minimizes the cut epigraph over the flow domain.
LlpResult solve_llp(const DispatchInstance& instance, int periods,
                    const std::vector<Cut>& optimality_cuts,
                    const std::vector<Cut>& feasibility_cuts,
                    const FlowSchedule& hint = {});

// Generalized Benders loop: alternates fill mapping, subproblem (or its
// slack relaxation when infeasible), and the cut master until the relative
// bound gap closes. Returns the incumbent and the full iteration state.
GbdResult gbd_solve(const DispatchInstance& instance, const GbdOptions& options = {});

// Projected-gradient descent on the subproblem value over the flow domain,
// started from a feasible solution. Never returns a worse objective; when no
// step is accepted the start is returned with `refine_warning` set.
DispatchSolution refine_local(const DispatchInstance& instance, const DispatchSolution& start,
                              const GbdOptions& options = {});

struct SteadyResult {
  DispatchSolution solution;
  GbdState state;
  // Largest change of any pipe's steady loss factor between the last two
  // flow iterates, and whether it closed below 1e-6.
  double loss_factor_delta = 0.0;
  bool loss_converged = false;
};

// Steady-state baseline: loss factors fixed per iterate and re-substituted
// at each new flow schedule, rooms pinned at the comfort floor.
SteadyResult solve_steady(const DispatchInstance& instance, const GbdOptions& options = {});

}  // namespace hydrodispatch
