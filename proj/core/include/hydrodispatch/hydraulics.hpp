#pragma once

#include <vector>

#include "hydrodispatch/types.hpp"

namespace hydrodispatch {

// Hydraulic quantities over the horizon; outer index follows the DHS model's
// node/pipeline ordering, inner index is the period.
struct HydraulicState {
  std::vector<std::vector<double>> node_pressure_pa;
  std::vector<std::vector<double>> pump_head_pa;  // zero rows for unpumped pipes
  std::vector<std::vector<double>> mass_flow_kg_s;
};

// (h_from - h_to) - k m^2 + h_pump per pipeline at period tau; all zero on a
// hydraulically consistent state.
std::vector<double> pressure_residual(const DhsModel& dhs, const HydraulicState& state, int tau);

// Electric power drawn by a pump lifting mass_flow_kg_s by head_pa, in MW.
double pump_power_mw(double mass_flow_kg_s, double head_pa, double efficiency,
                     const Constants& constants = {});

// One incoming stream at a mixing node.
struct MixingInflow {
  double mass_flow_kg_s = 0.0;
  double outlet_temp_c = 0.0;
};

// Heat balance defect at one node. Boundary water is folded in: when outflow
// exceeds inflow the deficit enters as make-up water at intake_temp_c, and
// when inflow exceeds outflow the surplus leaves at the node temperature.
// q_n_w is positive for injection and negative for extraction.
double mixing_residual(const std::vector<MixingInflow>& inflows,
                       const std::vector<double>& outflow_kg_s, double node_temp_c, double q_n_w,
                       double intake_temp_c = 0.0, const Constants& constants = {});

// Temperature field produced by propagating the network period by period.
struct NetworkTemperatures {
  std::vector<std::vector<double>> node_temp_c;       // [node][period]
  std::vector<std::vector<double>> pipe_outlet_c;     // [pipe][period], after losses
  std::vector<std::vector<double>> pipe_lossless_c;   // [pipe][period]
  std::vector<std::vector<double>> pipe_transit_s;    // [pipe][period]
};

// Computes every pipe outlet and node temperature over the horizon: orders
// nodes along the fixed flow directions, evolves each pipe with the water
// column weights, mixes at nodes, and feeds each node temperature forward as
// the inlet of its outgoing pipes. mass_flow_kg_s is indexed [pipe][period];
// q_n_w is indexed [node][period]. Throws if the directed graph has a cycle
// or if interior flow continuity is violated.
NetworkTemperatures propagate_network(const DispatchInstance& instance,
                                      const std::vector<std::vector<double>>& mass_flow_kg_s,
                                      const std::vector<std::vector<double>>& q_n_w);

}  // namespace hydrodispatch
