#include "hydrodispatch/hydraulics.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>

#include "hydrodispatch/pipeline.hpp"

namespace hydrodispatch {

std::vector<double> pressure_residual(const DhsModel& dhs, const HydraulicState& state, int tau) {
  std::vector<double> residuals;
  residuals.reserve(dhs.pipelines.size());
  for (std::size_t p = 0; p < dhs.pipelines.size(); ++p) {
    const PipelineSpec& pipe = dhs.pipelines[p];
    const std::size_t from = static_cast<std::size_t>(dhs.node_index(pipe.from_node));
    const std::size_t to = static_cast<std::size_t>(dhs.node_index(pipe.to_node));
    const std::size_t t = static_cast<std::size_t>(tau);
    const double flow = state.mass_flow_kg_s[p][t];
    const double pump = pipe.pump ? state.pump_head_pa[p][t] : 0.0;
    residuals.push_back(state.node_pressure_pa[from][t] - state.node_pressure_pa[to][t] -
                        pipe.resistance_pa_s2_per_kg2 * flow * flow + pump);
  }
  return residuals;
}

double pump_power_mw(double mass_flow_kg_s, double head_pa, double efficiency,
                     const Constants& constants) {
  if (!(efficiency > 0.0) || efficiency > 1.0)
    throw std::invalid_argument("pump efficiency must lie in (0, 1]");
  return mass_flow_kg_s * head_pa / (constants.water_density * efficiency) * 1e-6;
}

double mixing_residual(const std::vector<MixingInflow>& inflows,
                       const std::vector<double>& outflow_kg_s, double node_temp_c, double q_n_w,
                       double intake_temp_c, const Constants& constants) {
  const double c = constants.water_specific_heat;
  double inflow_total = 0.0;
  double inflow_heat = 0.0;
  for (const MixingInflow& in : inflows) {
    inflow_total += in.mass_flow_kg_s;
    inflow_heat += in.mass_flow_kg_s * in.outlet_temp_c;
  }
  double outflow_total = 0.0;
  for (double m : outflow_kg_s) outflow_total += m;
  const double discharge = std::max(inflow_total - outflow_total, 0.0);
  const double makeup = std::max(outflow_total - inflow_total, 0.0);
  return c * (outflow_total + discharge) * node_temp_c - c * inflow_heat -
         c * makeup * intake_temp_c - q_n_w;
}

namespace {

// Node order along the fixed flow directions (every pipe's tail before its
// head). Throws on a directed cycle.
std::vector<int> topological_order(const DhsModel& dhs) {
  const std::size_t n = dhs.nodes.size();
  std::vector<std::vector<int>> forward(n);
  std::vector<int> indegree(n, 0);
  for (const PipelineSpec& pipe : dhs.pipelines) {
    const int from = dhs.node_index(pipe.from_node);
    const int to = dhs.node_index(pipe.to_node);
    forward[static_cast<std::size_t>(from)].push_back(to);
    ++indegree[static_cast<std::size_t>(to)];
  }
  std::queue<int> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(static_cast<int>(i));
  std::vector<int> order;
  order.reserve(n);
  while (!ready.empty()) {
    const int node = ready.front();
    ready.pop();
    order.push_back(node);
    for (int next : forward[static_cast<std::size_t>(node)])
      if (--indegree[static_cast<std::size_t>(next)] == 0) ready.push(next);
  }
  if (order.size() != n) throw std::invalid_argument("flow graph contains a directed cycle");
  return order;
}

}  // namespace

NetworkTemperatures propagate_network(const DispatchInstance& instance,
                                      const std::vector<std::vector<double>>& mass_flow_kg_s,
                                      const std::vector<std::vector<double>>& q_n_w) {
  const DhsModel& dhs = instance.dhs;
  const int periods = instance.horizon.periods;
  const std::size_t pipes = dhs.pipelines.size();
  const std::size_t nodes = dhs.nodes.size();
  if (mass_flow_kg_s.size() != pipes)
    throw std::invalid_argument("propagate_network: need one flow series per pipeline");
  for (const auto& series : mass_flow_kg_s)
    if (series.size() != static_cast<std::size_t>(periods))
      throw std::invalid_argument("propagate_network: flow series length mismatch");
  if (q_n_w.size() != nodes)
    throw std::invalid_argument("propagate_network: need one injection series per node");
  for (const auto& series : q_n_w)
    if (series.size() != static_cast<std::size_t>(periods))
      throw std::invalid_argument("propagate_network: injection series length mismatch");

  const std::vector<int> order = topological_order(dhs);

  // Working flow/inlet series per pipe: instance history plus in-horizon
  // values appended as they become known.
  std::vector<PaddedSeries> flows(pipes), inlets(pipes);
  std::vector<std::vector<int>> in_pipes(nodes), out_pipes(nodes);
  for (std::size_t p = 0; p < pipes; ++p) {
    const FlowHistory& history = dhs.flow_histories[p];
    const int lead = history.mass_flow_kg_s.lead();
    std::vector<double> flow_values(history.mass_flow_kg_s.raw().begin(),
                                    history.mass_flow_kg_s.raw().begin() + lead);
    flow_values.insert(flow_values.end(), mass_flow_kg_s[p].begin(), mass_flow_kg_s[p].end());
    flows[p] = PaddedSeries(std::move(flow_values), lead);
    std::vector<double> inlet_values(history.inlet_temp_c.raw().begin(),
                                     history.inlet_temp_c.raw().begin() + lead);
    inlets[p] = PaddedSeries(std::move(inlet_values), lead);
    in_pipes[static_cast<std::size_t>(dhs.node_index(dhs.pipelines[p].to_node))]
        .push_back(static_cast<int>(p));
    out_pipes[static_cast<std::size_t>(dhs.node_index(dhs.pipelines[p].from_node))]
        .push_back(static_cast<int>(p));
  }

  NetworkTemperatures result;
  result.node_temp_c.assign(nodes, std::vector<double>(static_cast<std::size_t>(periods), 0.0));
  result.pipe_outlet_c.assign(pipes, std::vector<double>(static_cast<std::size_t>(periods), 0.0));
  result.pipe_lossless_c.assign(pipes, std::vector<double>(static_cast<std::size_t>(periods), 0.0));
  result.pipe_transit_s.assign(pipes, std::vector<double>(static_cast<std::size_t>(periods), 0.0));

  const double c = instance.constants.water_specific_heat;
  for (int tau = 0; tau < periods; ++tau) {
    for (int n : order) {
      const std::size_t node_i = static_cast<std::size_t>(n);
      const DhsNode& node = dhs.nodes[node_i];
      double inflow_total = 0.0;
      double inflow_heat = 0.0;
      for (int p : in_pipes[node_i]) {
        const std::size_t pi = static_cast<std::size_t>(p);
        const OutletResult outlet =
            wmm_outlet(dhs.pipelines[pi], {flows[pi], inlets[pi]}, tau,
                       instance.horizon.dt_seconds, instance.constants);
        result.pipe_outlet_c[pi][static_cast<std::size_t>(tau)] = outlet.t_out_c;
        result.pipe_lossless_c[pi][static_cast<std::size_t>(tau)] = outlet.t_lossless_c;
        result.pipe_transit_s[pi][static_cast<std::size_t>(tau)] = outlet.transit_seconds;
        const double flow = mass_flow_kg_s[pi][static_cast<std::size_t>(tau)];
        inflow_total += flow;
        inflow_heat += flow * outlet.t_out_c;
      }
      double outflow_total = 0.0;
      for (int p : out_pipes[node_i])
        outflow_total += mass_flow_kg_s[static_cast<std::size_t>(p)][static_cast<std::size_t>(tau)];

      if (!in_pipes[node_i].empty() && !out_pipes[node_i].empty()) {
        const double scale = std::max({inflow_total, outflow_total, 1.0});
        if (std::abs(inflow_total - outflow_total) > 1e-6 * scale)
          throw std::invalid_argument("propagate_network: continuity violated at node " +
                                      node.id + " in period " + std::to_string(tau));
      }

      const double makeup = std::max(outflow_total - inflow_total, 0.0);
      const double served = std::max(outflow_total, inflow_total);
      if (served <= 0.0)
        throw std::invalid_argument("propagate_network: node " + node.id +
                                    " carries no flow in period " + std::to_string(tau));
      const double temperature =
          (inflow_heat + makeup * node.intake_temp_c +
           q_n_w[node_i][static_cast<std::size_t>(tau)] / c) /
          served;
      result.node_temp_c[node_i][static_cast<std::size_t>(tau)] = temperature;
      for (int p : out_pipes[node_i]) inlets[static_cast<std::size_t>(p)].push_back(temperature);
    }
  }
  return result;
}

}  // namespace hydrodispatch
