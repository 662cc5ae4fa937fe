#include "hydrodispatch/dispatch_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "hydrodispatch/building.hpp"

namespace hydrodispatch {
namespace {

// Constant per-family row divisors chosen so every equality row lands near
// unit magnitude. They must not depend on the flows, or the rows would pick
// up spurious flow sensitivity through their own scaling.
constexpr double kPressureScale = 1.0e5;
constexpr double kMixingScale = 1.0e3;

struct NodeTopology {
  std::vector<std::vector<int>> in_pipes, out_pipes;
  std::vector<std::vector<int>> chp_at, buildings_at;
};

NodeTopology node_topology(const DispatchInstance& instance) {
  const auto& dhs = instance.dhs;
  NodeTopology topo;
  topo.in_pipes.resize(dhs.nodes.size());
  topo.out_pipes.resize(dhs.nodes.size());
  topo.chp_at.resize(dhs.nodes.size());
  topo.buildings_at.resize(dhs.nodes.size());
  for (std::size_t b = 0; b < dhs.pipelines.size(); ++b) {
    topo.out_pipes[static_cast<std::size_t>(dhs.node_index(dhs.pipelines[b].from_node))]
        .push_back(static_cast<int>(b));
    topo.in_pipes[static_cast<std::size_t>(dhs.node_index(dhs.pipelines[b].to_node))]
        .push_back(static_cast<int>(b));
  }
  for (std::size_t i = 0; i < instance.chp_units.size(); ++i)
    topo.chp_at[static_cast<std::size_t>(dhs.node_index(instance.chp_units[i].dhs_node))]
        .push_back(static_cast<int>(i));
  for (std::size_t i = 0; i < dhs.buildings.size(); ++i)
    topo.buildings_at[static_cast<std::size_t>(dhs.node_index(dhs.buildings[i].dhs_node))]
        .push_back(static_cast<int>(i));
  return topo;
}

void check_flow_shape(const DispatchInstance& instance, const FlowSchedule& flows) {
  const int periods = instance.horizon.periods;
  if (flows.size() != instance.dhs.pipelines.size())
    throw std::invalid_argument("flow schedule: need one series per pipeline");
  for (std::size_t b = 0; b < flows.size(); ++b) {
    if (flows[b].size() != static_cast<std::size_t>(periods))
      throw std::invalid_argument("flow schedule: pipeline " + instance.dhs.pipelines[b].id +
                                  " needs one flow per period");
    for (double m : flows[b])
      if (!(m > 0.0) || !std::isfinite(m))
        throw std::invalid_argument("flow schedule: nonpositive flow in pipeline " +
                                    instance.dhs.pipelines[b].id);
  }
}

void check_weights_consistent(const DispatchInstance& instance, const FlowSchedule& flows,
                              const WeightSchedule& weights) {
  if (weights.size() != instance.dhs.pipelines.size())
    throw std::invalid_argument("weight schedule: need one series per pipeline");
  for (std::size_t b = 0; b < weights.size(); ++b) {
    if (weights[b].size() != flows[b].size())
      throw std::invalid_argument("weight schedule: pipeline " + instance.dhs.pipelines[b].id +
                                  " needs one weight set per period");
    const PaddedSeries series = padded_flows(instance, static_cast<int>(b), flows[b]);
    FlowHistory record;
    record.mass_flow_kg_s = series;
    record.inlet_temp_c = PaddedSeries::constant(0.0, series.lead(), series.tail());
    for (int tau = 0; tau < static_cast<int>(flows[b].size()); ++tau) {
      const WaterColumnWeights expect = fill_weights(
          instance.dhs.pipelines[b], record, tau, instance.horizon.dt_seconds, instance.constants);
      const WaterColumnWeights& given = weights[b][static_cast<std::size_t>(tau)];
      if (given.alpha.size() != expect.alpha.size() || given.beta.size() != expect.beta.size())
        throw std::invalid_argument("weight schedule: wrong depth for pipeline " +
                                    instance.dhs.pipelines[b].id);
      for (std::size_t k = 0; k < expect.alpha.size(); ++k)
        if (std::abs(given.alpha[k] - expect.alpha[k]) > 1e-9 ||
            std::abs(given.beta[k] - expect.beta[k]) > 1e-9)
          throw std::invalid_argument("weight schedule: weights inconsistent with flows for " +
                                      instance.dhs.pipelines[b].id + " at period " +
                                      std::to_string(tau));
    }
  }
}

double air_capacity(const BuildingSpec& spec, const Constants& constants) {
  return spec.volume_m3 * constants.air_specific_heat * constants.air_density;
}

// Builds the whole constraint system; `relax_mixing` switches to the
// slack-relaxed feasibility variant.
SubproblemModel assemble(const DispatchInstance& instance, const FlowSchedule& flows,
                         const WeightSchedule& weights, const ModelOptions& options,
                         bool relax_mixing) {
  const int periods = instance.horizon.periods;
  const double dt_h = instance.horizon.dt_hours();
  const double c_w = instance.constants.water_specific_heat;
  if (periods <= 0) throw std::invalid_argument("dispatch model: empty horizon");
  check_flow_shape(instance, flows);
  if (options.steady) {
    if (!weights.empty())
      throw std::invalid_argument("dispatch model: steady mode takes no weight schedule");
  } else {
    check_weights_consistent(instance, flows, weights);
  }

  SubproblemModel model{QpProblem{},
                        VariableLayout(instance, options),
                        {},
                        flows,
                        weights,
                        options,
                        {},
                        -1,
                        {}};
  const VariableLayout& L = model.layout;
  QpProblem& qp = model.qp;
  qp.variable_count = L.count();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  qp.lower.assign(static_cast<std::size_t>(L.count()), -kInf);
  qp.upper.assign(static_cast<std::size_t>(L.count()), kInf);
  qp.linear.assign(static_cast<std::size_t>(L.count()), 0.0);

  if (options.steady) model.fixed_heat_w = presolve_heat_loads(instance);

  // --- variable bounds ---
  for (std::size_t i = 0; i < instance.chp_units.size(); ++i) {
    const ChpUnit& unit = instance.chp_units[i];
    const double p_lo = *std::min_element(unit.vertex_p_mw.begin(), unit.vertex_p_mw.end());
    const double p_hi = *std::max_element(unit.vertex_p_mw.begin(), unit.vertex_p_mw.end());
    const double q_lo = *std::min_element(unit.vertex_q_mw.begin(), unit.vertex_q_mw.end());
    const double q_hi = *std::max_element(unit.vertex_q_mw.begin(), unit.vertex_q_mw.end());
    for (int tau = 0; tau < periods; ++tau) {
      const int ui = static_cast<int>(i);
      qp.lower[static_cast<std::size_t>(L.chp_p(ui, tau))] = p_lo;
      qp.upper[static_cast<std::size_t>(L.chp_p(ui, tau))] = p_hi;
      qp.lower[static_cast<std::size_t>(L.chp_q(ui, tau))] = q_lo;
      qp.upper[static_cast<std::size_t>(L.chp_q(ui, tau))] = q_hi;
      for (std::size_t k = 0; k < unit.vertex_p_mw.size(); ++k) {
        qp.lower[static_cast<std::size_t>(L.chp_zeta(ui, static_cast<int>(k), tau))] = 0.0;
        qp.upper[static_cast<std::size_t>(L.chp_zeta(ui, static_cast<int>(k), tau))] = 1.0;
      }
    }
  }
  for (std::size_t i = 0; i < instance.thermal_units.size(); ++i) {
    const ThermalUnit& unit = instance.thermal_units[i];
    for (int tau = 0; tau < periods; ++tau) {
      const int ui = static_cast<int>(i);
      qp.lower[static_cast<std::size_t>(L.tu_p(ui, tau))] = unit.p_min_mw;
      qp.upper[static_cast<std::size_t>(L.tu_p(ui, tau))] = unit.p_max_mw;
      qp.lower[static_cast<std::size_t>(L.tu_ru(ui, tau))] = 0.0;
      qp.upper[static_cast<std::size_t>(L.tu_ru(ui, tau))] = unit.ramp_up_mw_h * dt_h;
      qp.lower[static_cast<std::size_t>(L.tu_rd(ui, tau))] = 0.0;
      qp.upper[static_cast<std::size_t>(L.tu_rd(ui, tau))] = unit.ramp_down_mw_h * dt_h;
    }
  }
  for (std::size_t i = 0; i < instance.renewables.size(); ++i) {
    for (int tau = 0; tau < periods; ++tau) {
      qp.lower[static_cast<std::size_t>(L.re_p(static_cast<int>(i), tau))] = 0.0;
      qp.upper[static_cast<std::size_t>(L.re_p(static_cast<int>(i), tau))] =
          instance.renewables[i].available_mw[static_cast<std::size_t>(tau)];
    }
  }
  if (L.has_buildings()) {
    for (std::size_t b = 0; b < instance.dhs.buildings.size(); ++b) {
      const BuildingSpec& spec = instance.dhs.buildings[b];
      for (int tau = 0; tau < periods; ++tau) {
        qp.lower[static_cast<std::size_t>(L.bld_room(static_cast<int>(b), tau))] =
            spec.room_temp_min_c;
        qp.upper[static_cast<std::size_t>(L.bld_room(static_cast<int>(b), tau))] =
            spec.room_temp_max_c;
        qp.lower[static_cast<std::size_t>(L.bld_heat(static_cast<int>(b), tau))] = 0.0;
      }
    }
  }
  for (std::size_t n = 0; n < instance.dhs.nodes.size(); ++n) {
    const DhsNode& node = instance.dhs.nodes[n];
    for (int tau = 0; tau < periods; ++tau) {
      qp.lower[static_cast<std::size_t>(L.node_temp(static_cast<int>(n), tau))] = node.temp_min_c;
      qp.upper[static_cast<std::size_t>(L.node_temp(static_cast<int>(n), tau))] = node.temp_max_c;
      qp.lower[static_cast<std::size_t>(L.node_pressure(static_cast<int>(n), tau))] =
          node.pressure_min_pa;
      qp.upper[static_cast<std::size_t>(L.node_pressure(static_cast<int>(n), tau))] =
          node.pressure_max_pa;
    }
  }
  for (std::size_t b = 0; b < instance.dhs.pipelines.size(); ++b) {
    const auto& pump = instance.dhs.pipelines[b].pump;
    if (!pump) continue;
    for (int tau = 0; tau < periods; ++tau) {
      const int col = L.pump_head(static_cast<int>(b), tau);
      qp.lower[static_cast<std::size_t>(col)] = pump->head_min_pa;
      qp.upper[static_cast<std::size_t>(col)] = pump->head_max_pa;
    }
  }

  // --- objective (subproblem only; the feasibility variant overwrites) ---
  if (!relax_mixing) {
    for (std::size_t i = 0; i < instance.chp_units.size(); ++i) {
      const double* a = instance.chp_units[i].cost;
      for (int tau = 0; tau < periods; ++tau) {
        const int p = L.chp_p(static_cast<int>(i), tau);
        const int q = L.chp_q(static_cast<int>(i), tau);
        qp.constant += a[0] * dt_h;
        qp.linear[static_cast<std::size_t>(p)] += a[1] * dt_h;
        qp.linear[static_cast<std::size_t>(q)] += a[2] * dt_h;
        if (a[3] != 0.0) qp.quadratic.push_back({p, p, a[3] * dt_h});
        if (a[4] != 0.0) qp.quadratic.push_back({q, q, a[4] * dt_h});
        if (a[5] != 0.0) qp.quadratic.push_back({p, q, a[5] * dt_h});
      }
    }
    for (std::size_t i = 0; i < instance.thermal_units.size(); ++i) {
      const double* d = instance.thermal_units[i].cost;
      for (int tau = 0; tau < periods; ++tau) {
        const int p = L.tu_p(static_cast<int>(i), tau);
        qp.constant += d[0] * dt_h;
        qp.linear[static_cast<std::size_t>(p)] += d[1] * dt_h;
        if (d[2] != 0.0) qp.quadratic.push_back({p, p, d[2] * dt_h});
      }
    }
    for (std::size_t i = 0; i < instance.renewables.size(); ++i) {
      const RenewablePlant& plant = instance.renewables[i];
      for (int tau = 0; tau < periods; ++tau) {
        const double avail = plant.available_mw[static_cast<std::size_t>(tau)];
        const int p = L.re_p(static_cast<int>(i), tau);
        qp.constant += plant.penalty_per_mw2 * avail * avail * dt_h;
        qp.linear[static_cast<std::size_t>(p)] += -2.0 * plant.penalty_per_mw2 * avail * dt_h;
        qp.quadratic.push_back({p, p, plant.penalty_per_mw2 * dt_h});
      }
    }
  }

  const NodeTopology topo = node_topology(instance);
  const int pump_bus =
      instance.chp_units.empty() ? 0 : instance.grid.bus_index(instance.chp_units[0].bus);

  auto add_eq = [&](LinearRow row, RowMeta meta) {
    if (meta.scale != 1.0) {
      for (auto& term : row.terms) term.second /= meta.scale;
      row.rhs /= meta.scale;
    }
    qp.equalities.push_back(std::move(row));
    model.eq_meta.push_back(meta);
  };

  // --- CHP vertex combination rows ---
  for (std::size_t i = 0; i < instance.chp_units.size(); ++i) {
    const ChpUnit& unit = instance.chp_units[i];
    for (int tau = 0; tau < periods; ++tau) {
      const int ui = static_cast<int>(i);
      LinearRow p_row, q_row, convex;
      p_row.add(L.chp_p(ui, tau), 1.0);
      q_row.add(L.chp_q(ui, tau), 1.0);
      for (std::size_t k = 0; k < unit.vertex_p_mw.size(); ++k) {
        const int z = L.chp_zeta(ui, static_cast<int>(k), tau);
        p_row.add(z, -unit.vertex_p_mw[k]);
        q_row.add(z, -unit.vertex_q_mw[k]);
        convex.add(z, 1.0);
      }
      convex.rhs = 1.0;
      add_eq(std::move(p_row), {RowKind::ChpP, ui, -1, tau, 1.0});
      add_eq(std::move(q_row), {RowKind::ChpQ, ui, -1, tau, 1.0});
      add_eq(std::move(convex), {RowKind::ChpConvex, ui, -1, tau, 1.0});
    }
  }

  // --- system power balance ---
  for (int tau = 0; tau < periods; ++tau) {
    LinearRow row;
    for (std::size_t i = 0; i < instance.chp_units.size(); ++i)
      row.add(L.chp_p(static_cast<int>(i), tau), 1.0);
    for (std::size_t i = 0; i < instance.thermal_units.size(); ++i)
      row.add(L.tu_p(static_cast<int>(i), tau), 1.0);
    for (std::size_t i = 0; i < instance.renewables.size(); ++i)
      row.add(L.re_p(static_cast<int>(i), tau), 1.0);
    if (options.pump_load) {
      for (std::size_t b = 0; b < instance.dhs.pipelines.size(); ++b) {
        const auto& pump = instance.dhs.pipelines[b].pump;
        if (!pump) continue;
        const double mw_per_pa = flows[b][static_cast<std::size_t>(tau)] /
                                 (instance.constants.water_density * pump->efficiency) * 1e-6;
        row.add(L.pump_head(static_cast<int>(b), tau), -mw_per_pa);
      }
    }
    double demand = 0.0;
    for (const auto& bus_demand : instance.grid.demand_mw)
      demand += bus_demand[static_cast<std::size_t>(tau)];
    row.rhs = demand;
    add_eq(std::move(row), {RowKind::PowerBalance, -1, -1, tau, 1.0});
  }

  // --- building thermal dynamics ---
  if (L.has_buildings()) {
    for (std::size_t b = 0; b < instance.dhs.buildings.size(); ++b) {
      const BuildingSpec& spec = instance.dhs.buildings[b];
      const BuildingConstraints local =
          assemble_building_constraints(spec, instance.constants, instance.horizon);
      const double wall_scale = std::max(1.0, std::abs(spec.factor_z[0]));
      const double air_scale = std::max(1.0, air_capacity(spec, instance.constants));
      for (std::size_t r = 0; r < local.rows.size(); ++r) {
        const int tau = static_cast<int>(r) / (local.wall_count + 1);
        const int slot = static_cast<int>(r) % (local.wall_count + 1);
        LinearRow row;
        row.rhs = local.rows[r].rhs;
        for (const auto& [col, coeff] : local.rows[r].terms) {
          const int local_tau = col / local.stride();
          const int local_slot = col % local.stride();
          // The model's heat column is in kW per room for conditioning; the
          // local rows are written in watts.
          if (local_slot < local.wall_count)
            row.add(L.bld_wall(static_cast<int>(b), local_slot, local_tau), coeff);
          else if (local_slot == local.wall_count)
            row.add(L.bld_room(static_cast<int>(b), local_tau), coeff);
          else
            row.add(L.bld_heat(static_cast<int>(b), local_tau), coeff * 1e3);
        }
        if (slot < local.wall_count)
          add_eq(std::move(row),
                 {RowKind::BuildingWall, static_cast<int>(b), slot, tau, wall_scale});
        else
          add_eq(std::move(row), {RowKind::BuildingAir, static_cast<int>(b), -1, tau, air_scale});
      }
    }
  }

  // --- pipeline pressure drops ---
  for (std::size_t b = 0; b < instance.dhs.pipelines.size(); ++b) {
    const PipelineSpec& pipe = instance.dhs.pipelines[b];
    const int from = instance.dhs.node_index(pipe.from_node);
    const int to = instance.dhs.node_index(pipe.to_node);
    for (int tau = 0; tau < periods; ++tau) {
      const double m = flows[b][static_cast<std::size_t>(tau)];
      LinearRow row;
      row.add(L.node_pressure(from, tau), 1.0);
      row.add(L.node_pressure(to, tau), -1.0);
      if (pipe.pump) row.add(L.pump_head(static_cast<int>(b), tau), 1.0);
      row.rhs = pipe.resistance_pa_s2_per_kg2 * m * m;
      add_eq(std::move(row), {RowKind::Pressure, static_cast<int>(b), -1, tau, kPressureScale});
    }
  }

  // --- pipe inlet gate: inlet temperature equals the upstream node mix ---
  for (std::size_t b = 0; b < instance.dhs.pipelines.size(); ++b) {
    const int from = instance.dhs.node_index(instance.dhs.pipelines[b].from_node);
    for (int tau = 0; tau < periods; ++tau) {
      LinearRow row;
      row.add(L.pipe_inlet(static_cast<int>(b), tau), 1.0);
      row.add(L.node_temp(from, tau), -1.0);
      add_eq(std::move(row), {RowKind::OutletGate, static_cast<int>(b), -1, tau, 1.0});
    }
  }

  // --- node mixing ---
  for (std::size_t n = 0; n < instance.dhs.nodes.size(); ++n) {
    const auto& ins = topo.in_pipes[n];
    const auto& outs = topo.out_pipes[n];
    if (ins.empty() && outs.empty())
      throw std::invalid_argument("dispatch model: node " + instance.dhs.nodes[n].id +
                                  " touches no pipeline");
    for (int tau = 0; tau < periods; ++tau) {
      double m_in = 0.0, m_out = 0.0;
      for (int b : ins) m_in += flows[static_cast<std::size_t>(b)][static_cast<std::size_t>(tau)];
      for (int b : outs) m_out += flows[static_cast<std::size_t>(b)][static_cast<std::size_t>(tau)];
      const double served = outs.empty() ? m_in : m_out;
      const double makeup = ins.empty() ? m_out : 0.0;
      LinearRow row;
      row.add(L.node_temp(static_cast<int>(n), tau), served);
      for (int b : ins)
        row.add(L.pipe_outlet(b, tau),
                -flows[static_cast<std::size_t>(b)][static_cast<std::size_t>(tau)]);
      for (int i : topo.chp_at[n]) row.add(L.chp_q(i, tau), -1e6 / c_w);
      double rhs = makeup * instance.dhs.nodes[n].intake_temp_c;
      for (int bi : topo.buildings_at[n]) {
        const double rooms = instance.dhs.buildings[static_cast<std::size_t>(bi)].room_count;
        if (L.has_buildings())
          row.add(L.bld_heat(bi, tau), rooms * 1e3 / c_w);
        else
          rhs -= rooms / c_w *
                 model.fixed_heat_w[static_cast<std::size_t>(bi)][static_cast<std::size_t>(tau)];
      }
      row.rhs = rhs;
      add_eq(std::move(row), {RowKind::Mixing, static_cast<int>(n), -1, tau, kMixingScale});
    }
  }

  // --- thermal transport along pipes ---
  for (std::size_t b = 0; b < instance.dhs.pipelines.size(); ++b) {
    const PipelineSpec& pipe = instance.dhs.pipelines[b];
    const PaddedSeries series = padded_flows(instance, static_cast<int>(b), flows[b]);
    const PaddedSeries& hist_t = instance.dhs.flow_histories[b].inlet_temp_c;
    if (options.steady) {
      for (int tau = 0; tau < periods; ++tau) {
        const double m = flows[b][static_cast<std::size_t>(tau)];
        const double factor =
            std::exp(-pipe.heat_loss_w_per_m_k * pipe.length_m / (c_w * m));
        LinearRow row;
        row.add(L.pipe_outlet(static_cast<int>(b), tau), 1.0);
        row.add(L.pipe_inlet(static_cast<int>(b), tau), -factor);
        row.rhs = pipe.ambient_at(tau) * (1.0 - factor);
        add_eq(std::move(row), {RowKind::SteadyOutlet, static_cast<int>(b), -1, tau, 1.0});
      }
      continue;
    }
    for (int tau = 0; tau < periods; ++tau) {
      const WaterColumnWeights& w = weights[b][static_cast<std::size_t>(tau)];
      const double m_tau = flows[b][static_cast<std::size_t>(tau)];
      LinearRow lossless;
      lossless.add(L.pipe_lossless(static_cast<int>(b), tau), 1.0);
      double rhs = 0.0;
      double weight_sum = 0.0;
      for (std::size_t k = 0; k < w.alpha.size(); ++k) {
        weight_sum += w.alpha[k] + (k >= 1 ? w.beta[k] : 0.0);
        const double share = (w.beta[k] - w.alpha[k]) *
                             series.at(tau - static_cast<int>(k)) / m_tau;
        if (share == 0.0) continue;
        const int source = tau - static_cast<int>(k);
        if (source >= 0)
          lossless.add(L.pipe_inlet(static_cast<int>(b), source), -share);
        else
          rhs += share * hist_t.at(source);
      }
      lossless.rhs = rhs;
      add_eq(std::move(lossless), {RowKind::Lossless, static_cast<int>(b), -1, tau, 1.0});

      const double decay = pipe.heat_loss_w_per_m_k * instance.horizon.dt_seconds /
                           (2.0 * pipe.area_m2 * instance.constants.water_density * c_w);
      const double factor = std::exp(-decay * weight_sum);
      LinearRow loss;
      loss.add(L.pipe_outlet(static_cast<int>(b), tau), 1.0);
      loss.add(L.pipe_lossless(static_cast<int>(b), tau), -factor);
      loss.rhs = pipe.ambient_at(tau) * (1.0 - factor);
      add_eq(std::move(loss), {RowKind::LossDecay, static_cast<int>(b), -1, tau, 1.0});
    }
  }

  // --- inequalities: line limits ---
  for (const GridLine& line : instance.grid.lines) {
    for (int tau = 0; tau < periods; ++tau) {
      LinearRow flow;
      double shifted_demand = 0.0;
      auto add_injection = [&](int bus, int col, double sign) {
        const double factor = line.shift_factors[static_cast<std::size_t>(bus)];
        if (factor != 0.0) flow.add(col, sign * factor);
      };
      for (std::size_t i = 0; i < instance.chp_units.size(); ++i)
        add_injection(instance.grid.bus_index(instance.chp_units[i].bus),
                      L.chp_p(static_cast<int>(i), tau), 1.0);
      for (std::size_t i = 0; i < instance.thermal_units.size(); ++i)
        add_injection(instance.grid.bus_index(instance.thermal_units[i].bus),
                      L.tu_p(static_cast<int>(i), tau), 1.0);
      for (std::size_t i = 0; i < instance.renewables.size(); ++i)
        add_injection(instance.grid.bus_index(instance.renewables[i].bus),
                      L.re_p(static_cast<int>(i), tau), 1.0);
      if (options.pump_load) {
        for (std::size_t b = 0; b < instance.dhs.pipelines.size(); ++b) {
          const auto& pump = instance.dhs.pipelines[b].pump;
          if (!pump) continue;
          const double mw_per_pa = flows[b][static_cast<std::size_t>(tau)] /
                                   (instance.constants.water_density * pump->efficiency) * 1e-6;
          add_injection(pump_bus, L.pump_head(static_cast<int>(b), tau), -mw_per_pa);
        }
      }
      for (std::size_t bus = 0; bus < instance.grid.buses.size(); ++bus)
        shifted_demand +=
            line.shift_factors[bus] * instance.grid.demand_mw[bus][static_cast<std::size_t>(tau)];

      LinearRow upper = flow;
      upper.rhs = line.capacity_mw + shifted_demand;
      qp.inequalities.push_back(std::move(upper));
      LinearRow lower;
      for (const auto& [col, coeff] : flow.terms) lower.add(col, -coeff);
      lower.rhs = line.capacity_mw - shifted_demand;
      qp.inequalities.push_back(std::move(lower));
    }
  }

  // --- inequalities: ramping ---
  auto add_ramp = [&](int col_now, int col_prev, double up, double down) {
    LinearRow rise;
    rise.add(col_now, 1.0);
    rise.add(col_prev, -1.0);
    rise.rhs = up * dt_h;
    qp.inequalities.push_back(std::move(rise));
    LinearRow fall;
    fall.add(col_prev, 1.0);
    fall.add(col_now, -1.0);
    fall.rhs = down * dt_h;
    qp.inequalities.push_back(std::move(fall));
  };
  for (std::size_t i = 0; i < instance.chp_units.size(); ++i) {
    const ChpUnit& unit = instance.chp_units[i];
    for (int tau = 1; tau < periods; ++tau) {
      add_ramp(L.chp_p(static_cast<int>(i), tau), L.chp_p(static_cast<int>(i), tau - 1),
               unit.ramp_p_up_mw_h, unit.ramp_p_down_mw_h);
      add_ramp(L.chp_q(static_cast<int>(i), tau), L.chp_q(static_cast<int>(i), tau - 1),
               unit.ramp_q_up_mw_h, unit.ramp_q_down_mw_h);
    }
  }
  for (std::size_t i = 0; i < instance.thermal_units.size(); ++i) {
    const ThermalUnit& unit = instance.thermal_units[i];
    for (int tau = 1; tau < periods; ++tau)
      add_ramp(L.tu_p(static_cast<int>(i), tau), L.tu_p(static_cast<int>(i), tau - 1),
               unit.ramp_up_mw_h, unit.ramp_down_mw_h);
  }

  // --- inequalities: spinning reserve ---
  for (std::size_t i = 0; i < instance.thermal_units.size(); ++i) {
    const ThermalUnit& unit = instance.thermal_units[i];
    for (int tau = 0; tau < periods; ++tau) {
      LinearRow head;
      head.add(L.tu_ru(static_cast<int>(i), tau), 1.0);
      head.add(L.tu_p(static_cast<int>(i), tau), 1.0);
      head.rhs = unit.p_max_mw;
      qp.inequalities.push_back(std::move(head));
      LinearRow foot;
      foot.add(L.tu_rd(static_cast<int>(i), tau), 1.0);
      foot.add(L.tu_p(static_cast<int>(i), tau), -1.0);
      foot.rhs = -unit.p_min_mw;
      qp.inequalities.push_back(std::move(foot));
    }
  }
  if (!instance.thermal_units.empty()) {
    for (int tau = 0; tau < periods; ++tau) {
      LinearRow up, down;
      for (std::size_t i = 0; i < instance.thermal_units.size(); ++i) {
        up.add(L.tu_ru(static_cast<int>(i), tau), -1.0);
        down.add(L.tu_rd(static_cast<int>(i), tau), -1.0);
      }
      up.rhs = -instance.grid.reserve_up_mw;
      down.rhs = -instance.grid.reserve_down_mw;
      qp.inequalities.push_back(std::move(up));
      qp.inequalities.push_back(std::move(down));
    }
  }

  // --- feasibility variant: relax the mixing rows with slack pairs ---
  if (relax_mixing) {
    qp.quadratic.clear();
    qp.linear.assign(static_cast<std::size_t>(L.count()), 0.0);
    qp.constant = 0.0;
    model.slack_base = L.count();
    int next = L.count();
    for (std::size_t r = 0; r < qp.equalities.size(); ++r) {
      if (model.eq_meta[r].kind != RowKind::Mixing) continue;
      model.relaxed_rows.push_back(static_cast<int>(r));
      qp.equalities[r].add(next, 1.0);
      qp.equalities[r].add(next + 1, -1.0);
      next += 2;
    }
    qp.variable_count = next;
    qp.lower.resize(static_cast<std::size_t>(next), 0.0);
    qp.upper.resize(static_cast<std::size_t>(next), kInf);
    qp.linear.resize(static_cast<std::size_t>(next), 1.0);
  }

  return model;
}

}  // namespace

VariableLayout::VariableLayout(const DispatchInstance& instance, const ModelOptions& options) {
  periods_ = instance.horizon.periods;
  int next = 0;
  auto block = [&]() {
    const int base = next;
    next += periods_;
    return base;
  };
  for (const ChpUnit& unit : instance.chp_units) {
    chp_p_base_.push_back(block());
    chp_q_base_.push_back(block());
    std::vector<int> zetas;
    for (std::size_t k = 0; k < unit.vertex_p_mw.size(); ++k) zetas.push_back(block());
    chp_zeta_base_.push_back(std::move(zetas));
  }
  for (std::size_t i = 0; i < instance.thermal_units.size(); ++i) {
    tu_p_base_.push_back(block());
    tu_ru_base_.push_back(block());
    tu_rd_base_.push_back(block());
  }
  for (std::size_t i = 0; i < instance.renewables.size(); ++i) re_base_.push_back(block());
  if (!options.steady) {
    for (const BuildingSpec& spec : instance.dhs.buildings) {
      std::vector<int> walls;
      for (int w = 0; w < spec.wall_count(); ++w) walls.push_back(block());
      bld_wall_base_.push_back(std::move(walls));
      bld_room_base_.push_back(block());
      bld_heat_base_.push_back(block());
    }
  }
  for (std::size_t n = 0; n < instance.dhs.nodes.size(); ++n) {
    node_t_base_.push_back(block());
    node_h_base_.push_back(block());
  }
  for (std::size_t b = 0; b < instance.dhs.pipelines.size(); ++b) {
    pipe_ts_base_.push_back(block());
    pipe_te_base_.push_back(block());
    pipe_tp_base_.push_back(options.steady ? -1 : block());
  }
  for (const PipelineSpec& pipe : instance.dhs.pipelines)
    pump_base_.push_back(pipe.pump ? block() : -1);
  total_ = next;
}

SubproblemModel build_subproblem(const DispatchInstance& instance, const FlowSchedule& flows,
                                 const WeightSchedule& weights, const ModelOptions& options) {
  return assemble(instance, flows, weights, options, false);
}

SubproblemModel build_feasibility_problem(const DispatchInstance& instance,
                                          const FlowSchedule& flows,
                                          const WeightSchedule& weights,
                                          const ModelOptions& options) {
  return assemble(instance, flows, weights, options, true);
}

std::vector<double> evaluate_equalities(const DispatchInstance& instance,
                                        const std::vector<double>& x, const FlowSchedule& flows,
                                        const WeightSchedule& weights,
                                        const ModelOptions& options) {
  const SubproblemModel model = build_subproblem(instance, flows, weights, options);
  if (x.size() < static_cast<std::size_t>(model.layout.count()))
    throw std::invalid_argument("evaluate_equalities: decision vector too short");
  std::vector<double> residuals;
  residuals.reserve(model.qp.equalities.size());
  for (const LinearRow& row : model.qp.equalities)
    residuals.push_back(row.evaluate(x) - row.rhs);
  return residuals;
}

ObjectiveBreakdown objective_breakdown(const DispatchInstance& instance,
                                       const VariableLayout& layout,
                                       const std::vector<double>& x) {
  const double dt_h = instance.horizon.dt_hours();
  ObjectiveBreakdown out;
  for (std::size_t i = 0; i < instance.chp_units.size(); ++i) {
    const double* a = instance.chp_units[i].cost;
    for (int tau = 0; tau < layout.periods(); ++tau) {
      const double p = x[static_cast<std::size_t>(layout.chp_p(static_cast<int>(i), tau))];
      const double q = x[static_cast<std::size_t>(layout.chp_q(static_cast<int>(i), tau))];
      out.chp += (a[0] + a[1] * p + a[2] * q + a[3] * p * p + a[4] * q * q + a[5] * p * q) * dt_h;
    }
  }
  for (std::size_t i = 0; i < instance.thermal_units.size(); ++i) {
    const double* d = instance.thermal_units[i].cost;
    for (int tau = 0; tau < layout.periods(); ++tau) {
      const double p = x[static_cast<std::size_t>(layout.tu_p(static_cast<int>(i), tau))];
      out.thermal += (d[0] + d[1] * p + d[2] * p * p) * dt_h;
    }
  }
  for (std::size_t i = 0; i < instance.renewables.size(); ++i) {
    const RenewablePlant& plant = instance.renewables[i];
    for (int tau = 0; tau < layout.periods(); ++tau) {
      const double gap = plant.available_mw[static_cast<std::size_t>(tau)] -
                         x[static_cast<std::size_t>(layout.re_p(static_cast<int>(i), tau))];
      out.penalty += plant.penalty_per_mw2 * gap * gap * dt_h;
    }
  }
  out.total = out.chp + out.thermal + out.penalty;
  return out;
}

std::vector<double> curtailment_profile(const DispatchInstance& instance,
                                        const VariableLayout& layout,
                                        const std::vector<double>& x) {
  std::vector<double> out(static_cast<std::size_t>(layout.periods()), 0.0);
  for (std::size_t i = 0; i < instance.renewables.size(); ++i)
    for (int tau = 0; tau < layout.periods(); ++tau)
      out[static_cast<std::size_t>(tau)] +=
          instance.renewables[i].available_mw[static_cast<std::size_t>(tau)] -
          x[static_cast<std::size_t>(layout.re_p(static_cast<int>(i), tau))];
  return out;
}

std::vector<double> heat_output_profile(const DispatchInstance& instance,
                                        const VariableLayout& layout,
                                        const std::vector<double>& x) {
  std::vector<double> out(static_cast<std::size_t>(layout.periods()), 0.0);
  for (std::size_t i = 0; i < instance.chp_units.size(); ++i)
    for (int tau = 0; tau < layout.periods(); ++tau)
      out[static_cast<std::size_t>(tau)] +=
          x[static_cast<std::size_t>(layout.chp_q(static_cast<int>(i), tau))];
  return out;
}

std::vector<double> heat_load_profile(const DispatchInstance& instance,
                                      const VariableLayout& layout, const std::vector<double>& x,
                                      const std::vector<std::vector<double>>& fixed_heat_w) {
  std::vector<double> out(static_cast<std::size_t>(layout.periods()), 0.0);
  for (std::size_t b = 0; b < instance.dhs.buildings.size(); ++b) {
    const double rooms = instance.dhs.buildings[b].room_count;
    for (int tau = 0; tau < layout.periods(); ++tau) {
      const double per_room_w =
          layout.has_buildings()
              ? x[static_cast<std::size_t>(layout.bld_heat(static_cast<int>(b), tau))] * 1e3
              : fixed_heat_w[b][static_cast<std::size_t>(tau)];
      out[static_cast<std::size_t>(tau)] += rooms * per_room_w * 1e-6;
    }
  }
  return out;
}

std::vector<double> pump_load_profile(const DispatchInstance& instance,
                                      const VariableLayout& layout, const std::vector<double>& x,
                                      const FlowSchedule& flows) {
  std::vector<double> out(static_cast<std::size_t>(layout.periods()), 0.0);
  for (std::size_t b = 0; b < instance.dhs.pipelines.size(); ++b) {
    const auto& pump = instance.dhs.pipelines[b].pump;
    if (!pump) continue;
    for (int tau = 0; tau < layout.periods(); ++tau) {
      const double head = x[static_cast<std::size_t>(layout.pump_head(static_cast<int>(b), tau))];
      out[static_cast<std::size_t>(tau)] += flows[b][static_cast<std::size_t>(tau)] * head /
                                            (instance.constants.water_density * pump->efficiency) *
                                            1e-6;
    }
  }
  return out;
}

std::vector<std::vector<double>> presolve_heat_loads(const DispatchInstance& instance) {
  std::vector<std::vector<double>> loads;
  loads.reserve(instance.dhs.buildings.size());
  for (const BuildingSpec& spec : instance.dhs.buildings)
    loads.push_back(required_heat_input(spec, instance.constants, instance.horizon,
                                        spec.room_temp_min_c));
  return loads;
}

PaddedSeries padded_flows(const DispatchInstance& instance, int pipe,
                          const std::vector<double>& flows) {
  const PaddedSeries& history = instance.dhs.flow_histories[static_cast<std::size_t>(pipe)]
                                    .mass_flow_kg_s;
  std::vector<double> values(history.raw().begin(), history.raw().begin() + history.lead());
  values.insert(values.end(), flows.begin(), flows.end());
  return PaddedSeries(std::move(values), history.lead());
}

}  // namespace hydrodispatch
