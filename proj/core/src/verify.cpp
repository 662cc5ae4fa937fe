#include "hydrodispatch/verify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "hydrodispatch/building.hpp"
#include "hydrodispatch/hydraulics.hpp"
#include "hydrodispatch/pipeline.hpp"

namespace hydrodispatch {

namespace {

// Collects the worst normalized residual per family.
class Tracker {
 public:
  void note(const std::string& family, double residual, int entity, int tau) {
    for (FamilyResidual& f : families_) {
      if (f.family != family) continue;
      if (residual > f.residual) {
        f.residual = residual;
        f.entity = entity;
        f.tau = tau;
      }
      return;
    }
    families_.push_back({family, residual, entity, tau});
  }

  FeasibilityReport finish(double tolerance) && {
    FeasibilityReport report;
    report.tolerance = tolerance;
    report.families = std::move(families_);
    for (const FamilyResidual& f : report.families) {
      if (f.residual > report.max_residual) {
        report.max_residual = f.residual;
        report.worst_family = f.family;
      }
    }
    report.passed = report.max_residual <= tolerance;
    return report;
  }

 private:
  std::vector<FamilyResidual> families_;
};

double over(double value, double limit) { return std::max(0.0, value - limit); }

double bound_gap(double value, double lo, double hi) {
  const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
  return std::max(over(lo, value), over(value, hi)) / scale;
}

// Signed distance of (p, q) outside the convex hull of the vertex list,
// normalized by the vertex magnitude. Inside or on the hull gives zero.
double outside_polygon(const std::vector<double>& vx, const std::vector<double>& vy, double p,
                       double q) {
  const std::size_t n = vx.size();
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    scale = std::max({scale, std::abs(vx[i]), std::abs(vy[i])});

  const auto segment_distance = [&](double ax, double ay, double bx, double by) {
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    const double t = len2 > 0.0 ? std::clamp(((p - ax) * dx + (q - ay) * dy) / len2, 0.0, 1.0) : 0.0;
    const double ex = ax + t * dx - p, ey = ay + t * dy - q;
    return std::sqrt(ex * ex + ey * ey);
  };

  // Andrew monotone chain over the (deduplicated, sorted) vertices.
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(vx[i], vy[i]);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  const auto cross = [](const std::pair<double, double>& o, const std::pair<double, double>& a,
                        const std::pair<double, double>& b) {
    return (a.first - o.first) * (b.second - o.second) -
           (a.second - o.second) * (b.first - o.first);
  };
  std::vector<std::pair<double, double>> hull;
  if (pts.size() >= 3) {
    for (const auto& pt : pts) {
      while (hull.size() >= 2 && cross(hull[hull.size() - 2], hull.back(), pt) <= 0.0)
        hull.pop_back();
      hull.push_back(pt);
    }
    const std::size_t lower = hull.size() + 1;
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
      while (hull.size() >= lower && cross(hull[hull.size() - 2], hull.back(), *it) <= 0.0)
        hull.pop_back();
      hull.push_back(*it);
    }
    hull.pop_back();
  }
  if (hull.size() < 3) {
    // Degenerate region: a point or a segment.
    double best = segment_distance(pts.front().first, pts.front().second, pts.back().first,
                                   pts.back().second);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
      best = std::min(best, segment_distance(pts[i].first, pts[i].second, pts[i + 1].first,
                                             pts[i + 1].second));
    return best / scale;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    const double len = std::hypot(b.first - a.first, b.second - a.second);
    if (len == 0.0) continue;
    // Hull is counterclockwise, so a negative cross product means outside.
    const double c = cross(a, b, {p, q});
    worst = std::max(worst, -c / len);
  }
  return worst / scale;
}

}  // namespace

double FeasibilityReport::family_residual(const std::string& name) const {
  for (const FamilyResidual& f : families)
    if (f.family == name) return f.residual;
  return 0.0;
}

FeasibilityReport check_feasibility(const DispatchInstance& instance,
                                    const std::vector<double>& x, const FlowSchedule& flows,
                                    const WeightSchedule& weights, const ModelOptions& options,
                                    double tolerance) {
  const VariableLayout L(instance, options);
  if (x.size() < static_cast<std::size_t>(L.count()))
    throw std::invalid_argument("check_feasibility: decision vector too short");
  const int periods = instance.horizon.periods;
  const double dt_h = instance.horizon.dt_hours();
  const double c_w = instance.constants.water_specific_heat;
  const auto& dhs = instance.dhs;
  Tracker track;

  const auto value = [&](int col) { return x[static_cast<std::size_t>(col)]; };

  // Unit operating regions, geometrically.
  for (std::size_t i = 0; i < instance.chp_units.size(); ++i) {
    const ChpUnit& unit = instance.chp_units[i];
    for (int tau = 0; tau < periods; ++tau) {
      const double d = outside_polygon(unit.vertex_p_mw, unit.vertex_q_mw,
                                       value(L.chp_p(static_cast<int>(i), tau)),
                                       value(L.chp_q(static_cast<int>(i), tau)));
      track.note("chp_polygon", d, static_cast<int>(i), tau);
    }
  }
  for (std::size_t i = 0; i < instance.thermal_units.size(); ++i) {
    const ThermalUnit& unit = instance.thermal_units[i];
    for (int tau = 0; tau < periods; ++tau) {
      track.note("thermal_limits",
                 bound_gap(value(L.tu_p(static_cast<int>(i), tau)), unit.p_min_mw, unit.p_max_mw),
                 static_cast<int>(i), tau);
      const double ru = value(L.tu_ru(static_cast<int>(i), tau));
      const double rd = value(L.tu_rd(static_cast<int>(i), tau));
      track.note("reserves", bound_gap(ru, 0.0, unit.ramp_up_mw_h * dt_h), static_cast<int>(i),
                 tau);
      track.note("reserves", bound_gap(rd, 0.0, unit.ramp_down_mw_h * dt_h), static_cast<int>(i),
                 tau);
      const double head = value(L.tu_p(static_cast<int>(i), tau)) + ru;
      const double foot = value(L.tu_p(static_cast<int>(i), tau)) - rd;
      track.note("reserves", over(head, unit.p_max_mw) / std::max(1.0, unit.p_max_mw),
                 static_cast<int>(i), tau);
      track.note("reserves", over(unit.p_min_mw, foot) / std::max(1.0, std::abs(unit.p_min_mw)),
                 static_cast<int>(i), tau);
    }
  }
  if (!instance.thermal_units.empty()) {
    for (int tau = 0; tau < periods; ++tau) {
      double ru = 0.0, rd = 0.0;
      for (std::size_t i = 0; i < instance.thermal_units.size(); ++i) {
        ru += value(L.tu_ru(static_cast<int>(i), tau));
        rd += value(L.tu_rd(static_cast<int>(i), tau));
      }
      track.note("reserves", over(instance.grid.reserve_up_mw, ru) /
                                 std::max(1.0, instance.grid.reserve_up_mw),
                 -1, tau);
      track.note("reserves", over(instance.grid.reserve_down_mw, rd) /
                                 std::max(1.0, instance.grid.reserve_down_mw),
                 -1, tau);
    }
  }
  for (std::size_t i = 0; i < instance.renewables.size(); ++i) {
    for (int tau = 0; tau < periods; ++tau)
      track.note("renewable_caps",
                 bound_gap(value(L.re_p(static_cast<int>(i), tau)), 0.0,
                           instance.renewables[i].available_mw[static_cast<std::size_t>(tau)]),
                 static_cast<int>(i), tau);
  }

  // Ramps.
  for (std::size_t i = 0; i < instance.chp_units.size(); ++i) {
    const ChpUnit& unit = instance.chp_units[i];
    for (int tau = 1; tau < periods; ++tau) {
      const double dp = value(L.chp_p(static_cast<int>(i), tau)) -
                        value(L.chp_p(static_cast<int>(i), tau - 1));
      const double dq = value(L.chp_q(static_cast<int>(i), tau)) -
                        value(L.chp_q(static_cast<int>(i), tau - 1));
      track.note("ramps", over(dp, unit.ramp_p_up_mw_h * dt_h) /
                              std::max(1.0, unit.ramp_p_up_mw_h * dt_h),
                 static_cast<int>(i), tau);
      track.note("ramps", over(-dp, unit.ramp_p_down_mw_h * dt_h) /
                              std::max(1.0, unit.ramp_p_down_mw_h * dt_h),
                 static_cast<int>(i), tau);
      track.note("ramps", over(dq, unit.ramp_q_up_mw_h * dt_h) /
                              std::max(1.0, unit.ramp_q_up_mw_h * dt_h),
                 static_cast<int>(i), tau);
      track.note("ramps", over(-dq, unit.ramp_q_down_mw_h * dt_h) /
                              std::max(1.0, unit.ramp_q_down_mw_h * dt_h),
                 static_cast<int>(i), tau);
    }
  }
  for (std::size_t i = 0; i < instance.thermal_units.size(); ++i) {
    const ThermalUnit& unit = instance.thermal_units[i];
    for (int tau = 1; tau < periods; ++tau) {
      const double dp =
          value(L.tu_p(static_cast<int>(i), tau)) - value(L.tu_p(static_cast<int>(i), tau - 1));
      track.note("ramps",
                 over(dp, unit.ramp_up_mw_h * dt_h) / std::max(1.0, unit.ramp_up_mw_h * dt_h),
                 static_cast<int>(i), tau);
      track.note("ramps",
                 over(-dp, unit.ramp_down_mw_h * dt_h) / std::max(1.0, unit.ramp_down_mw_h * dt_h),
                 static_cast<int>(i), tau);
    }
  }

  // Power balance and line limits.
  std::vector<double> pump_mw(static_cast<std::size_t>(periods), 0.0);
  if (options.pump_load) {
    const std::vector<double> loads = pump_load_profile(instance, L, x, flows);
    pump_mw = loads;
  }
  for (int tau = 0; tau < periods; ++tau) {
    double supply = 0.0;
    for (std::size_t i = 0; i < instance.chp_units.size(); ++i)
      supply += value(L.chp_p(static_cast<int>(i), tau));
    for (std::size_t i = 0; i < instance.thermal_units.size(); ++i)
      supply += value(L.tu_p(static_cast<int>(i), tau));
    for (std::size_t i = 0; i < instance.renewables.size(); ++i)
      supply += value(L.re_p(static_cast<int>(i), tau));
    double demand = pump_mw[static_cast<std::size_t>(tau)];
    for (const auto& bus_demand : instance.grid.demand_mw)
      demand += bus_demand[static_cast<std::size_t>(tau)];
    track.note("power_balance", std::abs(supply - demand) / std::max(1.0, std::abs(demand)), -1,
               tau);
  }
  if (!instance.grid.lines.empty()) {
    const int pump_bus =
        instance.chp_units.empty() ? 0 : instance.grid.bus_index(instance.chp_units[0].bus);
    for (std::size_t l = 0; l < instance.grid.lines.size(); ++l) {
      const GridLine& line = instance.grid.lines[l];
      for (int tau = 0; tau < periods; ++tau) {
        std::vector<double> injection(instance.grid.buses.size(), 0.0);
        for (std::size_t i = 0; i < instance.chp_units.size(); ++i)
          injection[static_cast<std::size_t>(instance.grid.bus_index(instance.chp_units[i].bus))] +=
              value(L.chp_p(static_cast<int>(i), tau));
        for (std::size_t i = 0; i < instance.thermal_units.size(); ++i)
          injection[static_cast<std::size_t>(
              instance.grid.bus_index(instance.thermal_units[i].bus))] +=
              value(L.tu_p(static_cast<int>(i), tau));
        for (std::size_t i = 0; i < instance.renewables.size(); ++i)
          injection[static_cast<std::size_t>(instance.grid.bus_index(instance.renewables[i].bus))] +=
              value(L.re_p(static_cast<int>(i), tau));
        injection[static_cast<std::size_t>(pump_bus)] -= pump_mw[static_cast<std::size_t>(tau)];
        for (std::size_t bus = 0; bus < instance.grid.buses.size(); ++bus)
          injection[bus] -= instance.grid.demand_mw[bus][static_cast<std::size_t>(tau)];
        double flow = 0.0;
        for (std::size_t bus = 0; bus < instance.grid.buses.size(); ++bus)
          flow += line.shift_factors[bus] * injection[bus];
        track.note("line_limits",
                   over(std::abs(flow), line.capacity_mw) / std::max(1.0, line.capacity_mw),
                   static_cast<int>(l), tau);
      }
    }
  }

  // Buildings: re-simulate on the solution's heat inputs and compare.
  std::vector<std::vector<double>> heat_per_room_w(dhs.buildings.size());
  if (options.steady) {
    for (std::size_t b = 0; b < dhs.buildings.size(); ++b)
      heat_per_room_w[b] = required_heat_input(dhs.buildings[b], instance.constants,
                                               instance.horizon,
                                               dhs.buildings[b].room_temp_min_c);
  } else {
    for (std::size_t b = 0; b < dhs.buildings.size(); ++b) {
      const BuildingSpec& spec = dhs.buildings[b];
      std::vector<double> heat(static_cast<std::size_t>(periods), 0.0);
      for (int tau = 0; tau < periods; ++tau) {
        const double kw = value(L.bld_heat(static_cast<int>(b), tau));
        heat[static_cast<std::size_t>(tau)] = kw * 1e3;
        track.note("room_bounds", over(0.0, kw), static_cast<int>(b), tau);
      }
      heat_per_room_w[b] = heat;
      const BuildingTrajectory traj =
          simulate_building(spec, instance.constants, instance.horizon, heat);
      for (int tau = 0; tau < periods; ++tau) {
        const double t_sim = traj.room_temps_c[static_cast<std::size_t>(tau)];
        const double t_x = value(L.bld_room(static_cast<int>(b), tau));
        track.note("building_dynamics", std::abs(t_sim - t_x) / std::max(1.0, std::abs(t_sim)),
                   static_cast<int>(b), tau);
        for (int w = 0; w < spec.wall_count(); ++w) {
          const double w_sim = traj.wall_temps_c[static_cast<std::size_t>(tau)]
                                                [static_cast<std::size_t>(w)];
          const double w_x = value(L.bld_wall(static_cast<int>(b), w, tau));
          track.note("building_dynamics", std::abs(w_sim - w_x) / std::max(1.0, std::abs(w_sim)),
                     static_cast<int>(b), tau);
        }
        track.note("room_bounds",
                   bound_gap(t_x, spec.room_temp_min_c, spec.room_temp_max_c), static_cast<int>(b),
                   tau);
      }
    }
  }

  // Hydraulics: pressure drops, head bounds.
  HydraulicState hydro;
  hydro.node_pressure_pa.assign(dhs.nodes.size(), std::vector<double>());
  hydro.pump_head_pa.assign(dhs.pipelines.size(),
                            std::vector<double>(static_cast<std::size_t>(periods), 0.0));
  hydro.mass_flow_kg_s = flows;
  for (std::size_t n = 0; n < dhs.nodes.size(); ++n) {
    auto& column = hydro.node_pressure_pa[n];
    for (int tau = 0; tau < periods; ++tau) {
      const double h = value(L.node_pressure(static_cast<int>(n), tau));
      column.push_back(h);
      track.note("pressure_bounds",
                 bound_gap(h, dhs.nodes[n].pressure_min_pa, dhs.nodes[n].pressure_max_pa),
                 static_cast<int>(n), tau);
      track.note("temperature_bounds",
                 bound_gap(value(L.node_temp(static_cast<int>(n), tau)), dhs.nodes[n].temp_min_c,
                           dhs.nodes[n].temp_max_c),
                 static_cast<int>(n), tau);
    }
  }
  for (std::size_t b = 0; b < dhs.pipelines.size(); ++b) {
    if (!dhs.pipelines[b].pump) continue;
    for (int tau = 0; tau < periods; ++tau) {
      const double head = value(L.pump_head(static_cast<int>(b), tau));
      hydro.pump_head_pa[b][static_cast<std::size_t>(tau)] = head;
      track.note("pump_heads",
                 bound_gap(head, dhs.pipelines[b].pump->head_min_pa,
                           dhs.pipelines[b].pump->head_max_pa),
                 static_cast<int>(b), tau);
    }
  }
  for (int tau = 0; tau < periods; ++tau) {
    const std::vector<double> res = pressure_residual(dhs, hydro, tau);
    for (std::size_t b = 0; b < dhs.pipelines.size(); ++b) {
      const PipelineSpec& pipe = dhs.pipelines[b];
      const double m = flows[b][static_cast<std::size_t>(tau)];
      const double drop = pipe.resistance_pa_s2_per_kg2 * m * m;
      const double scale =
          std::max({1.0, drop,
                    std::abs(value(L.node_pressure(dhs.node_index(pipe.from_node), tau))),
                    std::abs(value(L.node_pressure(dhs.node_index(pipe.to_node), tau)))});
      track.note("pressure", std::abs(res[b]) / scale, static_cast<int>(b), tau);
    }
  }

  // Node heat injections for the thermal network checks, W.
  std::vector<std::vector<double>> q_n(dhs.nodes.size(),
                                       std::vector<double>(static_cast<std::size_t>(periods), 0.0));
  for (std::size_t i = 0; i < instance.chp_units.size(); ++i) {
    const int n = dhs.node_index(instance.chp_units[i].dhs_node);
    for (int tau = 0; tau < periods; ++tau)
      q_n[static_cast<std::size_t>(n)][static_cast<std::size_t>(tau)] +=
          value(L.chp_q(static_cast<int>(i), tau)) * 1e6;
  }
  for (std::size_t b = 0; b < dhs.buildings.size(); ++b) {
    const int n = dhs.node_index(dhs.buildings[b].dhs_node);
    for (int tau = 0; tau < periods; ++tau)
      q_n[static_cast<std::size_t>(n)][static_cast<std::size_t>(tau)] -=
          dhs.buildings[b].room_count * heat_per_room_w[b][static_cast<std::size_t>(tau)];
  }

  // Mixing balance at every node, from raw stream data.
  std::vector<std::vector<int>> in_pipes(dhs.nodes.size()), out_pipes(dhs.nodes.size());
  for (std::size_t b = 0; b < dhs.pipelines.size(); ++b) {
    out_pipes[static_cast<std::size_t>(dhs.node_index(dhs.pipelines[b].from_node))].push_back(
        static_cast<int>(b));
    in_pipes[static_cast<std::size_t>(dhs.node_index(dhs.pipelines[b].to_node))].push_back(
        static_cast<int>(b));
  }
  for (std::size_t n = 0; n < dhs.nodes.size(); ++n) {
    for (int tau = 0; tau < periods; ++tau) {
      std::vector<MixingInflow> inflows;
      double m_total = 0.0;
      for (int b : in_pipes[n]) {
        const double m = flows[static_cast<std::size_t>(b)][static_cast<std::size_t>(tau)];
        inflows.push_back({m, value(L.pipe_outlet(b, tau))});
        m_total += m;
      }
      std::vector<double> outflow;
      for (int b : out_pipes[n]) {
        const double m = flows[static_cast<std::size_t>(b)][static_cast<std::size_t>(tau)];
        outflow.push_back(m);
        m_total += m;
      }
      const double t_n = value(L.node_temp(static_cast<int>(n), tau));
      const double q = q_n[n][static_cast<std::size_t>(tau)];
      const double res = mixing_residual(inflows, outflow, t_n, q, dhs.nodes[n].intake_temp_c,
                                         instance.constants);
      const double scale = std::max({1.0, c_w * m_total * std::max(1.0, std::abs(t_n)),
                                     std::abs(q)});
      track.note("mixing", std::abs(res) / scale, static_cast<int>(n), tau);
    }
  }

  // Thermal transport: inlet gates plus an independent re-simulation of the
  // pipe temperatures (dynamic) or the closed-form loss relation (steady).
  for (std::size_t b = 0; b < dhs.pipelines.size(); ++b) {
    const int from = dhs.node_index(dhs.pipelines[b].from_node);
    for (int tau = 0; tau < periods; ++tau) {
      const double t_in = value(L.pipe_inlet(static_cast<int>(b), tau));
      const double t_up = value(L.node_temp(from, tau));
      track.note("transport", std::abs(t_in - t_up) / std::max(1.0, std::abs(t_up)),
                 static_cast<int>(b), tau);
    }
  }
  if (options.steady) {
    for (std::size_t b = 0; b < dhs.pipelines.size(); ++b) {
      const PipelineSpec& pipe = dhs.pipelines[b];
      for (int tau = 0; tau < periods; ++tau) {
        const double expect =
            steady_outlet(pipe, flows[b][static_cast<std::size_t>(tau)],
                          value(L.pipe_inlet(static_cast<int>(b), tau)), pipe.ambient_at(tau),
                          instance.constants);
        const double got = value(L.pipe_outlet(static_cast<int>(b), tau));
        track.note("transport", std::abs(expect - got) / std::max(1.0, std::abs(expect)),
                   static_cast<int>(b), tau);
      }
    }
  } else {
    (void)weights;  // the propagation rebuilds the weights from the flows
    try {
      const NetworkTemperatures field = propagate_network(instance, flows, q_n);
      for (std::size_t n = 0; n < dhs.nodes.size(); ++n)
        for (int tau = 0; tau < periods; ++tau) {
          const double expect = field.node_temp_c[n][static_cast<std::size_t>(tau)];
          track.note("transport",
                     std::abs(expect - value(L.node_temp(static_cast<int>(n), tau))) /
                         std::max(1.0, std::abs(expect)),
                     static_cast<int>(n), tau);
        }
      for (std::size_t b = 0; b < dhs.pipelines.size(); ++b)
        for (int tau = 0; tau < periods; ++tau) {
          const double expect_out = field.pipe_outlet_c[b][static_cast<std::size_t>(tau)];
          const double expect_mix = field.pipe_lossless_c[b][static_cast<std::size_t>(tau)];
          track.note("transport",
                     std::abs(expect_out - value(L.pipe_outlet(static_cast<int>(b), tau))) /
                         std::max(1.0, std::abs(expect_out)),
                     static_cast<int>(b), tau);
          track.note("transport",
                     std::abs(expect_mix - value(L.pipe_lossless(static_cast<int>(b), tau))) /
                         std::max(1.0, std::abs(expect_mix)),
                     static_cast<int>(b), tau);
        }
    } catch (const std::exception&) {
      // The flow schedule violates the propagation preconditions (for example
      // interior continuity); report it as a transport failure.
      track.note("transport", 1e30, -1, -1);
    }
  }

  return std::move(track).finish(tolerance);
}

}  // namespace hydrodispatch
