#include "hydrodispatch/gbd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "hydrodispatch/pipeline.hpp"

namespace hydrodispatch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> flatten(const FlowSchedule& flows) {
  std::vector<double> flat;
  for (const auto& series : flows) flat.insert(flat.end(), series.begin(), series.end());
  return flat;
}

FlowSchedule unflatten(const std::vector<double>& flat, std::size_t pipes, int periods) {
  FlowSchedule flows(pipes);
  for (std::size_t b = 0; b < pipes; ++b)
    flows[b].assign(flat.begin() + static_cast<std::ptrdiff_t>(b) * periods,
                    flat.begin() + static_cast<std::ptrdiff_t>(b + 1) * periods);
  return flows;
}

struct Topology {
  std::vector<std::vector<int>> ins, outs;
};

Topology topology(const DhsModel& dhs) {
  Topology topo;
  topo.ins.resize(dhs.nodes.size());
  topo.outs.resize(dhs.nodes.size());
  for (std::size_t b = 0; b < dhs.pipelines.size(); ++b) {
    topo.outs[static_cast<std::size_t>(dhs.node_index(dhs.pipelines[b].from_node))].push_back(
        static_cast<int>(b));
    topo.ins[static_cast<std::size_t>(dhs.node_index(dhs.pipelines[b].to_node))].push_back(
        static_cast<int>(b));
  }
  return topo;
}

void check_schedule_shape(const DispatchInstance& instance, const FlowSchedule& flows,
                          const char* what) {
  if (flows.size() != instance.dhs.pipelines.size())
    throw std::invalid_argument(std::string(what) + ": need one series per pipeline");
  for (const auto& series : flows)
    if (static_cast<int>(series.size()) != instance.horizon.periods)
      throw std::invalid_argument(std::string(what) + ": need one flow per period");
}

// Index of the strictly fractional fill entry, or -1 when the fill is exact
// and the weights are locally constant (the derivative discontinuity there
// is ignored by contract).
int fractional_index(const std::vector<double>& w, std::size_t first) {
  for (std::size_t k = first; k < w.size(); ++k)
    if (w[k] < 1.0) return w[k] > 0.0 ? static_cast<int>(k) : -1;
  return -1;
}

// Sensitivities of the fill weights to the flow at offset j (that is, to
// m^{tau-j}): only the fractional entry of each weight vector moves, and its
// denominator parcel may sit in the pre-horizon history.
struct WeightJacobian {
  int ka = -1, kb = -1;       // fractional entries of alpha / beta
  double alpha_frac = 0.0, beta_frac = 0.0;
  double m_ka = 1.0, m_kb = 1.0;

  double dalpha(int j) const {
    if (ka < 0 || j > ka) return 0.0;
    return (j == ka ? -alpha_frac : -1.0) / m_ka;
  }
  double dbeta(int j) const {
    if (kb < 0 || j == 0 || j > kb) return 0.0;
    return (j == kb ? -beta_frac : -1.0) / m_kb;
  }
};

WeightJacobian weight_jacobian(const WaterColumnWeights& w, const PaddedSeries& series, int tau) {
  WeightJacobian jac;
  jac.ka = fractional_index(w.alpha, 0);
  if (jac.ka >= 0) {
    jac.alpha_frac = w.alpha[static_cast<std::size_t>(jac.ka)];
    jac.m_ka = series.at(tau - jac.ka);
  }
  jac.kb = fractional_index(w.beta, 1);
  if (jac.kb >= 0) {
    jac.beta_frac = w.beta[static_cast<std::size_t>(jac.kb)];
    jac.m_kb = series.at(tau - jac.kb);
  }
  return jac;
}

// Box bounds of the flattened flow block.
void flow_bounds(const DispatchInstance& instance, int periods, std::vector<double>& lower,
                 std::vector<double>& upper) {
  for (const PipelineSpec& pipe : instance.dhs.pipelines)
    for (int tau = 0; tau < periods; ++tau) {
      lower.push_back(pipe.flow_min_kg_s);
      upper.push_back(pipe.flow_max_kg_s);
    }
}

// Interior-node continuity rows over the flattened flow block.
std::vector<LinearRow> continuity_rows(const DispatchInstance& instance, int periods) {
  const Topology topo = topology(instance.dhs);
  std::vector<LinearRow> rows;
  for (std::size_t n = 0; n < instance.dhs.nodes.size(); ++n) {
    if (topo.ins[n].empty() || topo.outs[n].empty()) continue;
    for (int tau = 0; tau < periods; ++tau) {
      LinearRow row;
      for (int b : topo.ins[n]) row.add(b * periods + tau, 1.0);
      for (int b : topo.outs[n]) row.add(b * periods + tau, -1.0);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<double> clamp_to_bounds(std::vector<double> x, const std::vector<double>& lower,
                                    const std::vector<double>& upper) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
  return x;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::abs(e));
  return m;
}

}  // namespace

double Cut::value_at(const std::vector<double>& flows) const {
  if (flows.size() != point.size())
    throw std::invalid_argument("cut evaluation: flow vector has the wrong length");
  double v = objective_at_point;
  for (std::size_t i = 0; i < point.size(); ++i) v += gradient[i] * (flows[i] - point[i]);
  return v;
}

FlowSchedule history_tail_flows(const DispatchInstance& instance) {
  FlowSchedule flows(instance.dhs.pipelines.size());
  for (std::size_t b = 0; b < flows.size(); ++b)
    flows[b].assign(static_cast<std::size_t>(instance.horizon.periods),
                    instance.dhs.flow_histories[b].mass_flow_kg_s.at(-1));
  return flows;
}

WeightSchedule solve_ulp(const DispatchInstance& instance, const FlowSchedule& flows) {
  check_schedule_shape(instance, flows, "fill mapping");
  WeightSchedule eta(flows.size());
  for (std::size_t b = 0; b < flows.size(); ++b) {
    const PaddedSeries series = padded_flows(instance, static_cast<int>(b), flows[b]);
    FlowHistory record;
    record.mass_flow_kg_s = series;
    record.inlet_temp_c = PaddedSeries::constant(0.0, series.lead(), series.tail());
    for (int tau = 0; tau < instance.horizon.periods; ++tau)
      eta[b].push_back(fill_weights(instance.dhs.pipelines[b], record, tau,
                                    instance.horizon.dt_seconds, instance.constants));
  }
  return eta;
}

FlowSchedule project_flows(const DispatchInstance& instance, const FlowSchedule& target) {
  check_schedule_shape(instance, target, "flow projection");
  const int periods = instance.horizon.periods;
  if (instance.dhs.pipelines.empty()) return target;

  const std::vector<double> flat = flatten(target);
  QpProblem qp;
  qp.variable_count = static_cast<int>(flat.size());
  flow_bounds(instance, periods, qp.lower, qp.upper);
  qp.linear.resize(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    qp.quadratic.push_back({static_cast<int>(i), static_cast<int>(i), 1.0});
    qp.linear[i] = -2.0 * flat[i];
  }
  qp.equalities = continuity_rows(instance, periods);

  SolveOptions opts;
  opts.initial_x = clamp_to_bounds(flat, qp.lower, qp.upper);
  const QpSolution sol = solve_qp(qp, opts);
  if (sol.status != SolveStatus::Optimal)
    throw std::runtime_error("flow projection failed: " + status_name(sol.status));
  return unflatten(clamp_to_bounds(sol.x, qp.lower, qp.upper), target.size(), periods);
}

Cut make_cut(const DispatchInstance& instance, const SubproblemModel& model,
             const QpSolution& solution, int iteration) {
  const VariableLayout& L = model.layout;
  const DhsModel& dhs = instance.dhs;
  const int T = L.periods();
  if (solution.eq_duals.size() != model.qp.equalities.size())
    throw std::invalid_argument("cut extraction: solution carries no equality multipliers");

  Cut cut;
  cut.kind = model.is_feasibility() ? CutKind::Feasibility : CutKind::Optimality;
  cut.multipliers = solution.eq_duals;
  cut.point = flatten(model.flows);
  cut.objective_at_point = solution.objective;
  cut.iteration = iteration;
  cut.gradient.assign(dhs.pipelines.size() * static_cast<std::size_t>(T), 0.0);

  const Topology topo = topology(dhs);
  const double rho = instance.constants.water_density;
  const double c_w = instance.constants.water_specific_heat;
  const auto x = [&](int col) { return solution.x[static_cast<std::size_t>(col)]; };
  const auto idx = [&](int b, int tau) { return static_cast<std::size_t>(b * T + tau); };
  // Inlet temperature feeding offset k of pipe b's transport row at tau:
  // a decision column in the horizon, a recorded history value before it.
  const auto inlet_at = [&](int b, int k, int tau) {
    const int src = tau - k;
    if (src >= 0) return x(L.pipe_inlet(b, src));
    return dhs.flow_histories[static_cast<std::size_t>(b)].inlet_temp_c.at(src);
  };

  std::vector<PaddedSeries> series;
  if (!model.options.steady)
    for (std::size_t b = 0; b < dhs.pipelines.size(); ++b)
      series.push_back(padded_flows(instance, static_cast<int>(b), model.flows[b]));

  for (std::size_t r = 0; r < model.eq_meta.size(); ++r) {
    const double mu = solution.eq_duals[r];
    if (mu == 0.0) continue;
    const RowMeta& meta = model.eq_meta[r];
    switch (meta.kind) {
      case RowKind::Pressure: {
        const double m = model.flows[static_cast<std::size_t>(meta.entity)]
                                    [static_cast<std::size_t>(meta.tau)];
        const double k = dhs.pipelines[static_cast<std::size_t>(meta.entity)]
                             .resistance_pa_s2_per_kg2;
        cut.gradient[idx(meta.entity, meta.tau)] += mu * (-2.0 * k * m / meta.scale);
        break;
      }
      case RowKind::PowerBalance: {
        if (!model.options.pump_load) break;
        for (std::size_t b = 0; b < dhs.pipelines.size(); ++b) {
          const auto& pump = dhs.pipelines[b].pump;
          if (!pump) continue;
          const double head = x(L.pump_head(static_cast<int>(b), meta.tau));
          cut.gradient[idx(static_cast<int>(b), meta.tau)] +=
              mu * (-head / (rho * pump->efficiency) * 1e-6);
        }
        break;
      }
      case RowKind::Mixing: {
        const std::size_t n = static_cast<std::size_t>(meta.entity);
        const int tau = meta.tau;
        const double t_n = x(L.node_temp(meta.entity, tau));
        const bool sink = topo.outs[n].empty();
        const bool root = topo.ins[n].empty();
        for (int b : topo.ins[n])
          cut.gradient[idx(b, tau)] +=
              mu * ((sink ? t_n : 0.0) - x(L.pipe_outlet(b, tau))) / meta.scale;
        for (int b : topo.outs[n])
          cut.gradient[idx(b, tau)] +=
              mu * (t_n - (root ? dhs.nodes[n].intake_temp_c : 0.0)) / meta.scale;
        break;
      }
      case RowKind::Lossless: {
        const int b = meta.entity;
        const int tau = meta.tau;
        const WaterColumnWeights& w =
            model.weights[static_cast<std::size_t>(b)][static_cast<std::size_t>(tau)];
        const PaddedSeries& s = series[static_cast<std::size_t>(b)];
        const double m_tau = s.at(tau);
        const int nb = static_cast<int>(w.alpha.size()) - 1;
        double mix = 0.0;  // share-weighted inlet mass-temperature sum
        for (int k = 0; k <= nb; ++k)
          mix += (w.beta[static_cast<std::size_t>(k)] - w.alpha[static_cast<std::size_t>(k)]) *
                 s.at(tau - k) * inlet_at(b, k, tau);
        const WeightJacobian jac = weight_jacobian(w, s, tau);
        for (int j = 0; j <= nb; ++j) {
          if (tau - j < 0) break;
          double d = -(w.beta[static_cast<std::size_t>(j)] - w.alpha[static_cast<std::size_t>(j)]) *
                     inlet_at(b, j, tau) / m_tau;
          if (j == 0) d += mix / (m_tau * m_tau);
          const double da = jac.dalpha(j);
          if (da != 0.0) d += da * s.at(tau - jac.ka) * inlet_at(b, jac.ka, tau) / m_tau;
          const double db = jac.dbeta(j);
          if (db != 0.0) d -= db * s.at(tau - jac.kb) * inlet_at(b, jac.kb, tau) / m_tau;
          cut.gradient[idx(b, tau - j)] += mu * d;
        }
        break;
      }
      case RowKind::LossDecay: {
        const int b = meta.entity;
        const int tau = meta.tau;
        const PipelineSpec& pipe = dhs.pipelines[static_cast<std::size_t>(b)];
        const WaterColumnWeights& w =
            model.weights[static_cast<std::size_t>(b)][static_cast<std::size_t>(tau)];
        const PaddedSeries& s = series[static_cast<std::size_t>(b)];
        const int nb = static_cast<int>(w.alpha.size()) - 1;
        double ws = 0.0;
        for (int k = 0; k <= nb; ++k)
          ws += w.alpha[static_cast<std::size_t>(k)] +
                (k >= 1 ? w.beta[static_cast<std::size_t>(k)] : 0.0);
        const double decay = pipe.heat_loss_w_per_m_k * instance.horizon.dt_seconds /
                             (2.0 * pipe.area_m2 * rho * c_w);
        const double factor = std::exp(-decay * ws);
        const double base =
            decay * factor * (x(L.pipe_lossless(b, tau)) - pipe.ambient_at(tau));
        const WeightJacobian jac = weight_jacobian(w, s, tau);
        for (int j = 0; j <= nb; ++j) {
          if (tau - j < 0) break;
          const double dws = jac.dalpha(j) + jac.dbeta(j);
          if (dws != 0.0) cut.gradient[idx(b, tau - j)] += mu * base * dws;
        }
        break;
      }
      case RowKind::SteadyOutlet: {
        const int b = meta.entity;
        const int tau = meta.tau;
        const PipelineSpec& pipe = dhs.pipelines[static_cast<std::size_t>(b)];
        const double m = model.flows[static_cast<std::size_t>(b)][static_cast<std::size_t>(tau)];
        const double lam = pipe.heat_loss_w_per_m_k * pipe.length_m / c_w;
        const double factor = std::exp(-lam / m);
        const double dfactor = factor * lam / (m * m);
        cut.gradient[idx(b, tau)] +=
            mu * dfactor * (pipe.ambient_at(tau) - x(L.pipe_inlet(b, tau)));
        break;
      }
      default:
        break;  // rows with no flow dependence
    }
  }

  // With pump load enabled, the line-limit rows also carry flow-dependent
  // pump-power coefficients (paired upper/lower rows lead the inequality
  // block, line-major then period).
  if (model.options.pump_load && !instance.grid.lines.empty() && !solution.ineq_duals.empty()) {
    const int pump_bus =
        instance.chp_units.empty() ? 0 : instance.grid.bus_index(instance.chp_units[0].bus);
    for (std::size_t l = 0; l < instance.grid.lines.size(); ++l) {
      const double sf = instance.grid.lines[l].shift_factors[static_cast<std::size_t>(pump_bus)];
      if (sf == 0.0) continue;
      for (int tau = 0; tau < T; ++tau) {
        const std::size_t row = 2 * (l * static_cast<std::size_t>(T) + static_cast<std::size_t>(tau));
        const double z_up = solution.ineq_duals[row];
        const double z_lo = solution.ineq_duals[row + 1];
        if (z_up == 0.0 && z_lo == 0.0) continue;
        for (std::size_t b = 0; b < dhs.pipelines.size(); ++b) {
          const auto& pump = dhs.pipelines[b].pump;
          if (!pump) continue;
          const double coeff =
              sf * x(L.pump_head(static_cast<int>(b), tau)) / (rho * pump->efficiency) * 1e-6;
          cut.gradient[idx(static_cast<int>(b), tau)] += (z_lo - z_up) * coeff;
        }
      }
    }
  }
  return cut;
}

LlpResult solve_llp(const DispatchInstance& instance, int periods,
                    const std::vector<Cut>& optimality_cuts,
                    const std::vector<Cut>& feasibility_cuts, const FlowSchedule& hint) {
  const std::size_t pipes = instance.dhs.pipelines.size();
  LlpResult out;
  if (pipes == 0) return out;
  const std::size_t flows_n = pipes * static_cast<std::size_t>(periods);
  const bool has_epigraph = !optimality_cuts.empty();

  QpProblem qp;
  qp.variable_count = static_cast<int>(flows_n) + (has_epigraph ? 1 : 0);
  flow_bounds(instance, periods, qp.lower, qp.upper);
  qp.linear.assign(static_cast<std::size_t>(qp.variable_count), 0.0);
  if (has_epigraph) {
    qp.lower.push_back(-kInf);
    qp.upper.push_back(kInf);
    qp.linear.back() = 1.0;
  }
  qp.equalities = continuity_rows(instance, periods);

  const auto add_cut_row = [&](const Cut& cut, bool epigraph) {
    LinearRow row;
    double scale = 1.0;
    double rhs = -cut.objective_at_point;
    for (std::size_t i = 0; i < cut.gradient.size(); ++i) {
      rhs += cut.gradient[i] * cut.point[i];
      scale = std::max(scale, std::abs(cut.gradient[i]));
    }
    scale = std::max(scale, std::abs(rhs));
    for (std::size_t i = 0; i < cut.gradient.size(); ++i)
      row.add(static_cast<int>(i), cut.gradient[i] / scale);
    if (epigraph) row.add(static_cast<int>(flows_n), -1.0 / scale);
    row.rhs = rhs / scale;
    qp.inequalities.push_back(std::move(row));
  };
  for (const Cut& cut : optimality_cuts) add_cut_row(cut, true);
  for (const Cut& cut : feasibility_cuts) add_cut_row(cut, false);

  SolveOptions opts;
  opts.max_iterations = 300;
  if (!hint.empty()) {
    std::vector<double> start = flatten(hint);
    start.resize(flows_n);
    start = clamp_to_bounds(start, std::vector<double>(qp.lower.begin(),
                                                       qp.lower.begin() + static_cast<std::ptrdiff_t>(flows_n)),
                            std::vector<double>(qp.upper.begin(),
                                                qp.upper.begin() + static_cast<std::ptrdiff_t>(flows_n)));
    if (has_epigraph) {
      double top = 0.0;
      for (const Cut& cut : optimality_cuts) top = std::max(top, cut.value_at(start));
      start.push_back(top + 1.0);
    }
    opts.initial_x = std::move(start);
  }

  const QpSolution sol = solve_lp(qp, opts);
  out.status = sol.status;
  if (sol.status != SolveStatus::Optimal) return out;
  std::vector<double> flat(sol.x.begin(), sol.x.begin() + static_cast<std::ptrdiff_t>(flows_n));
  flat = clamp_to_bounds(flat,
                         std::vector<double>(qp.lower.begin(),
                                             qp.lower.begin() + static_cast<std::ptrdiff_t>(flows_n)),
                         std::vector<double>(qp.upper.begin(),
                                             qp.upper.begin() + static_cast<std::ptrdiff_t>(flows_n)));
  out.flows = unflatten(flat, pipes, periods);
  out.bound = has_epigraph ? sol.x.back() : 0.0;
  return out;
}

namespace {

double relative_gap(double ubd, double lbd) {
  if (!(ubd < kInf)) return kInf;
  return (ubd - std::max(lbd, 0.0)) / std::max(std::abs(ubd), 1e-12);
}

DispatchSolution assemble_solution(const DispatchInstance& instance, std::vector<double> x,
                                   FlowSchedule flows, WeightSchedule weights,
                                   std::vector<std::vector<double>> fixed_heat_w,
                                   const ModelOptions& options, double tolerance) {
  DispatchSolution sol;
  sol.x = std::move(x);
  sol.flows = std::move(flows);
  sol.weights = std::move(weights);
  sol.fixed_heat_w = std::move(fixed_heat_w);
  sol.options = options;
  const VariableLayout layout(instance, options);
  sol.objective = objective_breakdown(instance, layout, sol.x);
  sol.curtailment_mw = curtailment_profile(instance, layout, sol.x);
  sol.feasibility = check_feasibility(instance, sol.x, sol.flows, sol.weights, options, tolerance);
  return sol;
}

}  // namespace

GbdResult gbd_solve(const DispatchInstance& instance, const GbdOptions& options) {
  const auto start_time = std::chrono::steady_clock::now();
  const auto wall_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     start_time)
        .count();
  };
  const int periods = instance.horizon.periods;

  GbdResult res;
  GbdState& st = res.state;

  FlowSchedule m = options.initial_flows;
  if (m.empty()) {
    if (options.model.steady) {
      m = project_flows(instance, history_tail_flows(instance));
    } else {
      // Warm-start from the steady baseline; fall back to the projected
      // history tails if that solve yields nothing.
      GbdOptions warm = options;
      warm.model.steady = true;
      warm.initial_flows.clear();
      const SteadyResult steady = solve_steady(instance, warm);
      m = steady.solution.flows.empty() ? project_flows(instance, history_tail_flows(instance))
                                        : steady.solution.flows;
    }
  } else {
    check_schedule_shape(instance, m, "gbd initial flows");
  }

  bool have_incumbent = false;
  std::vector<double> best_x;
  FlowSchedule best_m;
  WeightSchedule best_eta;
  std::vector<std::vector<double>> best_fixed;
  std::vector<double> sp_hint;

  for (int r = 1; r <= options.max_iterations; ++r) {
    st.iterations = r;
    st.flow_iterates.push_back(m);

    WeightSchedule eta;
    if (!options.model.steady) {
      try {
        eta = solve_ulp(instance, m);
      } catch (const std::exception& ex) {
        st.abort_reason = std::string("fill mapping failed: ") + ex.what();
        break;
      }
    }

    SubproblemModel sp_model = build_subproblem(instance, m, eta, options.model);
    SolveOptions sp_opts;
    sp_opts.tolerance = options.sp_tolerance;
    sp_opts.max_iterations = options.sp_max_iterations;
    sp_opts.initial_x = sp_hint;
    const QpSolution sp = solve_qp(sp_model.qp, sp_opts);

    GbdTracePoint pt;
    pt.iteration = r;
    pt.sp_status = sp.status;
    pt.ubd = st.ubd;
    pt.lbd = st.lbd;

    if (sp.status == SolveStatus::Optimal) {
      sp_hint = sp.x;
      if (sp.objective < st.ubd) {
        st.ubd = sp.objective;
        best_x = sp.x;
        best_m = m;
        best_eta = eta;
        best_fixed = sp_model.fixed_heat_w;
        have_incumbent = true;
      }
      pt.ubd = st.ubd;
      if (relative_gap(st.ubd, st.lbd) < options.epsilon) {
        st.converged = true;
        pt.wall_ms = wall_ms();
        st.trace.push_back(pt);
        break;
      }
      st.optimality_cuts.push_back(make_cut(instance, sp_model, sp, r));
    } else if (sp.status == SolveStatus::Infeasible) {
      SubproblemModel fp_model = build_feasibility_problem(instance, m, eta, options.model);
      SolveOptions fp_opts;
      fp_opts.tolerance = options.sp_tolerance;
      fp_opts.max_iterations = options.sp_max_iterations;
      const QpSolution fp = solve_lp(fp_model.qp, fp_opts);
      if (fp.status != SolveStatus::Optimal) {
        st.abort_reason = "slack relaxation did not solve: " + status_name(fp.status);
        pt.wall_ms = wall_ms();
        st.trace.push_back(pt);
        break;
      }
      if (fp.objective <= 1e-6) {
        st.abort_reason =
            "subproblem reported infeasible but the slack relaxation found no violation";
        pt.wall_ms = wall_ms();
        st.trace.push_back(pt);
        break;
      }
      st.feasibility_cuts.push_back(make_cut(instance, fp_model, fp, r));
    } else {
      st.abort_reason = "subproblem solver returned " + status_name(sp.status);
      pt.wall_ms = wall_ms();
      st.trace.push_back(pt);
      break;
    }

    const LlpResult llp =
        solve_llp(instance, periods, st.optimality_cuts, st.feasibility_cuts, m);
    if (llp.status != SolveStatus::Optimal) {
      st.abort_reason = "cut master returned " + status_name(llp.status);
      pt.wall_ms = wall_ms();
      st.trace.push_back(pt);
      break;
    }
    pt.lbd = llp.bound;  // raw master bound; st.lbd keeps the monotone max
    st.lbd = std::max(st.lbd, llp.bound);
    pt.wall_ms = wall_ms();
    st.trace.push_back(pt);
    m = llp.flows;
    if (relative_gap(st.ubd, st.lbd) < options.epsilon) {
      st.converged = true;
      break;
    }
  }

  st.gap = relative_gap(st.ubd, st.lbd);
  if (have_incumbent)
    res.solution =
        assemble_solution(instance, std::move(best_x), std::move(best_m), std::move(best_eta),
                          std::move(best_fixed), options.model, options.feasibility_tolerance);
  return res;
}

DispatchSolution refine_local(const DispatchInstance& instance, const DispatchSolution& start,
                              const GbdOptions& options) {
  if (start.x.empty() || start.flows.empty())
    throw std::invalid_argument("local refinement needs a solved starting point");
  const ModelOptions mode = start.options;

  FlowSchedule m = start.flows;
  WeightSchedule eta = start.weights;
  SubproblemModel model = build_subproblem(instance, m, eta, mode);
  SolveOptions sp_opts;
  sp_opts.tolerance = options.sp_tolerance;
  sp_opts.max_iterations = options.sp_max_iterations;
  sp_opts.initial_x = start.x;
  QpSolution sol = solve_qp(model.qp, sp_opts);
  if (sol.status != SolveStatus::Optimal) {
    DispatchSolution unchanged = start;
    unchanged.refine_warning = true;
    return unchanged;
  }
  double value = sol.objective;

  bool accepted_any = false;
  bool line_search_failed = false;
  double step = -1.0;
  for (int it = 0; it < options.refine_max_iterations; ++it) {
    const Cut cut = make_cut(instance, model, sol, it);
    const std::vector<double>& grad = cut.gradient;
    const std::vector<double> flat = flatten(m);

    // Projected-gradient stationarity: no feasible descent direction left.
    std::vector<double> probe(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) probe[i] = flat[i] - grad[i];
    const FlowSchedule stationary_point =
        project_flows(instance, unflatten(probe, m.size(), instance.horizon.periods));
    double movement = 0.0;
    const std::vector<double> stat_flat = flatten(stationary_point);
    for (std::size_t i = 0; i < flat.size(); ++i)
      movement = std::max(movement, std::abs(stat_flat[i] - flat[i]));
    if (movement <= options.refine_tolerance * (1.0 + max_abs(flat))) break;

    if (step < 0.0) step = 0.1 * std::max(1.0, max_abs(flat)) / std::max(1e-12, max_abs(grad));

    bool stepped = false;
    for (int halving = 0; halving < 50 && !stepped; ++halving) {
      std::vector<double> shifted(flat.size());
      for (std::size_t i = 0; i < flat.size(); ++i) shifted[i] = flat[i] - step * grad[i];
      const FlowSchedule candidate =
          project_flows(instance, unflatten(shifted, m.size(), instance.horizon.periods));
      const std::vector<double> cand_flat = flatten(candidate);
      double distance = 0.0;
      double decrease = 0.0;
      for (std::size_t i = 0; i < flat.size(); ++i) {
        distance = std::max(distance, std::abs(cand_flat[i] - flat[i]));
        decrease += grad[i] * (flat[i] - cand_flat[i]);
      }
      if (distance <= 1e-12 * (1.0 + max_abs(flat))) break;  // step size underflow

      WeightSchedule cand_eta;
      if (!mode.steady) {
        try {
          cand_eta = solve_ulp(instance, candidate);
        } catch (const std::exception&) {
          step *= 0.5;
          continue;
        }
      }
      SubproblemModel cand_model = build_subproblem(instance, candidate, cand_eta, mode);
      SolveOptions cand_opts = sp_opts;
      cand_opts.initial_x = sol.x;
      QpSolution cand_sol = solve_qp(cand_model.qp, cand_opts);
      if (cand_sol.status == SolveStatus::Optimal &&
          cand_sol.objective <= value - 1e-4 * decrease) {
        m = candidate;
        eta = std::move(cand_eta);
        model = std::move(cand_model);
        sol = std::move(cand_sol);
        value = sol.objective;
        step *= 2.0;
        stepped = true;
        accepted_any = true;
      } else {
        step *= 0.5;
      }
    }
    if (!stepped) {
      line_search_failed = !accepted_any;
      break;
    }
  }

  if (!accepted_any) {
    DispatchSolution unchanged = start;
    unchanged.refine_warning = line_search_failed;
    return unchanged;
  }
  DispatchSolution refined =
      assemble_solution(instance, sol.x, m, eta, model.fixed_heat_w, mode,
                        options.feasibility_tolerance);
  if (refined.objective.total > start.objective.total) return start;
  return refined;
}

}  // namespace hydrodispatch
