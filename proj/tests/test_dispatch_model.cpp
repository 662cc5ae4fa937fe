#include "hydrodispatch/dispatch_model.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "hydrodispatch/building.hpp"
#include "hydrodispatch/instance.hpp"
#include "hydrodispatch/pipeline.hpp"
#include "hydrodispatch/qp.hpp"

namespace hydrodispatch {
namespace {

std::string data_path(const std::string& name) {
  return std::string(HYDRODISPATCH_DATA_DIR) + "/" + name;
}

const DispatchInstance& six_bus() {
  static const DispatchInstance instance = load_instance(data_path("six-bus.json"));
  return instance;
}

// Constant flow schedule holding every pipe at its last recorded value.
FlowSchedule tail_flows(const DispatchInstance& instance) {
  FlowSchedule flows;
  for (const auto& history : instance.dhs.flow_histories)
    flows.emplace_back(static_cast<std::size_t>(instance.horizon.periods),
                       history.mass_flow_kg_s.at(-1));
  return flows;
}

WeightSchedule fill_schedule(const DispatchInstance& instance, const FlowSchedule& flows) {
  WeightSchedule weights(flows.size());
  for (std::size_t b = 0; b < flows.size(); ++b) {
    const PaddedSeries series = padded_flows(instance, static_cast<int>(b), flows[b]);
    FlowHistory record;
    record.mass_flow_kg_s = series;
    record.inlet_temp_c = PaddedSeries::constant(0.0, series.lead(), series.tail());
    for (int tau = 0; tau < static_cast<int>(flows[b].size()); ++tau)
      weights[b].push_back(fill_weights(instance.dhs.pipelines[b], record, tau,
                                        instance.horizon.dt_seconds, instance.constants));
  }
  return weights;
}

struct SolvedBase {
  SubproblemModel model;
  QpSolution solution;
};

const SolvedBase& solved_base() {
  static const SolvedBase base = [] {
    const DispatchInstance& instance = six_bus();
    const FlowSchedule flows = tail_flows(instance);
    SubproblemModel model = build_subproblem(instance, flows, fill_schedule(instance, flows));
    SolveOptions options;
    options.max_iterations = 200;
    QpSolution solution = solve_qp(model.qp, options);
    return SolvedBase{std::move(model), std::move(solution)};
  }();
  return base;
}

TEST(VariableLayoutTest, ColumnsAreDistinctAndCoverEveryVariable) {
  const DispatchInstance& instance = six_bus();
  const VariableLayout layout(instance, ModelOptions{});
  const int T = layout.periods();
  ASSERT_EQ(T, instance.horizon.periods);

  std::vector<int> cols;
  for (std::size_t i = 0; i < instance.chp_units.size(); ++i) {
    for (int tau = 0; tau < T; ++tau) {
      cols.push_back(layout.chp_p(static_cast<int>(i), tau));
      cols.push_back(layout.chp_q(static_cast<int>(i), tau));
      for (std::size_t k = 0; k < instance.chp_units[i].vertex_p_mw.size(); ++k)
        cols.push_back(layout.chp_zeta(static_cast<int>(i), static_cast<int>(k), tau));
    }
  }
  for (std::size_t i = 0; i < instance.thermal_units.size(); ++i)
    for (int tau = 0; tau < T; ++tau) {
      cols.push_back(layout.tu_p(static_cast<int>(i), tau));
      cols.push_back(layout.tu_ru(static_cast<int>(i), tau));
      cols.push_back(layout.tu_rd(static_cast<int>(i), tau));
    }
  for (std::size_t i = 0; i < instance.renewables.size(); ++i)
    for (int tau = 0; tau < T; ++tau) cols.push_back(layout.re_p(static_cast<int>(i), tau));
  for (std::size_t b = 0; b < instance.dhs.buildings.size(); ++b)
    for (int tau = 0; tau < T; ++tau) {
      for (int w = 0; w < instance.dhs.buildings[b].wall_count(); ++w)
        cols.push_back(layout.bld_wall(static_cast<int>(b), w, tau));
      cols.push_back(layout.bld_room(static_cast<int>(b), tau));
      cols.push_back(layout.bld_heat(static_cast<int>(b), tau));
    }
  for (std::size_t n = 0; n < instance.dhs.nodes.size(); ++n)
    for (int tau = 0; tau < T; ++tau) {
      cols.push_back(layout.node_temp(static_cast<int>(n), tau));
      cols.push_back(layout.node_pressure(static_cast<int>(n), tau));
    }
  for (std::size_t b = 0; b < instance.dhs.pipelines.size(); ++b)
    for (int tau = 0; tau < T; ++tau) {
      cols.push_back(layout.pipe_inlet(static_cast<int>(b), tau));
      cols.push_back(layout.pipe_outlet(static_cast<int>(b), tau));
      cols.push_back(layout.pipe_lossless(static_cast<int>(b), tau));
      const int pump = layout.pump_head(static_cast<int>(b), tau);
      if (pump >= 0) cols.push_back(pump);
    }

  ASSERT_EQ(static_cast<int>(cols.size()), layout.count());
  std::sort(cols.begin(), cols.end());
  EXPECT_EQ(cols.front(), 0);
  EXPECT_EQ(cols.back(), layout.count() - 1);
  EXPECT_TRUE(std::adjacent_find(cols.begin(), cols.end()) == cols.end());

  // Steady mode drops the building and pre-decay temperature columns.
  const VariableLayout steady(instance, ModelOptions{true, false});
  EXPECT_FALSE(steady.has_buildings());
  EXPECT_LT(steady.count(), layout.count());
}

TEST(SubproblemTest, RowFamiliesHaveExpectedCounts) {
  const SolvedBase& base = solved_base();
  std::map<RowKind, int> counts;
  for (const RowMeta& meta : base.model.eq_meta) counts[meta.kind]++;
  const DispatchInstance& instance = six_bus();
  const int T = instance.horizon.periods;
  const int pipes = static_cast<int>(instance.dhs.pipelines.size());
  EXPECT_EQ(counts[RowKind::ChpP], T);
  EXPECT_EQ(counts[RowKind::ChpQ], T);
  EXPECT_EQ(counts[RowKind::ChpConvex], T);
  EXPECT_EQ(counts[RowKind::PowerBalance], T);
  EXPECT_EQ(counts[RowKind::BuildingWall], 3 * T);
  EXPECT_EQ(counts[RowKind::BuildingAir], 3 * T);
  EXPECT_EQ(counts[RowKind::Pressure], pipes * T);
  EXPECT_EQ(counts[RowKind::OutletGate], pipes * T);
  EXPECT_EQ(counts[RowKind::Mixing], static_cast<int>(instance.dhs.nodes.size()) * T);
  EXPECT_EQ(counts[RowKind::Lossless], pipes * T);
  EXPECT_EQ(counts[RowKind::LossDecay], pipes * T);
  EXPECT_EQ(counts[RowKind::SteadyOutlet], 0);
  EXPECT_EQ(base.model.eq_meta.size(), base.model.qp.equalities.size());
}

TEST(SubproblemTest, RecordedFlowsGiveACleanOptimum) {
  const SolvedBase& base = solved_base();
  ASSERT_EQ(base.solution.status, SolveStatus::Optimal);

  const DispatchInstance& instance = six_bus();
  const std::vector<double>& x = base.solution.x;

  // The recomputed cost pieces agree with the solver objective.
  const ObjectiveBreakdown cost = objective_breakdown(instance, base.model.layout, x);
  EXPECT_GE(cost.chp, 0.0);
  EXPECT_GE(cost.thermal, 0.0);
  EXPECT_GE(cost.penalty, -1e-9);
  EXPECT_NEAR(cost.total, base.solution.objective, 1e-4 * (1.0 + std::abs(cost.total)));

  // Every equality row is satisfied when re-evaluated from scratch.
  const std::vector<double> residuals =
      evaluate_equalities(instance, x, base.model.flows, base.model.weights);
  double worst = 0.0;
  for (double r : residuals) worst = std::max(worst, std::abs(r));
  EXPECT_LE(worst, 1e-5);

  // CHP output stays a convex combination of the polygon corners.
  const VariableLayout& L = base.model.layout;
  for (int tau = 0; tau < L.periods(); ++tau) {
    double zeta_sum = 0.0, p_mix = 0.0, q_mix = 0.0;
    for (std::size_t k = 0; k < instance.chp_units[0].vertex_p_mw.size(); ++k) {
      const double z = x[static_cast<std::size_t>(L.chp_zeta(0, static_cast<int>(k), tau))];
      EXPECT_GE(z, -1e-7);
      zeta_sum += z;
      p_mix += z * instance.chp_units[0].vertex_p_mw[k];
      q_mix += z * instance.chp_units[0].vertex_q_mw[k];
    }
    EXPECT_NEAR(zeta_sum, 1.0, 1e-6);
    EXPECT_NEAR(p_mix, x[static_cast<std::size_t>(L.chp_p(0, tau))], 1e-5);
    EXPECT_NEAR(q_mix, x[static_cast<std::size_t>(L.chp_q(0, tau))], 1e-5);
  }

  // Room temperatures respect the comfort band; heating power is nonnegative.
  for (std::size_t b = 0; b < instance.dhs.buildings.size(); ++b) {
    const BuildingSpec& spec = instance.dhs.buildings[b];
    for (int tau = 0; tau < L.periods(); ++tau) {
      const double room = x[static_cast<std::size_t>(L.bld_room(static_cast<int>(b), tau))];
      EXPECT_GE(room, spec.room_temp_min_c - 1e-6);
      EXPECT_LE(room, spec.room_temp_max_c + 1e-6);
      EXPECT_GE(x[static_cast<std::size_t>(L.bld_heat(static_cast<int>(b), tau))], -1e-7);
    }
  }

  // Derived profiles are sane.
  for (double mw : heat_output_profile(instance, L, x)) EXPECT_GE(mw, -1e-6);
  for (double mw : heat_load_profile(instance, L, x, {})) EXPECT_GE(mw, -1e-9);
  for (double mw : curtailment_profile(instance, L, x)) EXPECT_GE(mw, -1e-6);
}

TEST(SubproblemTest, SolutionReplaysThroughTheBuildingSimulator) {
  const SolvedBase& base = solved_base();
  ASSERT_EQ(base.solution.status, SolveStatus::Optimal);
  const DispatchInstance& instance = six_bus();
  const VariableLayout& L = base.model.layout;
  for (std::size_t b = 0; b < instance.dhs.buildings.size(); ++b) {
    std::vector<double> heat;
    for (int tau = 0; tau < L.periods(); ++tau)
      heat.push_back(1e3 * base.solution.x[static_cast<std::size_t>(
                               L.bld_heat(static_cast<int>(b), tau))]);
    const BuildingTrajectory traj =
        simulate_building(instance.dhs.buildings[b], instance.constants, instance.horizon, heat);
    for (int tau = 0; tau < L.periods(); ++tau) {
      EXPECT_NEAR(traj.room_temps_c[static_cast<std::size_t>(tau)],
                  base.solution.x[static_cast<std::size_t>(
                      L.bld_room(static_cast<int>(b), tau))],
                  1e-2);
      EXPECT_NEAR(traj.wall_temps_c[static_cast<std::size_t>(tau)][0],
                  base.solution.x[static_cast<std::size_t>(
                      L.bld_wall(static_cast<int>(b), 0, tau))],
                  1e-2);
    }
  }
}

TEST(SubproblemTest, LoadNodeMixingClosesTheEnergyBalance) {
  const SolvedBase& base = solved_base();
  ASSERT_EQ(base.solution.status, SolveStatus::Optimal);
  const DispatchInstance& instance = six_bus();
  const VariableLayout& L = base.model.layout;
  const std::vector<double>& x = base.solution.x;
  const double c = instance.constants.water_specific_heat;

  // At each building node: water-side heat release equals the building draw.
  for (std::size_t b = 0; b < instance.dhs.buildings.size(); ++b) {
    const BuildingSpec& spec = instance.dhs.buildings[b];
    const int node = instance.dhs.node_index(spec.dhs_node);
    int in_pipe = -1, out_pipe = -1;
    for (std::size_t p = 0; p < instance.dhs.pipelines.size(); ++p) {
      if (instance.dhs.node_index(instance.dhs.pipelines[p].to_node) == node)
        in_pipe = static_cast<int>(p);
      if (instance.dhs.node_index(instance.dhs.pipelines[p].from_node) == node)
        out_pipe = static_cast<int>(p);
    }
    ASSERT_GE(in_pipe, 0);
    ASSERT_GE(out_pipe, 0);
    for (int tau = 0; tau < L.periods(); ++tau) {
      const double m_in = base.model.flows[static_cast<std::size_t>(in_pipe)]
                                          [static_cast<std::size_t>(tau)];
      const double m_out = base.model.flows[static_cast<std::size_t>(out_pipe)]
                                           [static_cast<std::size_t>(tau)];
      const double t_e = x[static_cast<std::size_t>(L.pipe_outlet(in_pipe, tau))];
      const double t_n = x[static_cast<std::size_t>(L.node_temp(node, tau))];
      const double draw_w =
          spec.room_count * 1e3 *
          x[static_cast<std::size_t>(L.bld_heat(static_cast<int>(b), tau))];
      EXPECT_NEAR(c * (m_in * t_e - m_out * t_n), draw_w,
                  1e-4 * (1.0 + std::abs(draw_w)));
    }
  }
}

TEST(SubproblemTest, SteadyModePinsTheLoadsAndSolves) {
  const DispatchInstance& instance = six_bus();
  const FlowSchedule flows = tail_flows(instance);
  const ModelOptions options{true, false};
  SubproblemModel model = build_subproblem(instance, flows, {}, options);
  EXPECT_FALSE(model.layout.has_buildings());
  ASSERT_EQ(model.fixed_heat_w.size(), instance.dhs.buildings.size());

  const std::vector<std::vector<double>> presolved = presolve_heat_loads(instance);
  for (std::size_t b = 0; b < presolved.size(); ++b)
    for (int tau = 0; tau < instance.horizon.periods; ++tau)
      EXPECT_EQ(model.fixed_heat_w[b][static_cast<std::size_t>(tau)],
                presolved[b][static_cast<std::size_t>(tau)]);

  SolveOptions solve_options;
  solve_options.max_iterations = 200;
  const QpSolution solution = solve_qp(model.qp, solve_options);
  ASSERT_EQ(solution.status, SolveStatus::Optimal);

  // Heat loads reported in steady mode come from the presolve.
  const std::vector<double> loads =
      heat_load_profile(instance, model.layout, solution.x, model.fixed_heat_w);
  for (int tau = 0; tau < instance.horizon.periods; ++tau) {
    double expect = 0.0;
    for (std::size_t b = 0; b < presolved.size(); ++b)
      expect += instance.dhs.buildings[b].room_count *
                presolved[b][static_cast<std::size_t>(tau)] * 1e-6;
    EXPECT_NEAR(loads[static_cast<std::size_t>(tau)], expect, 1e-9);
  }
}

TEST(SubproblemTest, RemovingTheWindPlantRemovesThePenalty) {
  DispatchInstance instance = six_bus();
  instance.renewables.clear();
  const FlowSchedule flows = tail_flows(instance);
  SubproblemModel model = build_subproblem(instance, flows, fill_schedule(instance, flows));
  SolveOptions options;
  options.max_iterations = 200;
  const QpSolution solution = solve_qp(model.qp, options);
  ASSERT_EQ(solution.status, SolveStatus::Optimal);
  const ObjectiveBreakdown cost = objective_breakdown(instance, model.layout, solution.x);
  EXPECT_EQ(cost.penalty, 0.0);
  // All demand now rides on the dispatchable units, so fuel spend goes up.
  const ObjectiveBreakdown base =
      objective_breakdown(six_bus(), solved_base().model.layout, solved_base().solution.x);
  EXPECT_GT(cost.chp + cost.thermal, base.chp + base.thermal);
}

TEST(SubproblemTest, PumpLoadOptionEntersThePowerBalance) {
  const DispatchInstance& instance = six_bus();
  const FlowSchedule flows = tail_flows(instance);
  const WeightSchedule weights = fill_schedule(instance, flows);
  SubproblemModel model = build_subproblem(instance, flows, weights, ModelOptions{false, true});

  // The power balance row now carries the pumped pipes' head columns.
  int balance_terms = 0, plain_terms = 0;
  const SubproblemModel& plain = solved_base().model;
  for (std::size_t r = 0; r < model.eq_meta.size(); ++r)
    if (model.eq_meta[r].kind == RowKind::PowerBalance && model.eq_meta[r].tau == 0)
      balance_terms = static_cast<int>(model.qp.equalities[r].terms.size());
  for (std::size_t r = 0; r < plain.eq_meta.size(); ++r)
    if (plain.eq_meta[r].kind == RowKind::PowerBalance && plain.eq_meta[r].tau == 0)
      plain_terms = static_cast<int>(plain.qp.equalities[r].terms.size());
  int pumped = 0;
  for (const auto& pipe : instance.dhs.pipelines)
    if (pipe.pump) ++pumped;
  EXPECT_EQ(balance_terms, plain_terms + pumped);

  SolveOptions options;
  options.max_iterations = 200;
  const QpSolution solution = solve_qp(model.qp, options);
  ASSERT_EQ(solution.status, SolveStatus::Optimal);
  const std::vector<double> pump_mw =
      pump_load_profile(instance, model.layout, solution.x, flows);
  for (double mw : pump_mw) EXPECT_GE(mw, -1e-9);
}

TEST(FeasibilityProblemTest, ZeroSlackAtTheRecordedFlows) {
  const DispatchInstance& instance = six_bus();
  const FlowSchedule flows = tail_flows(instance);
  SubproblemModel model =
      build_feasibility_problem(instance, flows, fill_schedule(instance, flows));
  ASSERT_TRUE(model.is_feasibility());
  EXPECT_EQ(model.slack_base, model.layout.count());
  EXPECT_EQ(model.qp.variable_count,
            model.layout.count() + 2 * static_cast<int>(model.relaxed_rows.size()));
  for (int r : model.relaxed_rows)
    EXPECT_EQ(model.eq_meta[static_cast<std::size_t>(r)].kind, RowKind::Mixing);
  EXPECT_TRUE(model.qp.quadratic.empty());

  SolveOptions options;
  options.max_iterations = 200;
  const QpSolution solution = solve_lp(model.qp, options);
  ASSERT_EQ(solution.status, SolveStatus::Optimal);
  EXPECT_LE(solution.objective, 1e-6);
}

TEST(FeasibilityProblemTest, ColdSnapShowsUpAsPositiveSlack) {
  DispatchInstance instance = six_bus();
  for (BuildingSpec& spec : instance.dhs.buildings)
    spec.outdoor_temp_c = PaddedSeries::constant(-40.0, spec.order(), instance.horizon.periods);
  const FlowSchedule flows = tail_flows(instance);
  const WeightSchedule weights = fill_schedule(instance, flows);

  SubproblemModel relaxed = build_feasibility_problem(instance, flows, weights);
  SolveOptions options;
  options.max_iterations = 200;
  const QpSolution fp = solve_lp(relaxed.qp, options);
  ASSERT_EQ(fp.status, SolveStatus::Optimal);
  EXPECT_GT(fp.objective, 1e-2);

  // The unrelaxed subproblem is certified infeasible.
  SubproblemModel strict = build_subproblem(instance, flows, weights);
  const QpSolution sp = solve_qp(strict.qp, options);
  EXPECT_EQ(sp.status, SolveStatus::Infeasible);
}

TEST(SubproblemTest, InputGuardsRejectInconsistentArguments) {
  const DispatchInstance& instance = six_bus();
  const FlowSchedule flows = tail_flows(instance);
  WeightSchedule weights = fill_schedule(instance, flows);

  // Weights that do not match the flows are rejected.
  WeightSchedule tampered = weights;
  tampered[0][5].alpha[1] += 1e-3;
  EXPECT_THROW(build_subproblem(instance, flows, tampered), std::invalid_argument);

  // Steady mode takes no weight schedule.
  EXPECT_THROW(build_subproblem(instance, flows, weights, ModelOptions{true, false}),
               std::invalid_argument);

  // Shape errors.
  FlowSchedule short_flows = flows;
  short_flows[0].pop_back();
  EXPECT_THROW(build_subproblem(instance, short_flows, weights), std::invalid_argument);
  FlowSchedule negative = flows;
  negative[2][0] = -1.0;
  EXPECT_THROW(build_subproblem(instance, negative, weights), std::invalid_argument);

  // Decision vectors must cover the layout.
  EXPECT_THROW(evaluate_equalities(instance, std::vector<double>(3, 0.0), flows, weights),
               std::invalid_argument);
}

TEST(SubproblemTest, ModelConstructionIsDeterministic) {
  const DispatchInstance& instance = six_bus();
  const FlowSchedule flows = tail_flows(instance);
  const WeightSchedule weights = fill_schedule(instance, flows);
  const SubproblemModel a = build_subproblem(instance, flows, weights);
  const SubproblemModel b = build_subproblem(instance, flows, weights);
  ASSERT_EQ(a.qp.equalities.size(), b.qp.equalities.size());
  for (std::size_t r = 0; r < a.qp.equalities.size(); ++r) {
    EXPECT_EQ(a.qp.equalities[r].rhs, b.qp.equalities[r].rhs);
    ASSERT_EQ(a.qp.equalities[r].terms.size(), b.qp.equalities[r].terms.size());
    for (std::size_t t = 0; t < a.qp.equalities[r].terms.size(); ++t) {
      EXPECT_EQ(a.qp.equalities[r].terms[t].first, b.qp.equalities[r].terms[t].first);
      EXPECT_EQ(a.qp.equalities[r].terms[t].second, b.qp.equalities[r].terms[t].second);
    }
  }
  EXPECT_EQ(describe(a.qp), describe(b.qp));
}

}  // namespace
}  // namespace hydrodispatch
