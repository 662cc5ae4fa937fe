#pragma once

#include <string>
#include <vector>

#include "hydrodispatch/pipeline.hpp"
#include "hydrodispatch/qp.hpp"
#include "hydrodispatch/types.hpp"

namespace hydrodispatch {

// Mass flows per pipeline per period, aligned with DhsModel::pipelines.
using FlowSchedule = std::vector<std::vector<double>>;
// Water-column weights per pipeline per period (empty in steady mode).
using WeightSchedule = std::vector<std::vector<WaterColumnWeights>>;

struct ModelOptions {
  // Steady mode swaps the water-column transport rows for the instantaneous
  // exponential-loss relation, pins every room at its comfort floor, and
  // replaces the building blocks with their presolved heat loads.
  bool steady = false;
  // Adds pump electric power as load at the heat plant's bus.
  bool pump_load = false;
};

// Column layout of the per-period decision block. All series are stored
// entity-major: the column of entity e at period tau is base(e) + tau.
class VariableLayout {
 public:
  VariableLayout(const DispatchInstance& instance, const ModelOptions& options);

  int periods() const { return periods_; }
  int count() const { return total_; }
  bool has_buildings() const { return !bld_room_base_.empty(); }

  int chp_p(int unit, int tau) const { return chp_p_base_[static_cast<std::size_t>(unit)] + tau; }
  int chp_q(int unit, int tau) const { return chp_q_base_[static_cast<std::size_t>(unit)] + tau; }
  int chp_zeta(int unit, int vertex, int tau) const {
    return chp_zeta_base_[static_cast<std::size_t>(unit)][static_cast<std::size_t>(vertex)] + tau;
  }
  int tu_p(int unit, int tau) const { return tu_p_base_[static_cast<std::size_t>(unit)] + tau; }
  int tu_ru(int unit, int tau) const { return tu_ru_base_[static_cast<std::size_t>(unit)] + tau; }
  int tu_rd(int unit, int tau) const { return tu_rd_base_[static_cast<std::size_t>(unit)] + tau; }
  int re_p(int plant, int tau) const { return re_base_[static_cast<std::size_t>(plant)] + tau; }
  int bld_wall(int building, int wall, int tau) const {
    return bld_wall_base_[static_cast<std::size_t>(building)][static_cast<std::size_t>(wall)] + tau;
  }
  int bld_room(int building, int tau) const {
    return bld_room_base_[static_cast<std::size_t>(building)] + tau;
  }
  // Per-room heating power, kW (kilowatts keep the column well scaled).
  int bld_heat(int building, int tau) const {
    return bld_heat_base_[static_cast<std::size_t>(building)] + tau;
  }
  int node_temp(int node, int tau) const {
    return node_t_base_[static_cast<std::size_t>(node)] + tau;
  }
  int node_pressure(int node, int tau) const {
    return node_h_base_[static_cast<std::size_t>(node)] + tau;
  }
  int pipe_inlet(int pipe, int tau) const {
    return pipe_ts_base_[static_cast<std::size_t>(pipe)] + tau;
  }
  int pipe_outlet(int pipe, int tau) const {
    return pipe_te_base_[static_cast<std::size_t>(pipe)] + tau;
  }
  // Lossless (pre-decay) outlet temperature; dynamic mode only.
  int pipe_lossless(int pipe, int tau) const {
    return pipe_tp_base_[static_cast<std::size_t>(pipe)] + tau;
  }
  // -1 for pipes without a pump.
  int pump_head(int pipe, int tau) const {
    const int base = pump_base_[static_cast<std::size_t>(pipe)];
    return base < 0 ? -1 : base + tau;
  }

 private:
  int periods_ = 0;
  int total_ = 0;
  std::vector<int> chp_p_base_, chp_q_base_;
  std::vector<std::vector<int>> chp_zeta_base_;
  std::vector<int> tu_p_base_, tu_ru_base_, tu_rd_base_;
  std::vector<int> re_base_;
  std::vector<std::vector<int>> bld_wall_base_;
  std::vector<int> bld_room_base_, bld_heat_base_;
  std::vector<int> node_t_base_, node_h_base_;
  std::vector<int> pipe_ts_base_, pipe_te_base_, pipe_tp_base_;
  std::vector<int> pump_base_;
};

enum class RowKind {
  ChpP,
  ChpQ,
  ChpConvex,
  PowerBalance,
  BuildingWall,
  BuildingAir,
  Pressure,
  OutletGate,
  Mixing,
  Lossless,
  LossDecay,
  SteadyOutlet,
};

// Identity of one equality row: which family it belongs to, the owning
// entity, and the period. `scale` is the constant divisor applied to the row
// for conditioning; multipliers refer to the scaled row.
struct RowMeta {
  RowKind kind = RowKind::Mixing;
  int entity = -1;     // unit / building / node / pipe index, family-dependent
  int secondary = -1;  // wall index for BuildingWall rows
  int tau = -1;
  double scale = 1.0;
};

// A dispatch subproblem (QP over the x-block with flows and weights fixed)
// or its slack-relaxed feasibility variant.
struct SubproblemModel {
  QpProblem qp;
  VariableLayout layout;
  std::vector<RowMeta> eq_meta;  // aligned with qp.equalities
  FlowSchedule flows;
  WeightSchedule weights;
  ModelOptions options;
  // Presolved per-room heat loads [building][tau] (steady mode only).
  std::vector<std::vector<double>> fixed_heat_w;
  // Feasibility variant: first slack column, and the equality rows relaxed.
  int slack_base = -1;
  std::vector<int> relaxed_rows;

  bool is_feasibility() const { return slack_base >= 0; }
};

// Assembles the dispatch QP for fixed flows/weights: generation costs over
// the horizon subject to unit, network, building, hydraulic, and thermal
// transport constraints. In dynamic mode `weights` must equal the fill
// mapping of `flows` (checked); in steady mode it must be empty.
SubproblemModel build_subproblem(const DispatchInstance& instance, const FlowSchedule& flows,
                                 const WeightSchedule& weights, const ModelOptions& options = {});

// Same constraint system with the node mixing rows relaxed by nonnegative
// slack pairs; the objective is the total slack (an LP).
SubproblemModel build_feasibility_problem(const DispatchInstance& instance,
                                          const FlowSchedule& flows,
                                          const WeightSchedule& weights,
                                          const ModelOptions& options = {});

// Residuals of the equality system rebuilt at (flows, weights), evaluated at
// a fixed decision vector: row.evaluate(x) - rhs, in row order. Slack columns
// of a feasibility solution must be stripped by the caller (pass the first
// layout.count() entries).
std::vector<double> evaluate_equalities(const DispatchInstance& instance,
                                        const std::vector<double>& x, const FlowSchedule& flows,
                                        const WeightSchedule& weights,
                                        const ModelOptions& options = {});

// Objective pieces recomputed from a decision vector, in dollars.
struct ObjectiveBreakdown {
  double total = 0.0;
  double chp = 0.0;
  double thermal = 0.0;
  double penalty = 0.0;
};

ObjectiveBreakdown objective_breakdown(const DispatchInstance& instance,
                                       const VariableLayout& layout,
                                       const std::vector<double>& x);

// Wind (renewable) power left on the table, summed over plants, per period.
std::vector<double> curtailment_profile(const DispatchInstance& instance,
                                        const VariableLayout& layout,
                                        const std::vector<double>& x);

// Total CHP heat output per period, MW.
std::vector<double> heat_output_profile(const DispatchInstance& instance,
                                        const VariableLayout& layout,
                                        const std::vector<double>& x);

// Total building heat load per period, MW (room count times per-room heating
// power; in steady mode pass the presolved loads through `fixed_heat_w`).
std::vector<double> heat_load_profile(const DispatchInstance& instance,
                                      const VariableLayout& layout, const std::vector<double>& x,
                                      const std::vector<std::vector<double>>& fixed_heat_w);

// Electric power drawn by the pipeline pumps per period, MW, computed from
// the pump heads in `x` and the fixed flows.
std::vector<double> pump_load_profile(const DispatchInstance& instance,
                                      const VariableLayout& layout, const std::vector<double>& x,
                                      const FlowSchedule& flows);

// Per-room heating power that pins every room at its comfort floor,
// [building][tau]; the presolve used by steady mode.
std::vector<std::vector<double>> presolve_heat_loads(const DispatchInstance& instance);

// Flow series for one pipe: recorded pre-horizon history plus the scheduled
// in-horizon flows appended.
PaddedSeries padded_flows(const DispatchInstance& instance, int pipe,
                          const std::vector<double>& flows);

}  // namespace hydrodispatch
