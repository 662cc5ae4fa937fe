#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydrodispatch {

// Period-indexed series with `lead` pre-horizon entries. Valid indices are
// tau = -lead .. size()-lead-1. Access is bounds-checked so a missing history
// entry surfaces as an error instead of a silent out-of-range read.
class PaddedSeries {
 public:
  PaddedSeries() = default;
  PaddedSeries(std::vector<double> values, int lead) : values_(std::move(values)), lead_(lead) {
    if (lead_ < 0 || static_cast<std::size_t>(lead_) > values_.size())
      throw std::invalid_argument("PaddedSeries: lead outside value range");
  }

  static PaddedSeries constant(double value, int lead, int tail) {
    return PaddedSeries(std::vector<double>(static_cast<std::size_t>(lead + tail), value), lead);
  }

  double at(int tau) const {
    const long idx = static_cast<long>(tau) + lead_;
    if (idx < 0 || idx >= static_cast<long>(values_.size()))
      throw std::out_of_range("PaddedSeries: index " + std::to_string(tau) + " outside [-" +
                              std::to_string(lead_) + ", " + std::to_string(tail()) + ")");
    return values_[static_cast<std::size_t>(idx)];
  }

  void set(int tau, double value) {
    const long idx = static_cast<long>(tau) + lead_;
    if (idx < 0 || idx >= static_cast<long>(values_.size()))
      throw std::out_of_range("PaddedSeries::set: index outside range");
    values_[static_cast<std::size_t>(idx)] = value;
  }

  // Appends one in-horizon entry (used when a simulation extends a series).
  void push_back(double value) { values_.push_back(value); }

  int lead() const { return lead_; }
  // Number of in-horizon entries (tau >= 0).
  int tail() const { return static_cast<int>(values_.size()) - lead_; }
  bool covers(int tau_lo, int tau_hi) const {  // inclusive range
    return tau_lo >= -lead_ && tau_hi < tail();
  }
  bool empty() const { return values_.empty(); }
  const std::vector<double>& raw() const { return values_; }

 private:
  std::vector<double> values_;
  int lead_ = 0;
};

struct Horizon {
  int periods = 0;
  double dt_seconds = 0.0;
  double dt_hours() const { return dt_seconds / 3600.0; }
};

struct Constants {
  double water_density = 1.0e3;          // kg/m^3
  double water_specific_heat = 4.2e3;    // J/(kg K)
  double air_density = 1.2;              // kg/m^3
  double air_specific_heat = 1005.0;     // J/(kg K)
};

struct PumpSpec {
  double head_min_pa = 0.0;
  double head_max_pa = 0.0;
  double efficiency = 1.0;
};

struct PipelineSpec {
  std::string id;
  std::string from_node;
  std::string to_node;
  double length_m = 0.0;                 // L
  double area_m2 = 0.0;                  // A
  double heat_loss_w_per_m_k = 0.0;      // lambda
  double resistance_pa_s2_per_kg2 = 0.0; // k, pressure drop = k * m^2
  double flow_min_kg_s = 0.0;
  double flow_max_kg_s = 0.0;
  std::vector<double> ambient_temp_c;    // one entry per period, or a single broadcast value
  std::optional<PumpSpec> pump;
  int history_depth = 0;                 // N_b

  double water_mass_kg(const Constants& k) const { return k.water_density * area_m2 * length_m; }
  double ambient_at(int tau) const {
    if (ambient_temp_c.empty()) throw std::invalid_argument("pipeline " + id + ": empty ambient series");
    if (ambient_temp_c.size() == 1) return ambient_temp_c.front();
    if (tau < 0 || static_cast<std::size_t>(tau) >= ambient_temp_c.size())
      throw std::out_of_range("pipeline " + id + ": ambient index " + std::to_string(tau));
    return ambient_temp_c[static_cast<std::size_t>(tau)];
  }
};

// Rolling mass-flow / inlet-temperature record for one pipeline. The lead
// covers N_b pre-horizon periods; the tail holds in-horizon values when known
// (simulation input or dispatch decisions written back).
struct FlowHistory {
  PaddedSeries mass_flow_kg_s;
  PaddedSeries inlet_temp_c;
};

struct ChpUnit {
  std::string id;
  std::string bus;
  std::string dhs_node;
  std::vector<double> vertex_p_mw;   // polygon corners, same length as vertex_q_mw
  std::vector<double> vertex_q_mw;
  double cost[6] = {0, 0, 0, 0, 0, 0};  // a0 + a1 p + a2 q + a3 p^2 + a4 q^2 + a5 p q, $/h
  double ramp_p_down_mw_h = 0.0;     // lower/upper electric ramp magnitudes
  double ramp_p_up_mw_h = 0.0;
  double ramp_q_down_mw_h = 0.0;
  double ramp_q_up_mw_h = 0.0;
};

struct ThermalUnit {
  std::string id;
  std::string bus;
  double p_min_mw = 0.0;
  double p_max_mw = 0.0;
  double cost[3] = {0, 0, 0};        // d0 + d1 p + d2 p^2, $/h
  double ramp_down_mw_h = 0.0;
  double ramp_up_mw_h = 0.0;
};

struct RenewablePlant {
  std::string id;
  std::string bus;
  std::vector<double> available_mw;  // per period forecast upper bound
  double penalty_per_mw2 = 0.0;      // quadratic curtailment penalty weight
};

struct GridLine {
  std::string id;
  double capacity_mw = 0.0;
  std::vector<double> shift_factors;  // aligned with GridModel::buses
};

struct GridModel {
  std::vector<std::string> buses;
  std::vector<GridLine> lines;
  // demand[b][tau]: MW at bus b (aligned with `buses`) in period tau.
  std::vector<std::vector<double>> demand_mw;
  double reserve_up_mw = 0.0;
  double reserve_down_mw = 0.0;

  int bus_index(const std::string& bus) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
      if (buses[i] == bus) return static_cast<int>(i);
    throw std::invalid_argument("unknown bus: " + bus);
  }
};

enum class NodeRole { Source, Load, Junction };

struct DhsNode {
  std::string id;
  double temp_min_c = 0.0;
  double temp_max_c = 0.0;
  double pressure_min_pa = 0.0;
  double pressure_max_pa = 0.0;
  NodeRole role = NodeRole::Junction;
  // Temperature of boundary make-up water entering at a root node (a node
  // with outgoing pipes only). Zero keeps the plain mixing balance.
  double intake_temp_c = 0.0;
};

struct WallSpec {
  double area_m2 = 0.0;
  double conv_coeff_w_m2_k = 0.0;  // H
};

struct BuildingSpec {
  std::string id;
  std::string dhs_node;
  int room_count = 1;
  double volume_m3 = 0.0;                  // V, per room
  std::vector<double> vent_flow_m3_s;      // G_a per period (single value broadcasts)
  std::vector<WallSpec> walls;
  // radiation[i][k]: wall-to-wall radiative coupling, W/K per square meter
  // of wall i (reciprocity: radiation[i][k] * area_i == radiation[k][i] * area_k).
  std::vector<std::vector<double>> radiation_w_k;
  // Response factors are per unit wall area; the per-area surface balance
  // pairs them with conv_coeff_w_m2_k directly.
  std::vector<double> factor_y;            // Y_j, j = 0..N_s, W/(m^2 K)
  std::vector<double> factor_z;            // Z_j, j = 0..N_s, W/(m^2 K)
  std::vector<double> internal_gain_w;     // per period per room (single value broadcasts)
  double room_temp_min_c = 0.0;
  double room_temp_max_c = 0.0;
  PaddedSeries outdoor_temp_c;             // lead N_s pre-horizon entries
  // Histories; empty means "isothermal start at room_temp_min_c".
  std::vector<std::vector<double>> wall_temp_history_c;  // [wall][j], j = oldest..newest, N_s entries
  std::vector<double> room_temp_history_c;               // N_s entries, oldest..newest

  int order() const { return static_cast<int>(factor_y.size()) - 1; }  // N_s
  int wall_count() const { return static_cast<int>(walls.size()); }
  double vent_at(int tau) const {
    if (vent_flow_m3_s.empty()) throw std::invalid_argument("building " + id + ": empty ventilation series");
    return vent_flow_m3_s.size() == 1 ? vent_flow_m3_s.front()
                                      : vent_flow_m3_s.at(static_cast<std::size_t>(tau));
  }
  double gain_at(int tau) const {
    if (internal_gain_w.empty()) return 0.0;
    return internal_gain_w.size() == 1 ? internal_gain_w.front()
                                       : internal_gain_w.at(static_cast<std::size_t>(tau));
  }
};

struct DhsModel {
  std::vector<DhsNode> nodes;
  std::vector<PipelineSpec> pipelines;
  std::vector<FlowHistory> flow_histories;  // aligned with pipelines
  std::vector<BuildingSpec> buildings;

  int node_index(const std::string& id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].id == id) return static_cast<int>(i);
    throw std::invalid_argument("unknown DHS node: " + id);
  }
  int pipeline_index(const std::string& id) const {
    for (std::size_t i = 0; i < pipelines.size(); ++i)
      if (pipelines[i].id == id) return static_cast<int>(i);
    throw std::invalid_argument("unknown pipeline: " + id);
  }
};

struct DispatchInstance {
  Horizon horizon;
  Constants constants;
  GridModel grid;
  std::vector<ChpUnit> chp_units;
  std::vector<ThermalUnit> thermal_units;
  std::vector<RenewablePlant> renewables;
  DhsModel dhs;
};

}  // namespace hydrodispatch
