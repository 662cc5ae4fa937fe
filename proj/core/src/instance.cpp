#include "hydrodispatch/instance.hpp"

#include <cmath>
#include <cstddef>
#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace hydrodispatch {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw std::invalid_argument(where + ": " + what);
}

const json& member(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) fail(where, std::string("missing field '") + key + "'");
  return *it;
}

double get_number(const json& j, const char* key, const std::string& where) {
  const json& v = member(j, key, where);
  if (!v.is_number()) fail(where, std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

double get_number_or(const json& j, const char* key, double fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  return it->get<double>();
}

int get_int(const json& j, const char* key, const std::string& where) {
  const json& v = member(j, key, where);
  if (!v.is_number_integer()) fail(where, std::string("field '") + key + "' must be an integer");
  return v.get<int>();
}

int get_int_or(const json& j, const char* key, int fallback, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_integer()) fail(where, std::string("field '") + key + "' must be an integer");
  return it->get<int>();
}

std::string get_text(const json& j, const char* key, const std::string& where) {
  const json& v = member(j, key, where);
  if (!v.is_string()) fail(where, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

// Accepts a scalar (one-entry series, broadcast by the accessors) or an array.
std::vector<double> get_series(const json& j, const char* key, const std::string& where) {
  const json& v = member(j, key, where);
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) fail(where, std::string("field '") + key + "' must be a number or array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number()) fail(where, std::string("field '") + key + "' has a non-numeric entry");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<double> get_array_exact(const json& j, const char* key, std::size_t count,
                                    const std::string& where) {
  std::vector<double> out = get_series(j, key, where);
  if (out.size() != count)
    fail(where, std::string("field '") + key + "' must have " + std::to_string(count) +
                    " entries, got " + std::to_string(out.size()));
  return out;
}

NodeRole parse_role(const std::string& role, const std::string& where) {
  if (role == "source") return NodeRole::Source;
  if (role == "load") return NodeRole::Load;
  if (role == "junction") return NodeRole::Junction;
  fail(where, "field 'role' must be one of source/load/junction, got '" + role + "'");
}

std::string role_name(NodeRole role) {
  switch (role) {
    case NodeRole::Source: return "source";
    case NodeRole::Load: return "load";
    case NodeRole::Junction: return "junction";
  }
  return "junction";
}

int required_history_depth(const PipelineSpec& pipe, const Horizon& horizon,
                           const Constants& constants) {
  const double window = pipe.flow_min_kg_s * horizon.dt_seconds;
  if (window <= 0.0) return -1;
  return static_cast<int>(std::ceil(pipe.water_mass_kg(constants) / window));
}

ChpUnit parse_chp(const json& j) {
  ChpUnit unit;
  unit.id = get_text(j, "id", "units.chp");
  const std::string where = "chp unit " + unit.id;
  unit.bus = get_text(j, "bus", where);
  unit.dhs_node = get_text(j, "dhs_node", where);
  const json& vertices = member(j, "vertices", where);
  if (!vertices.is_array()) fail(where, "field 'vertices' must be an array of [p, q] pairs");
  for (const auto& v : vertices) {
    if (!v.is_array() || v.size() != 2) fail(where, "each vertex must be a [p, q] pair");
    unit.vertex_p_mw.push_back(v[0].get<double>());
    unit.vertex_q_mw.push_back(v[1].get<double>());
  }
  std::vector<double> cost = get_array_exact(j, "cost", 6, where);
  for (int i = 0; i < 6; ++i) unit.cost[i] = cost[static_cast<std::size_t>(i)];
  unit.ramp_p_down_mw_h = get_number(j, "ramp_p_down_mw_h", where);
  unit.ramp_p_up_mw_h = get_number(j, "ramp_p_up_mw_h", where);
  unit.ramp_q_down_mw_h = get_number(j, "ramp_q_down_mw_h", where);
  unit.ramp_q_up_mw_h = get_number(j, "ramp_q_up_mw_h", where);
  return unit;
}

ThermalUnit parse_thermal(const json& j) {
  ThermalUnit unit;
  unit.id = get_text(j, "id", "units.thermal");
  const std::string where = "thermal unit " + unit.id;
  unit.bus = get_text(j, "bus", where);
  unit.p_min_mw = get_number(j, "p_min_mw", where);
  unit.p_max_mw = get_number(j, "p_max_mw", where);
  std::vector<double> cost = get_array_exact(j, "cost", 3, where);
  for (int i = 0; i < 3; ++i) unit.cost[i] = cost[static_cast<std::size_t>(i)];
  unit.ramp_down_mw_h = get_number(j, "ramp_down_mw_h", where);
  unit.ramp_up_mw_h = get_number(j, "ramp_up_mw_h", where);
  return unit;
}

RenewablePlant parse_renewable(const json& j, int periods) {
  RenewablePlant plant;
  plant.id = get_text(j, "id", "units.renewable");
  const std::string where = "renewable plant " + plant.id;
  plant.bus = get_text(j, "bus", where);
  plant.available_mw = get_series(j, "available_mw", where);
  if (plant.available_mw.size() == 1)
    plant.available_mw.assign(static_cast<std::size_t>(periods), plant.available_mw.front());
  plant.penalty_per_mw2 = get_number(j, "penalty_per_mw2", where);
  return plant;
}

DhsNode parse_node(const json& j) {
  DhsNode node;
  node.id = get_text(j, "id", "dhs.nodes");
  const std::string where = "dhs node " + node.id;
  node.temp_min_c = get_number(j, "temp_min_c", where);
  node.temp_max_c = get_number(j, "temp_max_c", where);
  node.pressure_min_pa = get_number(j, "pressure_min_pa", where);
  node.pressure_max_pa = get_number(j, "pressure_max_pa", where);
  node.role = parse_role(get_text(j, "role", where), where);
  node.intake_temp_c = get_number_or(j, "intake_temp_c", 0.0);
  return node;
}

PipelineSpec parse_pipeline(const json& j, const Horizon& horizon, const Constants& constants,
                            FlowHistory* history) {
  PipelineSpec pipe;
  pipe.id = get_text(j, "id", "dhs.pipelines");
  const std::string where = "pipeline " + pipe.id;
  pipe.from_node = get_text(j, "from_node", where);
  pipe.to_node = get_text(j, "to_node", where);
  pipe.length_m = get_number(j, "length_m", where);
  pipe.area_m2 = get_number(j, "area_m2", where);
  pipe.heat_loss_w_per_m_k = get_number(j, "heat_loss_w_per_m_k", where);
  pipe.resistance_pa_s2_per_kg2 = get_number(j, "resistance_pa_s2_per_kg2", where);
  pipe.flow_min_kg_s = get_number(j, "flow_min_kg_s", where);
  pipe.flow_max_kg_s = get_number(j, "flow_max_kg_s", where);
  pipe.ambient_temp_c = get_series(j, "ambient_temp_c", where);
  if (auto it = j.find("pump"); it != j.end()) {
    PumpSpec pump;
    pump.head_min_pa = get_number(*it, "head_min_pa", where + " pump");
    pump.head_max_pa = get_number(*it, "head_max_pa", where + " pump");
    pump.efficiency = get_number(*it, "efficiency", where + " pump");
    pipe.pump = pump;
  }
  pipe.history_depth = get_int_or(j, "history_depth", 0, where);
  if (pipe.history_depth == 0) {
    const int computed = required_history_depth(pipe, horizon, constants);
    if (computed < 0)
      fail(where, "history_depth must be given explicitly when flow_min_kg_s is 0");
    pipe.history_depth = computed;
  }
  const std::size_t depth = static_cast<std::size_t>(std::max(pipe.history_depth, 0));
  std::vector<double> flows = get_array_exact(j, "mass_flow_history_kg_s", depth, where);
  std::vector<double> temps = get_array_exact(j, "inlet_temp_history_c", depth, where);
  if (auto it = j.find("mass_flow_kg_s"); it != j.end()) {
    std::vector<double> values = get_series(j, "mass_flow_kg_s", where);
    if (values.size() == 1) values.assign(static_cast<std::size_t>(horizon.periods), values.front());
    flows.insert(flows.end(), values.begin(), values.end());
  }
  if (auto it = j.find("inlet_temp_c"); it != j.end()) {
    std::vector<double> values = get_series(j, "inlet_temp_c", where);
    if (values.size() == 1) values.assign(static_cast<std::size_t>(horizon.periods), values.front());
    temps.insert(temps.end(), values.begin(), values.end());
  }
  history->mass_flow_kg_s = PaddedSeries(std::move(flows), pipe.history_depth);
  history->inlet_temp_c = PaddedSeries(std::move(temps), pipe.history_depth);
  return pipe;
}

BuildingSpec parse_building(const json& j, const Horizon& horizon) {
  BuildingSpec building;
  building.id = get_text(j, "id", "dhs.buildings");
  const std::string where = "building " + building.id;
  building.dhs_node = get_text(j, "dhs_node", where);
  building.room_count = get_int(j, "room_count", where);
  building.volume_m3 = get_number(j, "volume_m3", where);
  building.vent_flow_m3_s = get_series(j, "vent_flow_m3_s", where);
  const json& walls = member(j, "walls", where);
  if (!walls.is_array()) fail(where, "field 'walls' must be an array");
  for (const auto& w : walls) {
    WallSpec wall;
    wall.area_m2 = get_number(w, "area_m2", where + " wall");
    wall.conv_coeff_w_m2_k = get_number(w, "conv_coeff_w_m2_k", where + " wall");
    building.walls.push_back(wall);
  }
  if (auto it = j.find("radiation_w_k"); it != j.end()) {
    for (const auto& row : *it) {
      std::vector<double> r;
      for (const auto& e : row) r.push_back(e.get<double>());
      building.radiation_w_k.push_back(std::move(r));
    }
  }
  building.factor_y = get_series(j, "factor_y", where);
  building.factor_z = get_series(j, "factor_z", where);
  building.internal_gain_w =
      j.contains("internal_gain_w") ? get_series(j, "internal_gain_w", where) : std::vector<double>{};
  building.room_temp_min_c = get_number(j, "room_temp_min_c", where);
  building.room_temp_max_c = get_number(j, "room_temp_max_c", where);

  const int order = building.order();
  std::vector<double> outdoor = get_series(j, "outdoor_temp_c", where);
  if (outdoor.size() == 1)
    outdoor.assign(static_cast<std::size_t>(horizon.periods), outdoor.front());
  std::vector<double> outdoor_history =
      j.contains("outdoor_temp_history_c")
          ? get_array_exact(j, "outdoor_temp_history_c", static_cast<std::size_t>(order), where)
          : std::vector<double>(static_cast<std::size_t>(std::max(order, 0)),
                                outdoor.empty() ? 0.0 : outdoor.front());
  outdoor_history.insert(outdoor_history.end(), outdoor.begin(), outdoor.end());
  building.outdoor_temp_c = PaddedSeries(std::move(outdoor_history), order);

  if (auto it = j.find("wall_temp_history_c"); it != j.end()) {
    for (const auto& row : *it) {
      std::vector<double> r;
      for (const auto& e : row) r.push_back(e.get<double>());
      building.wall_temp_history_c.push_back(std::move(r));
    }
  }
  if (j.contains("room_temp_history_c"))
    building.room_temp_history_c = get_series(j, "room_temp_history_c", where);
  return building;
}

GridModel parse_grid(const json& j, int periods) {
  GridModel grid;
  const std::string where = "grid";
  const json& buses = member(j, "buses", where);
  if (!buses.is_array()) fail(where, "field 'buses' must be an array of names");
  for (const auto& b : buses) grid.buses.push_back(b.get<std::string>());
  const json& lines = member(j, "lines", where);
  for (const auto& l : lines) {
    GridLine line;
    line.id = get_text(l, "id", "grid.lines");
    line.capacity_mw = get_number(l, "capacity_mw", "line " + line.id);
    line.shift_factors = get_series(l, "shift_factors", "line " + line.id);
    grid.lines.push_back(std::move(line));
  }
  grid.demand_mw.assign(grid.buses.size(), std::vector<double>(static_cast<std::size_t>(periods), 0.0));
  const json& demand = member(j, "demand", where);
  if (!demand.is_object()) fail(where, "field 'demand' must map bus name to a series");
  for (auto it = demand.begin(); it != demand.end(); ++it) {
    std::vector<double> series = get_series(demand, it.key().c_str(), "grid.demand");
    if (series.size() == 1) series.assign(static_cast<std::size_t>(periods), series.front());
    int index = -1;
    for (std::size_t b = 0; b < grid.buses.size(); ++b)
      if (grid.buses[b] == it.key()) index = static_cast<int>(b);
    if (index < 0) fail("grid.demand", "unknown bus '" + it.key() + "'");
    grid.demand_mw[static_cast<std::size_t>(index)] = std::move(series);
  }
  const json& reserve = member(j, "reserve", where);
  grid.reserve_up_mw = get_number(reserve, "up_mw", "grid.reserve");
  grid.reserve_down_mw = get_number(reserve, "down_mw", "grid.reserve");
  return grid;
}

json series_json(const std::vector<double>& values) { return json(values); }

json grid_json(const GridModel& grid) {
  json j;
  j["buses"] = grid.buses;
  j["lines"] = json::array();
  for (const auto& line : grid.lines) {
    json l;
    l["id"] = line.id;
    l["capacity_mw"] = line.capacity_mw;
    l["shift_factors"] = series_json(line.shift_factors);
    j["lines"].push_back(std::move(l));
  }
  j["demand"] = json::object();
  for (std::size_t b = 0; b < grid.buses.size(); ++b)
    j["demand"][grid.buses[b]] = series_json(grid.demand_mw[b]);
  j["reserve"] = {{"up_mw", grid.reserve_up_mw}, {"down_mw", grid.reserve_down_mw}};
  return j;
}

json pipeline_json(const PipelineSpec& pipe, const FlowHistory& history) {
  json j;
  j["id"] = pipe.id;
  j["from_node"] = pipe.from_node;
  j["to_node"] = pipe.to_node;
  j["length_m"] = pipe.length_m;
  j["area_m2"] = pipe.area_m2;
  j["heat_loss_w_per_m_k"] = pipe.heat_loss_w_per_m_k;
  j["resistance_pa_s2_per_kg2"] = pipe.resistance_pa_s2_per_kg2;
  j["flow_min_kg_s"] = pipe.flow_min_kg_s;
  j["flow_max_kg_s"] = pipe.flow_max_kg_s;
  j["ambient_temp_c"] = series_json(pipe.ambient_temp_c);
  if (pipe.pump) {
    j["pump"] = {{"head_min_pa", pipe.pump->head_min_pa},
                 {"head_max_pa", pipe.pump->head_max_pa},
                 {"efficiency", pipe.pump->efficiency}};
  }
  j["history_depth"] = pipe.history_depth;
  const auto& flows = history.mass_flow_kg_s.raw();
  const auto& temps = history.inlet_temp_c.raw();
  const std::size_t lead = static_cast<std::size_t>(history.mass_flow_kg_s.lead());
  j["mass_flow_history_kg_s"] = std::vector<double>(flows.begin(), flows.begin() + lead);
  j["inlet_temp_history_c"] = std::vector<double>(temps.begin(), temps.begin() + lead);
  if (flows.size() > lead)
    j["mass_flow_kg_s"] = std::vector<double>(flows.begin() + lead, flows.end());
  if (temps.size() > lead)
    j["inlet_temp_c"] = std::vector<double>(temps.begin() + lead, temps.end());
  return j;
}

json building_json(const BuildingSpec& building) {
  json j;
  j["id"] = building.id;
  j["dhs_node"] = building.dhs_node;
  j["room_count"] = building.room_count;
  j["volume_m3"] = building.volume_m3;
  j["vent_flow_m3_s"] = series_json(building.vent_flow_m3_s);
  j["walls"] = json::array();
  for (const auto& wall : building.walls)
    j["walls"].push_back({{"area_m2", wall.area_m2}, {"conv_coeff_w_m2_k", wall.conv_coeff_w_m2_k}});
  if (!building.radiation_w_k.empty()) j["radiation_w_k"] = building.radiation_w_k;
  j["factor_y"] = series_json(building.factor_y);
  j["factor_z"] = series_json(building.factor_z);
  if (!building.internal_gain_w.empty())
    j["internal_gain_w"] = series_json(building.internal_gain_w);
  j["room_temp_min_c"] = building.room_temp_min_c;
  j["room_temp_max_c"] = building.room_temp_max_c;
  const auto& outdoor = building.outdoor_temp_c.raw();
  const std::size_t lead = static_cast<std::size_t>(building.outdoor_temp_c.lead());
  j["outdoor_temp_history_c"] = std::vector<double>(outdoor.begin(), outdoor.begin() + lead);
  j["outdoor_temp_c"] = std::vector<double>(outdoor.begin() + lead, outdoor.end());
  if (!building.wall_temp_history_c.empty()) j["wall_temp_history_c"] = building.wall_temp_history_c;
  if (!building.room_temp_history_c.empty())
    j["room_temp_history_c"] = series_json(building.room_temp_history_c);
  return j;
}

// Validation helpers.

void check_series_length(const std::vector<double>& series, int periods, const std::string& where,
                         const char* key) {
  if (series.size() != 1 && series.size() != static_cast<std::size_t>(periods))
    fail(where, std::string("field '") + key + "' must have 1 or " + std::to_string(periods) +
                    " entries, got " + std::to_string(series.size()));
}

void validate_grid(const DispatchInstance& instance) {
  const GridModel& grid = instance.grid;
  std::unordered_set<std::string> seen;
  for (const auto& bus : grid.buses)
    if (!seen.insert(bus).second) fail("grid", "duplicate bus '" + bus + "'");
  for (const auto& line : grid.lines) {
    if (line.capacity_mw < 0) fail("line " + line.id, "capacity_mw must be nonnegative");
    if (line.shift_factors.size() != grid.buses.size())
      fail("line " + line.id, "shift_factors must have one entry per bus");
  }
  if (grid.demand_mw.size() != grid.buses.size())
    fail("grid", "demand must have one row per bus");
  for (std::size_t b = 0; b < grid.demand_mw.size(); ++b)
    if (grid.demand_mw[b].size() != static_cast<std::size_t>(instance.horizon.periods))
      fail("grid.demand", "bus '" + grid.buses[b] + "' series length mismatch");
  if (grid.reserve_up_mw < 0 || grid.reserve_down_mw < 0)
    fail("grid.reserve", "reserve requirements must be nonnegative");
}

void validate_units(const DispatchInstance& instance) {
  auto check_bus = [&](const std::string& bus, const std::string& where) {
    for (const auto& b : instance.grid.buses)
      if (b == bus) return;
    fail(where, "unknown bus '" + bus + "'");
  };
  for (const auto& unit : instance.chp_units) {
    const std::string where = "chp unit " + unit.id;
    check_bus(unit.bus, where);
    instance.dhs.node_index(unit.dhs_node);
    validate_chp_polygon(unit);
    if (unit.ramp_p_down_mw_h < 0 || unit.ramp_p_up_mw_h < 0 || unit.ramp_q_down_mw_h < 0 ||
        unit.ramp_q_up_mw_h < 0)
      fail(where, "ramp limits must be nonnegative");
  }
  for (const auto& unit : instance.thermal_units) {
    const std::string where = "thermal unit " + unit.id;
    check_bus(unit.bus, where);
    if (unit.p_min_mw > unit.p_max_mw) fail(where, "p_min_mw exceeds p_max_mw");
    if (unit.cost[2] < 0) fail(where, "quadratic cost coefficient must be nonnegative");
    if (unit.ramp_down_mw_h < 0 || unit.ramp_up_mw_h < 0)
      fail(where, "ramp limits must be nonnegative");
  }
  for (const auto& plant : instance.renewables) {
    const std::string where = "renewable plant " + plant.id;
    check_bus(plant.bus, where);
    if (plant.available_mw.size() != static_cast<std::size_t>(instance.horizon.periods))
      fail(where, "available_mw must have one entry per period");
    for (double a : plant.available_mw)
      if (a < 0) fail(where, "available_mw entries must be nonnegative");
    if (plant.penalty_per_mw2 < 0) fail(where, "penalty_per_mw2 must be nonnegative");
  }
}

void validate_dhs(const DispatchInstance& instance) {
  const DhsModel& dhs = instance.dhs;
  const int periods = instance.horizon.periods;
  std::unordered_set<std::string> node_ids;
  for (const auto& node : dhs.nodes) {
    const std::string where = "dhs node " + node.id;
    if (!node_ids.insert(node.id).second) fail("dhs", "duplicate node '" + node.id + "'");
    if (node.temp_min_c > node.temp_max_c) fail(where, "temp_min_c exceeds temp_max_c");
    if (node.pressure_min_pa > node.pressure_max_pa)
      fail(where, "pressure_min_pa exceeds pressure_max_pa");
  }
  if (dhs.flow_histories.size() != dhs.pipelines.size())
    fail("dhs", "flow history list must align with pipelines");

  std::unordered_set<std::string> pipe_ids;
  for (std::size_t p = 0; p < dhs.pipelines.size(); ++p) {
    const PipelineSpec& pipe = dhs.pipelines[p];
    const std::string where = "pipeline " + pipe.id;
    if (!pipe_ids.insert(pipe.id).second) fail("dhs", "duplicate pipeline '" + pipe.id + "'");
    dhs.node_index(pipe.from_node);
    dhs.node_index(pipe.to_node);
    if (pipe.from_node == pipe.to_node) fail(where, "from_node equals to_node");
    if (pipe.length_m <= 0) fail(where, "length_m must be positive");
    if (pipe.area_m2 <= 0) fail(where, "area_m2 must be positive");
    if (pipe.heat_loss_w_per_m_k < 0) fail(where, "heat_loss_w_per_m_k must be nonnegative");
    if (pipe.resistance_pa_s2_per_kg2 < 0)
      fail(where, "resistance_pa_s2_per_kg2 must be nonnegative");
    if (pipe.flow_min_kg_s < 0 || pipe.flow_min_kg_s > pipe.flow_max_kg_s)
      fail(where, "flow bounds must satisfy 0 <= flow_min_kg_s <= flow_max_kg_s");
    check_series_length(pipe.ambient_temp_c, periods, where, "ambient_temp_c");
    if (pipe.pump) {
      if (pipe.pump->head_min_pa > pipe.pump->head_max_pa)
        fail(where, "pump head_min_pa exceeds head_max_pa");
      if (pipe.pump->efficiency <= 0 || pipe.pump->efficiency > 1)
        fail(where, "pump efficiency must lie in (0, 1]");
    }
    if (pipe.history_depth < 1) fail(where, "history_depth must be at least 1");
    const int needed = required_history_depth(pipe, instance.horizon, instance.constants);
    if (needed > 0 && pipe.history_depth < needed)
      fail(where, "history_depth " + std::to_string(pipe.history_depth) +
                      " is below the " + std::to_string(needed) +
                      " periods needed to hold the pipe's water at minimum flow");
    const FlowHistory& history = dhs.flow_histories[p];
    if (history.mass_flow_kg_s.lead() != pipe.history_depth ||
        history.inlet_temp_c.lead() != pipe.history_depth)
      fail(where, "history arrays must cover exactly history_depth pre-horizon periods");
    for (int tau = -pipe.history_depth; tau < history.mass_flow_kg_s.tail(); ++tau) {
      const double flow = history.mass_flow_kg_s.at(tau);
      if (flow < pipe.flow_min_kg_s - 1e-9 || flow > pipe.flow_max_kg_s + 1e-9)
        fail(where, "mass flow at period " + std::to_string(tau) + " violates the flow bounds");
    }
    if (history.inlet_temp_c.tail() != history.mass_flow_kg_s.tail())
      fail(where, "mass flow and inlet temperature series must have equal length");
  }

  // The flow graph must be connected (ignoring direction) and free of
  // directed cycles so that outlet temperatures can be propagated in a single
  // topological pass.
  if (!dhs.nodes.empty()) {
    std::unordered_map<std::string, std::vector<std::string>> undirected;
    std::unordered_map<std::string, std::vector<std::string>> forward;
    std::unordered_map<std::string, int> indegree;
    for (const auto& node : dhs.nodes) {
      undirected[node.id];
      forward[node.id];
      indegree[node.id] = 0;
    }
    for (const auto& pipe : dhs.pipelines) {
      undirected[pipe.from_node].push_back(pipe.to_node);
      undirected[pipe.to_node].push_back(pipe.from_node);
      forward[pipe.from_node].push_back(pipe.to_node);
      ++indegree[pipe.to_node];
    }
    std::queue<std::string> frontier;
    std::unordered_set<std::string> reached;
    frontier.push(dhs.nodes.front().id);
    reached.insert(dhs.nodes.front().id);
    while (!frontier.empty()) {
      const std::string current = frontier.front();
      frontier.pop();
      for (const auto& next : undirected[current])
        if (reached.insert(next).second) frontier.push(next);
    }
    if (reached.size() != dhs.nodes.size()) fail("dhs", "flow graph is not connected");

    std::queue<std::string> ready;
    for (const auto& [id, degree] : indegree)
      if (degree == 0) ready.push(id);
    std::size_t ordered = 0;
    while (!ready.empty()) {
      const std::string current = ready.front();
      ready.pop();
      ++ordered;
      for (const auto& next : forward[current])
        if (--indegree[next] == 0) ready.push(next);
    }
    if (ordered != dhs.nodes.size()) fail("dhs", "flow graph contains a directed cycle");
  }

  for (const auto& building : dhs.buildings) {
    const std::string where = "building " + building.id;
    dhs.node_index(building.dhs_node);
    if (building.room_count < 1) fail(where, "room_count must be at least 1");
    if (building.volume_m3 <= 0) fail(where, "volume_m3 must be positive");
    check_series_length(building.vent_flow_m3_s, periods, where, "vent_flow_m3_s");
    for (double v : building.vent_flow_m3_s)
      if (v < 0) fail(where, "vent_flow_m3_s entries must be nonnegative");
    if (building.walls.empty()) fail(where, "needs at least one wall");
    for (const auto& wall : building.walls) {
      if (wall.area_m2 <= 0) fail(where, "wall area_m2 must be positive");
      if (wall.conv_coeff_w_m2_k < 0) fail(where, "wall conv_coeff_w_m2_k must be nonnegative");
    }
    const std::size_t walls = building.walls.size();
    if (!building.radiation_w_k.empty()) {
      if (building.radiation_w_k.size() != walls)
        fail(where, "radiation_w_k must be a square wall-by-wall matrix");
      for (std::size_t i = 0; i < walls; ++i) {
        if (building.radiation_w_k[i].size() != walls)
          fail(where, "radiation_w_k must be a square wall-by-wall matrix");
        if (building.radiation_w_k[i][i] != 0.0)
          fail(where, "radiation_w_k diagonal must be zero");
        for (std::size_t k = 0; k < walls; ++k) {
          if (building.radiation_w_k[i][k] < 0)
            fail(where, "radiation_w_k entries must be nonnegative");
          if (building.radiation_w_k[i][k] != building.radiation_w_k[k][i])
            fail(where, "radiation_w_k must be symmetric");
        }
      }
    }
    if (building.factor_y.empty() || building.factor_y.size() != building.factor_z.size())
      fail(where, "factor_y and factor_z must be non-empty and equally long");
    if (building.room_temp_min_c > building.room_temp_max_c)
      fail(where, "room_temp_min_c exceeds room_temp_max_c");
    const int order = building.order();
    if (!building.outdoor_temp_c.covers(-order, periods - 1))
      fail(where, "outdoor_temp_c must cover the whole horizon plus " + std::to_string(order) +
                      " pre-horizon periods");
    if (!building.wall_temp_history_c.empty()) {
      if (building.wall_temp_history_c.size() != walls)
        fail(where, "wall_temp_history_c must have one row per wall");
      for (const auto& row : building.wall_temp_history_c)
        if (row.size() != static_cast<std::size_t>(order))
          fail(where, "wall_temp_history_c rows must have " + std::to_string(order) + " entries");
    }
    if (!building.room_temp_history_c.empty() &&
        building.room_temp_history_c.size() != static_cast<std::size_t>(order))
      fail(where, "room_temp_history_c must have " + std::to_string(order) + " entries");
    check_series_length(building.internal_gain_w.empty() ? std::vector<double>{0.0}
                                                         : building.internal_gain_w,
                        periods, where, "internal_gain_w");
  }
}

}  // namespace

DispatchInstance parse_instance_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("instance parse error: ") + e.what());
  }

  DispatchInstance instance;
  const json& horizon = member(j, "horizon", "instance");
  instance.horizon.periods = get_int(horizon, "periods", "horizon");
  instance.horizon.dt_seconds = get_number(horizon, "dt_seconds", "horizon");
  if (instance.horizon.periods < 1) fail("horizon", "periods must be at least 1");
  if (!(instance.horizon.dt_seconds > 0)) fail("horizon", "dt_seconds must be positive");

  if (auto it = j.find("constants"); it != j.end()) {
    instance.constants.water_density =
        get_number_or(*it, "water_density", instance.constants.water_density);
    instance.constants.water_specific_heat =
        get_number_or(*it, "water_specific_heat", instance.constants.water_specific_heat);
    instance.constants.air_density = get_number_or(*it, "air_density", instance.constants.air_density);
    instance.constants.air_specific_heat =
        get_number_or(*it, "air_specific_heat", instance.constants.air_specific_heat);
  }
  if (instance.constants.water_density <= 0 || instance.constants.water_specific_heat <= 0 ||
      instance.constants.air_density <= 0 || instance.constants.air_specific_heat <= 0)
    fail("constants", "physical constants must be positive");

  instance.grid = parse_grid(member(j, "grid", "instance"), instance.horizon.periods);

  const json& units = member(j, "units", "instance");
  if (auto it = units.find("chp"); it != units.end())
    for (const auto& u : *it) instance.chp_units.push_back(parse_chp(u));
  if (auto it = units.find("thermal"); it != units.end())
    for (const auto& u : *it) instance.thermal_units.push_back(parse_thermal(u));
  if (auto it = units.find("renewable"); it != units.end())
    for (const auto& u : *it)
      instance.renewables.push_back(parse_renewable(u, instance.horizon.periods));

  const json& dhs = member(j, "dhs", "instance");
  const json& nodes = member(dhs, "nodes", "dhs");
  for (const auto& n : nodes) instance.dhs.nodes.push_back(parse_node(n));
  const json& pipelines = member(dhs, "pipelines", "dhs");
  for (const auto& p : pipelines) {
    FlowHistory history;
    instance.dhs.pipelines.push_back(
        parse_pipeline(p, instance.horizon, instance.constants, &history));
    instance.dhs.flow_histories.push_back(std::move(history));
  }
  if (auto it = dhs.find("buildings"); it != dhs.end())
    for (const auto& b : *it)
      instance.dhs.buildings.push_back(parse_building(b, instance.horizon));

  validate_instance(instance);
  return instance;
}

DispatchInstance load_instance(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open instance file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_instance_text(buffer.str());
}

std::string serialize_instance(const DispatchInstance& instance) {
  json j;
  j["horizon"] = {{"periods", instance.horizon.periods},
                  {"dt_seconds", instance.horizon.dt_seconds}};
  j["constants"] = {{"water_density", instance.constants.water_density},
                    {"water_specific_heat", instance.constants.water_specific_heat},
                    {"air_density", instance.constants.air_density},
                    {"air_specific_heat", instance.constants.air_specific_heat}};
  j["grid"] = grid_json(instance.grid);
  json units;
  units["chp"] = json::array();
  for (const auto& unit : instance.chp_units) {
    json u;
    u["id"] = unit.id;
    u["bus"] = unit.bus;
    u["dhs_node"] = unit.dhs_node;
    u["vertices"] = json::array();
    for (std::size_t k = 0; k < unit.vertex_p_mw.size(); ++k)
      u["vertices"].push_back({unit.vertex_p_mw[k], unit.vertex_q_mw[k]});
    u["cost"] = std::vector<double>(unit.cost, unit.cost + 6);
    u["ramp_p_down_mw_h"] = unit.ramp_p_down_mw_h;
    u["ramp_p_up_mw_h"] = unit.ramp_p_up_mw_h;
    u["ramp_q_down_mw_h"] = unit.ramp_q_down_mw_h;
    u["ramp_q_up_mw_h"] = unit.ramp_q_up_mw_h;
    units["chp"].push_back(std::move(u));
  }
  units["thermal"] = json::array();
  for (const auto& unit : instance.thermal_units) {
    json u;
    u["id"] = unit.id;
    u["bus"] = unit.bus;
    u["p_min_mw"] = unit.p_min_mw;
    u["p_max_mw"] = unit.p_max_mw;
    u["cost"] = std::vector<double>(unit.cost, unit.cost + 3);
    u["ramp_down_mw_h"] = unit.ramp_down_mw_h;
    u["ramp_up_mw_h"] = unit.ramp_up_mw_h;
    units["thermal"].push_back(std::move(u));
  }
  units["renewable"] = json::array();
  for (const auto& plant : instance.renewables) {
    json u;
    u["id"] = plant.id;
    u["bus"] = plant.bus;
    u["available_mw"] = series_json(plant.available_mw);
    u["penalty_per_mw2"] = plant.penalty_per_mw2;
    units["renewable"].push_back(std::move(u));
  }
  j["units"] = std::move(units);

  json dhs;
  dhs["nodes"] = json::array();
  for (const auto& node : instance.dhs.nodes) {
    json n;
    n["id"] = node.id;
    n["temp_min_c"] = node.temp_min_c;
    n["temp_max_c"] = node.temp_max_c;
    n["pressure_min_pa"] = node.pressure_min_pa;
    n["pressure_max_pa"] = node.pressure_max_pa;
    n["role"] = role_name(node.role);
    if (node.intake_temp_c != 0.0) n["intake_temp_c"] = node.intake_temp_c;
    dhs["nodes"].push_back(std::move(n));
  }
  dhs["pipelines"] = json::array();
  for (std::size_t p = 0; p < instance.dhs.pipelines.size(); ++p)
    dhs["pipelines"].push_back(
        pipeline_json(instance.dhs.pipelines[p], instance.dhs.flow_histories[p]));
  dhs["buildings"] = json::array();
  for (const auto& building : instance.dhs.buildings)
    dhs["buildings"].push_back(building_json(building));
  j["dhs"] = std::move(dhs);

  return j.dump(2) + "\n";
}

void validate_instance(const DispatchInstance& instance) {
  if (instance.horizon.periods < 1) fail("horizon", "periods must be at least 1");
  if (!(instance.horizon.dt_seconds > 0)) fail("horizon", "dt_seconds must be positive");
  validate_grid(instance);
  validate_dhs(instance);
  validate_units(instance);
}

void validate_chp_polygon(const ChpUnit& unit) {
  const std::string where = "chp unit " + unit.id;
  const std::size_t n = unit.vertex_p_mw.size();
  if (n != unit.vertex_q_mw.size()) fail(where, "vertex coordinate lists differ in length");
  if (n < 3) fail(where, "operating region needs at least 3 vertices");
  double scale = 1e-30;
  for (std::size_t i = 0; i < n; ++i)
    scale = std::max({scale, std::abs(unit.vertex_p_mw[i]), std::abs(unit.vertex_q_mw[i])});
  const double tol = 1e-9 * scale * scale;
  double orientation = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i, b = (i + 1) % n, c = (i + 2) % n;
    const double ux = unit.vertex_p_mw[b] - unit.vertex_p_mw[a];
    const double uy = unit.vertex_q_mw[b] - unit.vertex_q_mw[a];
    const double vx = unit.vertex_p_mw[c] - unit.vertex_p_mw[b];
    const double vy = unit.vertex_q_mw[c] - unit.vertex_q_mw[b];
    const double cross = ux * vy - uy * vx;
    if (std::abs(cross) <= tol)
      fail(where, "vertices contain a collinear or repeated triple");
    if (orientation == 0.0)
      orientation = cross;
    else if (cross * orientation < 0)
      fail(where, "vertex polygon is not convex");
  }
  if (unit.cost[3] < 0 || unit.cost[4] < 0)
    fail(where, "quadratic cost curvature must be nonnegative");
  if (4.0 * unit.cost[3] * unit.cost[4] < unit.cost[5] * unit.cost[5])
    fail(where, "cost cross-term breaks joint convexity");
}

}  // namespace hydrodispatch
