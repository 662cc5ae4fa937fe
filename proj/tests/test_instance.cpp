#include "hydrodispatch/instance.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "test_util.hpp"

namespace hydrodispatch {
namespace {

std::string data_path(const std::string& name) {
  return std::string(HYDRODISPATCH_DATA_DIR) + "/" + name;
}

// A small valid instance used as the mutation baseline: one bus, one thermal
// unit, a two-node DHS with one pipeline, and one single-wall building.
DispatchInstance small_instance() {
  DispatchInstance instance;
  instance.horizon = {4, 1800.0};
  instance.grid.buses = {"b1"};
  instance.grid.demand_mw = {{5.0, 6.0, 7.0, 6.0}};
  instance.grid.reserve_up_mw = 1.0;
  instance.grid.reserve_down_mw = 1.0;
  GridLine line;
  line.id = "l1";
  line.capacity_mw = 50.0;
  line.shift_factors = {0.5};
  instance.grid.lines.push_back(line);

  ThermalUnit unit;
  unit.id = "G1";
  unit.bus = "b1";
  unit.p_min_mw = 1.0;
  unit.p_max_mw = 20.0;
  unit.cost[0] = 10.0;
  unit.cost[1] = 20.0;
  unit.cost[2] = 0.05;
  unit.ramp_down_mw_h = 10.0;
  unit.ramp_up_mw_h = 10.0;
  instance.thermal_units.push_back(unit);

  DhsNode source;
  source.id = "n1";
  source.temp_min_c = 50.0;
  source.temp_max_c = 120.0;
  source.pressure_min_pa = 1e5;
  source.pressure_max_pa = 9e5;
  source.role = NodeRole::Source;
  DhsNode sink = source;
  sink.id = "n2";
  sink.role = NodeRole::Load;
  instance.dhs.nodes = {source, sink};

  PipelineSpec pipe;
  pipe.id = "P1";
  pipe.from_node = "n1";
  pipe.to_node = "n2";
  pipe.length_m = 100.0;
  pipe.area_m2 = 0.1;
  pipe.heat_loss_w_per_m_k = 0.3;
  pipe.resistance_pa_s2_per_kg2 = 25.0;
  pipe.flow_min_kg_s = 4.0;
  pipe.flow_max_kg_s = 30.0;
  pipe.ambient_temp_c = {10.0};
  pipe.history_depth = 2;  // ceil(10000 / (4 * 1800)) = 2
  instance.dhs.pipelines.push_back(pipe);

  FlowHistory history;
  history.mass_flow_kg_s = PaddedSeries({6.0, 6.0}, 2);
  history.inlet_temp_c = PaddedSeries({90.0, 90.0}, 2);
  instance.dhs.flow_histories.push_back(history);

  BuildingSpec building;
  building.id = "B1";
  building.dhs_node = "n2";
  building.room_count = 10;
  building.volume_m3 = 200.0;
  building.vent_flow_m3_s = {0.05};
  building.walls = {{60.0, 7.0}};
  building.factor_y = {10.0, 20.0, 10.0};
  building.factor_z = {35.0, 3.0, 2.0};
  building.room_temp_min_c = 19.0;
  building.room_temp_max_c = 24.0;
  building.outdoor_temp_c = PaddedSeries::constant(-2.0, 2, 4);
  instance.dhs.buildings.push_back(building);
  return instance;
}

TEST(LoadInstance, ReadsBundledPipeExample) {
  DispatchInstance instance = load_instance(data_path("pipe-example.json"));
  EXPECT_EQ(instance.horizon.periods, 13);
  EXPECT_DOUBLE_EQ(instance.horizon.dt_seconds, 3600.0);
  ASSERT_EQ(instance.dhs.pipelines.size(), 1u);
  const PipelineSpec& pipe = instance.dhs.pipelines[0];
  EXPECT_DOUBLE_EQ(pipe.length_m, 1750.0);
  EXPECT_DOUBLE_EQ(pipe.area_m2, 0.5);
  EXPECT_DOUBLE_EQ(pipe.heat_loss_w_per_m_k, 0.12);
  // Omitted history_depth is derived from the minimum-flow fill time:
  // ceil(1000 * 0.5 * 1750 / (100 * 3600)) = 3.
  EXPECT_EQ(pipe.history_depth, 3);
  const FlowHistory& history = instance.dhs.flow_histories[0];
  EXPECT_TRUE(history.mass_flow_kg_s.covers(-3, 12));
  EXPECT_DOUBLE_EQ(history.mass_flow_kg_s.at(-1), 116.10);
  EXPECT_DOUBLE_EQ(history.mass_flow_kg_s.at(12), 120.21);
  EXPECT_DOUBLE_EQ(history.inlet_temp_c.at(12), 110.0);
  EXPECT_DOUBLE_EQ(history.inlet_temp_c.at(5), 80.0);
}

TEST(LoadInstance, ReadsBundledSixBus) {
  DispatchInstance instance = load_instance(data_path("six-bus.json"));
  EXPECT_EQ(instance.grid.buses.size(), 6u);
  EXPECT_EQ(instance.thermal_units.size(), 2u);
  EXPECT_EQ(instance.renewables.size(), 1u);
  EXPECT_EQ(instance.chp_units.size(), 1u);
  EXPECT_EQ(instance.dhs.buildings.size(), 3u);
  EXPECT_EQ(instance.dhs.nodes.size(), 7u);
  EXPECT_EQ(instance.dhs.pipelines.size(), 8u);
  EXPECT_EQ(instance.horizon.periods, 24);
  // The CHP feeds the DHS source node, which takes make-up water at 45 C.
  const DhsNode& source = instance.dhs.nodes[instance.dhs.node_index("Nd1")];
  EXPECT_EQ(source.role, NodeRole::Source);
  EXPECT_DOUBLE_EQ(source.intake_temp_c, 45.0);
}

TEST(LoadInstance, MissingFileReportsPath) {
  try {
    load_instance("/no/such/file.json");
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/no/such/file.json"), std::string::npos);
  }
}

TEST(LoadInstance, DegenerateTimeStepRejected) {
  std::string text = serialize_instance(small_instance());
  const std::string needle = "\"dt_seconds\": 1800.0";
  auto pos = text.find(needle);
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, needle.size(), "\"dt_seconds\": 0.0");
  EXPECT_THROW(parse_instance_text(text), std::invalid_argument);
}

TEST(LoadInstance, RoundTripIsStable) {
  for (const char* name : {"pipe-example.json", "six-bus.json"}) {
    DispatchInstance first = load_instance(data_path(name));
    const std::string text = serialize_instance(first);
    DispatchInstance second = parse_instance_text(text);
    EXPECT_EQ(serialize_instance(second), text) << name;
  }
}

TEST(ChpPolygon, AcceptsConvexSquare) {
  ChpUnit unit;
  unit.id = "u";
  unit.vertex_p_mw = {0.0, 10.0, 10.0, 0.0};
  unit.vertex_q_mw = {0.0, 0.0, 10.0, 10.0};
  unit.cost[3] = 1.0;
  unit.cost[4] = 1.0;
  unit.cost[5] = 0.0;
  EXPECT_NO_THROW(validate_chp_polygon(unit));
}

TEST(ChpPolygon, RejectsIndefiniteCost) {
  ChpUnit unit;
  unit.id = "u";
  unit.vertex_p_mw = {0.0, 10.0, 10.0, 0.0};
  unit.vertex_q_mw = {0.0, 0.0, 10.0, 10.0};
  unit.cost[3] = 1.0;
  unit.cost[4] = 1.0;
  unit.cost[5] = 3.0;  // 4*1*1 < 3^2
  EXPECT_THROW(validate_chp_polygon(unit), std::invalid_argument);
}

TEST(ChpPolygon, RejectsCollinearVertices) {
  ChpUnit unit;
  unit.id = "u";
  unit.vertex_p_mw = {0.0, 5.0, 10.0, 10.0, 0.0};
  unit.vertex_q_mw = {0.0, 0.0, 0.0, 10.0, 10.0};
  unit.cost[3] = 1.0;
  unit.cost[4] = 1.0;
  EXPECT_THROW(validate_chp_polygon(unit), std::invalid_argument);
}

TEST(ChpPolygon, RejectsNonConvexChain) {
  ChpUnit unit;
  unit.id = "u";
  unit.vertex_p_mw = {0.0, 10.0, 4.0, 10.0, 0.0};
  unit.vertex_q_mw = {0.0, 0.0, 5.0, 10.0, 10.0};
  unit.cost[3] = 1.0;
  unit.cost[4] = 1.0;
  EXPECT_THROW(validate_chp_polygon(unit), std::invalid_argument);
}

TEST(ValidateInstance, AcceptsBaseline) {
  EXPECT_NO_THROW(validate_instance(small_instance()));
}

TEST(ValidateInstance, NamesOffendingPipelineField) {
  DispatchInstance instance = small_instance();
  instance.dhs.pipelines[0].area_m2 = -1.0;
  try {
    validate_instance(instance);
    FAIL() << "expected an exception";
  } catch (const std::invalid_argument& e) {
    const std::string message = e.what();
    EXPECT_NE(message.find("P1"), std::string::npos) << message;
    EXPECT_NE(message.find("area_m2"), std::string::npos) << message;
  }
}

TEST(ValidateInstance, RejectsUnknownBus) {
  DispatchInstance instance = small_instance();
  instance.thermal_units[0].bus = "b9";
  EXPECT_THROW(validate_instance(instance), std::invalid_argument);
}

TEST(ValidateInstance, RejectsShiftFactorLengthMismatch) {
  DispatchInstance instance = small_instance();
  instance.grid.lines[0].shift_factors = {0.5, 0.25};
  EXPECT_THROW(validate_instance(instance), std::invalid_argument);
}

TEST(ValidateInstance, RejectsShortHistory) {
  DispatchInstance instance = small_instance();
  // Raising the declared depth makes the stored two-entry history too short.
  instance.dhs.pipelines[0].history_depth = 3;
  EXPECT_THROW(validate_instance(instance), std::invalid_argument);
}

TEST(ValidateInstance, RejectsHistoryDepthBelowFillTime) {
  DispatchInstance instance = small_instance();
  // Water mass 10000 kg, minimum flow 1 kg/s, dt 1800 s -> needs 6 periods.
  instance.dhs.pipelines[0].flow_min_kg_s = 1.0;
  instance.dhs.flow_histories[0].mass_flow_kg_s = PaddedSeries({6.0, 6.0}, 2);
  EXPECT_THROW(validate_instance(instance), std::invalid_argument);
}

TEST(ValidateInstance, RejectsHistoryFlowOutsideBounds) {
  DispatchInstance instance = small_instance();
  instance.dhs.flow_histories[0].mass_flow_kg_s.set(-1, 100.0);
  EXPECT_THROW(validate_instance(instance), std::invalid_argument);
}

TEST(ValidateInstance, RejectsDirectedCycle) {
  DispatchInstance instance = small_instance();
  PipelineSpec back = instance.dhs.pipelines[0];
  back.id = "P2";
  back.from_node = "n2";
  back.to_node = "n1";
  instance.dhs.pipelines.push_back(back);
  instance.dhs.flow_histories.push_back(instance.dhs.flow_histories[0]);
  try {
    validate_instance(instance);
    FAIL() << "expected an exception";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("cycle"), std::string::npos);
  }
}

TEST(ValidateInstance, RejectsDisconnectedNode) {
  DispatchInstance instance = small_instance();
  DhsNode orphan = instance.dhs.nodes[0];
  orphan.id = "n3";
  instance.dhs.nodes.push_back(orphan);
  try {
    validate_instance(instance);
    FAIL() << "expected an exception";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("connected"), std::string::npos);
  }
}

TEST(ValidateInstance, RandomizedMutationsAreCaught) {
  hdtest::Rng rng(20240817);
  using Mutator = void (*)(DispatchInstance&);
  const Mutator mutators[] = {
      [](DispatchInstance& i) { i.horizon.periods = 0; },
      [](DispatchInstance& i) { i.horizon.dt_seconds = 0.0; },
      [](DispatchInstance& i) { i.dhs.pipelines[0].length_m = -5.0; },
      [](DispatchInstance& i) { i.dhs.pipelines[0].flow_min_kg_s = 90.0; },
      [](DispatchInstance& i) { i.dhs.pipelines[0].to_node = i.dhs.pipelines[0].from_node; },
      [](DispatchInstance& i) { i.dhs.nodes[0].temp_min_c = 500.0; },
      [](DispatchInstance& i) { i.dhs.buildings[0].room_count = 0; },
      [](DispatchInstance& i) { i.dhs.buildings[0].factor_z.pop_back(); },
      [](DispatchInstance& i) { i.dhs.buildings[0].room_temp_min_c = 30.0; },
      [](DispatchInstance& i) { i.thermal_units[0].p_min_mw = 25.0; },
      [](DispatchInstance& i) { i.thermal_units[0].cost[2] = -1.0; },
      [](DispatchInstance& i) { i.grid.reserve_up_mw = -1.0; },
  };
  for (int round = 0; round < 60; ++round) {
    DispatchInstance instance = small_instance();
    const auto& mutate = mutators[rng.uniform_int(0, std::size(mutators) - 1)];
    mutate(instance);
    EXPECT_THROW(validate_instance(instance), std::invalid_argument) << "round " << round;
  }
}

TEST(ValidateInstance, SerializedBaselineParsesAndValidates) {
  const std::string text = serialize_instance(small_instance());
  DispatchInstance parsed = parse_instance_text(text);
  EXPECT_EQ(parsed.thermal_units.size(), 1u);
  EXPECT_EQ(parsed.dhs.buildings.size(), 1u);
  EXPECT_EQ(serialize_instance(parsed), text);
}

}  // namespace
}  // namespace hydrodispatch
