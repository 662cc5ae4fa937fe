#pragma once

#include <vector>

#include "hydrodispatch/rows.hpp"
#include "hydrodispatch/types.hpp"

namespace hydrodispatch {

// Temperatures solved for a single period.
struct BuildingPeriodResult {
  std::vector<double> wall_temps_c;
  double room_temp_c = 0.0;
};

// Simulated trajectory over a horizon; outer index is the period.
struct BuildingTrajectory {
  std::vector<std::vector<double>> wall_temps_c;
  std::vector<double> room_temps_c;
};

// Linearized wall/room balance rows for one representative room over the
// horizon, in a local column layout: period-major blocks of
// [wall 0 .. wall N_w-1, room, heat input]. Rows are equalities; per period
// there are N_w wall rows followed by one air row.
struct BuildingConstraints {
  int wall_count = 0;
  int periods = 0;
  std::vector<LinearRow> rows;

  int stride() const { return wall_count + 2; }
  int wall_var(int wall, int tau) const { return tau * stride() + wall; }
  int room_var(int tau) const { return tau * stride() + wall_count; }
  int heat_var(int tau) const { return tau * stride() + wall_count + 1; }
  int variable_count() const { return stride() * periods; }
  int wall_row(int wall, int tau) const { return tau * (wall_count + 1) + wall; }
  int air_row(int tau) const { return tau * (wall_count + 1) + wall_count; }
};

// Solves the coupled wall-surface / room-air heat balance for period tau.
// wall_history[i] and room_history hold the previous temperatures in
// chronological order (oldest first, newest last); they must reach back at
// least order() periods for walls and one period for the room. q_room_w is
// the total per-room heat gain for the period (heating plus internal gains).
BuildingPeriodResult building_step(const BuildingSpec& spec, const Constants& constants,
                                   const std::vector<std::vector<double>>& wall_history,
                                   const std::vector<double>& room_history, int tau,
                                   double q_room_w);

// Marches building_step over the horizon. heat_input_w holds the per-room
// heating power for each period; internal gains are added on top. Initial
// histories come from the spec (missing histories start isothermal at the
// room-temperature floor).
BuildingTrajectory simulate_building(const BuildingSpec& spec, const Constants& constants,
                                     const Horizon& horizon,
                                     const std::vector<double>& heat_input_w);

// Emits the same balance equations as linear rows over the local layout
// described by BuildingConstraints, so a dispatch model can embed them.
BuildingConstraints assemble_building_constraints(const BuildingSpec& spec,
                                                  const Constants& constants,
                                                  const Horizon& horizon);

// Per-room heating power that holds the room air exactly at room_temp_c in
// every period (the fixed-comfort heat load). Internal gains are already
// netted off.
std::vector<double> required_heat_input(const BuildingSpec& spec, const Constants& constants,
                                        const Horizon& horizon, double room_temp_c);

}  // namespace hydrodispatch
