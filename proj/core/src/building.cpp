#include "hydrodispatch/building.hpp"

#include <Eigen/Dense>
#include <stdexcept>

namespace hydrodispatch {
namespace {

double radiation(const BuildingSpec& spec, int i, int k) {
  if (spec.radiation_w_k.empty()) return 0.0;
  return spec.radiation_w_k[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
}

double radiation_row_sum(const BuildingSpec& spec, int i) {
  double sum = 0.0;
  for (int k = 0; k < spec.wall_count(); ++k)
    if (k != i) sum += radiation(spec, i, k);
  return sum;
}

double conv_total(const BuildingSpec& spec) {
  double sum = 0.0;
  for (const auto& wall : spec.walls) sum += wall.area_m2 * wall.conv_coeff_w_m2_k;
  return sum;
}

// Known part of the wall balance: the outdoor conduction drive plus the
// lagged wall-surface response, both moved to the right-hand side.
double wall_rhs_history(const BuildingSpec& spec, const std::vector<double>& history, int tau) {
  const int order = spec.order();
  double rhs = 0.0;
  for (int j = 0; j <= order; ++j) rhs -= spec.factor_y[static_cast<std::size_t>(j)] * spec.outdoor_temp_c.at(tau - j);
  const std::size_t len = history.size();
  for (int j = 1; j <= order; ++j) {
    if (static_cast<std::size_t>(j) > len)
      throw std::invalid_argument("building " + spec.id + ": wall history too short");
    rhs += spec.factor_z[static_cast<std::size_t>(j)] * history[len - static_cast<std::size_t>(j)];
  }
  return rhs;
}

std::vector<std::vector<double>> initial_wall_history(const BuildingSpec& spec) {
  if (!spec.wall_temp_history_c.empty()) return spec.wall_temp_history_c;
  return std::vector<std::vector<double>>(
      static_cast<std::size_t>(spec.wall_count()),
      std::vector<double>(static_cast<std::size_t>(spec.order()), spec.room_temp_min_c));
}

std::vector<double> initial_room_history(const BuildingSpec& spec) {
  if (!spec.room_temp_history_c.empty()) return spec.room_temp_history_c;
  return {spec.room_temp_min_c};
}

}  // namespace

BuildingPeriodResult building_step(const BuildingSpec& spec, const Constants& constants,
                                   const std::vector<std::vector<double>>& wall_history,
                                   const std::vector<double>& room_history, int tau,
                                   double q_room_w) {
  const int walls = spec.wall_count();
  if (wall_history.size() != static_cast<std::size_t>(walls))
    throw std::invalid_argument("building " + spec.id + ": need one history row per wall");
  if (room_history.empty())
    throw std::invalid_argument("building " + spec.id + ": room history is empty");

  const double z0 = spec.factor_z[0];
  const double vent = spec.vent_at(tau) * constants.air_specific_heat * constants.air_density;
  const double capacity = spec.volume_m3 * constants.air_specific_heat * constants.air_density;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(walls + 1, walls + 1);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(walls + 1);
  for (int i = 0; i < walls; ++i) {
    const double conv = spec.walls[static_cast<std::size_t>(i)].conv_coeff_w_m2_k;
    a(i, i) = -(z0 + conv + radiation_row_sum(spec, i));
    for (int k = 0; k < walls; ++k)
      if (k != i) a(i, k) = radiation(spec, i, k);
    a(i, walls) = conv;
    b(i) = wall_rhs_history(spec, wall_history[static_cast<std::size_t>(i)], tau);
  }
  for (int k = 0; k < walls; ++k)
    a(walls, k) = spec.walls[static_cast<std::size_t>(k)].area_m2 *
                  spec.walls[static_cast<std::size_t>(k)].conv_coeff_w_m2_k;
  a(walls, walls) = -(conv_total(spec) + vent + capacity);
  b(walls) = -vent * spec.outdoor_temp_c.at(tau) - q_room_w - capacity * room_history.back();

  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible())
    throw std::runtime_error("building " + spec.id + ": singular heat balance at period " +
                             std::to_string(tau));
  const Eigen::VectorXd x = lu.solve(b);

  BuildingPeriodResult result;
  result.wall_temps_c.assign(x.data(), x.data() + walls);
  result.room_temp_c = x(walls);
  return result;
}

BuildingTrajectory simulate_building(const BuildingSpec& spec, const Constants& constants,
                                     const Horizon& horizon,
                                     const std::vector<double>& heat_input_w) {
  if (heat_input_w.size() != static_cast<std::size_t>(horizon.periods))
    throw std::invalid_argument("building " + spec.id + ": need one heat input per period");
  std::vector<std::vector<double>> wall_history = initial_wall_history(spec);
  std::vector<double> room_history = initial_room_history(spec);

  BuildingTrajectory trajectory;
  for (int tau = 0; tau < horizon.periods; ++tau) {
    const double q_room = heat_input_w[static_cast<std::size_t>(tau)] + spec.gain_at(tau);
    BuildingPeriodResult step = building_step(spec, constants, wall_history, room_history, tau, q_room);
    for (int i = 0; i < spec.wall_count(); ++i)
      wall_history[static_cast<std::size_t>(i)].push_back(step.wall_temps_c[static_cast<std::size_t>(i)]);
    room_history.push_back(step.room_temp_c);
    trajectory.wall_temps_c.push_back(step.wall_temps_c);
    trajectory.room_temps_c.push_back(step.room_temp_c);
  }
  return trajectory;
}

BuildingConstraints assemble_building_constraints(const BuildingSpec& spec,
                                                  const Constants& constants,
                                                  const Horizon& horizon) {
  BuildingConstraints out;
  out.wall_count = spec.wall_count();
  out.periods = horizon.periods;
  out.rows.resize(static_cast<std::size_t>((out.wall_count + 1) * out.periods));

  const int order = spec.order();
  const double z0 = spec.factor_z[0];
  const double capacity = spec.volume_m3 * constants.air_specific_heat * constants.air_density;
  const std::vector<std::vector<double>> wall_history = initial_wall_history(spec);
  const std::vector<double> room_history = initial_room_history(spec);

  for (int tau = 0; tau < out.periods; ++tau) {
    for (int i = 0; i < out.wall_count; ++i) {
      LinearRow& row = out.rows[static_cast<std::size_t>(out.wall_row(i, tau))];
      const double conv = spec.walls[static_cast<std::size_t>(i)].conv_coeff_w_m2_k;
      row.add(out.wall_var(i, tau), -(z0 + conv + radiation_row_sum(spec, i)));
      for (int k = 0; k < out.wall_count; ++k)
        if (k != i) row.add(out.wall_var(k, tau), radiation(spec, i, k));
      row.add(out.room_var(tau), conv);
      double rhs = 0.0;
      for (int j = 0; j <= order; ++j)
        rhs -= spec.factor_y[static_cast<std::size_t>(j)] * spec.outdoor_temp_c.at(tau - j);
      for (int j = 1; j <= order; ++j) {
        const double zj = spec.factor_z[static_cast<std::size_t>(j)];
        if (tau - j >= 0) {
          row.add(out.wall_var(i, tau - j), -zj);
        } else {
          const auto& history = wall_history[static_cast<std::size_t>(i)];
          rhs += zj * history[history.size() - static_cast<std::size_t>(j - tau)];
        }
      }
      row.rhs = rhs;
    }

    LinearRow& air = out.rows[static_cast<std::size_t>(out.air_row(tau))];
    const double vent = spec.vent_at(tau) * constants.air_specific_heat * constants.air_density;
    for (int k = 0; k < out.wall_count; ++k) {
      const auto& wall = spec.walls[static_cast<std::size_t>(k)];
      air.add(out.wall_var(k, tau), wall.area_m2 * wall.conv_coeff_w_m2_k);
    }
    air.add(out.room_var(tau), -(conv_total(spec) + vent + capacity));
    air.add(out.heat_var(tau), 1.0);
    double rhs = -vent * spec.outdoor_temp_c.at(tau) - spec.gain_at(tau);
    if (tau >= 1)
      air.add(out.room_var(tau - 1), capacity);
    else
      rhs -= capacity * room_history.back();
    air.rhs = rhs;
  }
  return out;
}

std::vector<double> required_heat_input(const BuildingSpec& spec, const Constants& constants,
                                        const Horizon& horizon, double room_temp_c) {
  const int walls = spec.wall_count();
  const double z0 = spec.factor_z[0];
  const double capacity = spec.volume_m3 * constants.air_specific_heat * constants.air_density;
  std::vector<std::vector<double>> wall_history = initial_wall_history(spec);
  std::vector<double> room_history = initial_room_history(spec);

  std::vector<double> needed;
  needed.reserve(static_cast<std::size_t>(horizon.periods));
  for (int tau = 0; tau < horizon.periods; ++tau) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(walls, walls);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(walls);
    for (int i = 0; i < walls; ++i) {
      const double conv = spec.walls[static_cast<std::size_t>(i)].conv_coeff_w_m2_k;
      a(i, i) = -(z0 + conv + radiation_row_sum(spec, i));
      for (int k = 0; k < walls; ++k)
        if (k != i) a(i, k) = radiation(spec, i, k);
      b(i) = wall_rhs_history(spec, wall_history[static_cast<std::size_t>(i)], tau) -
             conv * room_temp_c;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible())
      throw std::runtime_error("building " + spec.id + ": singular wall balance at period " +
                               std::to_string(tau));
    const Eigen::VectorXd w = lu.solve(b);

    const double vent = spec.vent_at(tau) * constants.air_specific_heat * constants.air_density;
    double convection = 0.0;
    for (int k = 0; k < walls; ++k) {
      const auto& wall = spec.walls[static_cast<std::size_t>(k)];
      convection += wall.area_m2 * wall.conv_coeff_w_m2_k * (w(k) - room_temp_c);
    }
    const double q_room = capacity * (room_temp_c - room_history.back()) +
                          vent * (room_temp_c - spec.outdoor_temp_c.at(tau)) - convection;
    needed.push_back(q_room - spec.gain_at(tau));

    for (int i = 0; i < walls; ++i)
      wall_history[static_cast<std::size_t>(i)].push_back(w(i));
    room_history.push_back(room_temp_c);
  }
  return needed;
}

}  // namespace hydrodispatch
