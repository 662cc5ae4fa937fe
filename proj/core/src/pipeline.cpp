#include "hydrodispatch/pipeline.hpp"

#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hydrodispatch {

namespace {

void check_window(const PipelineSpec& pipe, const FlowHistory& flows, int tau) {
  const int nb = pipe.history_depth;
  if (nb < 1) throw std::invalid_argument("pipeline " + pipe.id + ": history_depth must be >= 1");
  if (!flows.mass_flow_kg_s.covers(tau - nb, tau) || !flows.inlet_temp_c.covers(tau - nb, tau))
    throw std::invalid_argument("pipeline " + pipe.id + ": flow record does not cover periods " +
                                std::to_string(tau - nb) + ".." + std::to_string(tau));
}

// Shared front-fill routine: weights are assigned 1 from offset `first` until
// the cumulative parcel mass reaches the pipe content, then one fractional
// entry, then zeros. An exact hit keeps the shorter support.
void front_fill(std::vector<double>& w, int first, const PipelineSpec& pipe,
                const FlowHistory& flows, int tau, double dt, double target_kg) {
  double cum = 0.0;
  for (int k = first; k < static_cast<int>(w.size()); ++k) {
    const double parcel = flows.mass_flow_kg_s.at(tau - k) * dt;
    if (parcel < 0.0) throw std::invalid_argument("pipeline " + pipe.id + ": negative mass flow");
    if (cum + parcel <= target_kg) {
      w[static_cast<std::size_t>(k)] = 1.0;
    } else if (cum < target_kg) {
      w[static_cast<std::size_t>(k)] = (target_kg - cum) / parcel;
    } else {
      w[static_cast<std::size_t>(k)] = 0.0;
    }
    cum += parcel;
  }
  if (cum < target_kg)
    throw std::invalid_argument("pipeline " + pipe.id +
                                ": flow window holds less mass than the pipe content; "
                                "history_depth too small for these flows");
}

}  // namespace

WaterColumnWeights fill_weights(const PipelineSpec& pipe, const FlowHistory& flows, int tau,
                                double dt, const Constants& constants) {
  check_window(pipe, flows, tau);
  const double target = pipe.water_mass_kg(constants);
  const int nb = pipe.history_depth;

  WaterColumnWeights w;
  w.alpha.assign(static_cast<std::size_t>(nb) + 1, 0.0);
  w.beta.assign(static_cast<std::size_t>(nb) + 1, 0.0);
  front_fill(w.alpha, 0, pipe, flows, tau, dt, target);
  w.beta[0] = 1.0;
  front_fill(w.beta, 1, pipe, flows, tau, dt, target);
  return w;
}

double wmm_lossless(const PipelineSpec& pipe, const FlowHistory& flows, int tau, double dt,
                    const Constants& constants) {
  const WaterColumnWeights w = fill_weights(pipe, flows, tau, dt, constants);
  const double m_now = flows.mass_flow_kg_s.at(tau);
  if (m_now <= 0.0)
    throw std::invalid_argument("pipeline " + pipe.id + ": current mass flow must be positive");
  double acc = 0.0;
  for (int k = 0; k <= pipe.history_depth; ++k) {
    const double share = w.beta[static_cast<std::size_t>(k)] - w.alpha[static_cast<std::size_t>(k)];
    if (share == 0.0) continue;
    acc += share * flows.mass_flow_kg_s.at(tau - k) * flows.inlet_temp_c.at(tau - k);
  }
  return acc / m_now;
}

OutletResult wmm_outlet(const PipelineSpec& pipe, const FlowHistory& flows, int tau, double dt,
                        const Constants& constants) {
  const WaterColumnWeights w = fill_weights(pipe, flows, tau, dt, constants);
  const double m_now = flows.mass_flow_kg_s.at(tau);
  if (m_now <= 0.0)
    throw std::invalid_argument("pipeline " + pipe.id + ": current mass flow must be positive");

  double mix = 0.0;
  double weight_sum = 0.0;  // sum of alpha plus beta (beta counted from k = 1)
  for (int k = 0; k <= pipe.history_depth; ++k) {
    const double a = w.alpha[static_cast<std::size_t>(k)];
    const double b = w.beta[static_cast<std::size_t>(k)];
    if (b != a) mix += (b - a) * flows.mass_flow_kg_s.at(tau - k) * flows.inlet_temp_c.at(tau - k);
    weight_sum += a;
    if (k >= 1) weight_sum += b;
  }

  OutletResult out;
  out.t_lossless_c = mix / m_now;
  out.transit_seconds = 0.5 * weight_sum * dt;
  const double t_am = pipe.ambient_at(tau);
  const double decay = pipe.heat_loss_w_per_m_k * dt /
                       (2.0 * pipe.area_m2 * constants.water_density * constants.water_specific_heat);
  out.t_out_c = t_am + (out.t_lossless_c - t_am) * std::exp(-decay * weight_sum);
  return out;
}

NmOutletResult nm_outlet(const PipelineSpec& pipe, const FlowHistory& flows, int tau, double dt,
                         const Constants& constants) {
  check_window(pipe, flows, tau);
  const double target = pipe.water_mass_kg(constants);
  const int nb = pipe.history_depth;
  const double m_now_dt = flows.mass_flow_kg_s.at(tau) * dt;
  if (m_now_dt <= 0.0)
    throw std::invalid_argument("pipeline " + pipe.id + ": current mass flow must be positive");

  // gamma: shortest prefix (from the current period) whose mass reaches the
  // pipe content; phi: same but starting one period back.
  int gamma = -1, phi = -1;
  double r_kg = 0.0, s_prefix = 0.0;
  {
    double cum = 0.0;
    for (int k = 0; k <= nb; ++k) {
      cum += flows.mass_flow_kg_s.at(tau - k) * dt;
      if (cum >= target) {
        gamma = k;
        r_kg = cum;
        break;
      }
    }
    cum = 0.0;
    for (int k = 1; k <= nb; ++k) {
      cum += flows.mass_flow_kg_s.at(tau - k) * dt;
      if (cum >= target) {
        phi = k;
        break;
      }
    }
  }
  if (gamma < 0 || phi < 0)
    throw std::invalid_argument("pipeline " + pipe.id +
                                ": flow window holds less mass than the pipe content");

  NmState st;
  st.gamma = gamma;
  st.phi = phi;
  st.R_kg = r_kg;
  if (phi >= gamma + 1) {
    for (int k = 0; k <= phi - 1; ++k) s_prefix += flows.mass_flow_kg_s.at(tau - k) * dt;
    st.S_kg = s_prefix;
  } else {
    st.S_kg = r_kg;
  }

  // Exit coefficients accumulate; when phi == gamma both boundary terms land
  // on the same offset and their sum is exactly 1.
  st.coeff.assign(static_cast<std::size_t>(nb) + 1, 0.0);
  st.coeff[static_cast<std::size_t>(phi)] += (m_now_dt + target - st.S_kg) / m_now_dt;
  for (int k = gamma + 1; k <= phi - 1; ++k)
    st.coeff[static_cast<std::size_t>(k)] += flows.mass_flow_kg_s.at(tau - k) * dt / m_now_dt;
  st.coeff[static_cast<std::size_t>(gamma)] += (st.R_kg - target) / m_now_dt;

  NmOutletResult out;
  out.state = st;
  double mix = 0.0;
  for (int k = 0; k <= nb; ++k)
    if (st.coeff[static_cast<std::size_t>(k)] != 0.0)
      mix += st.coeff[static_cast<std::size_t>(k)] * flows.inlet_temp_c.at(tau - k);
  out.t_lossless_c = mix;

  const double m_gamma_dt = flows.mass_flow_kg_s.at(tau - gamma) * dt;
  const double transit_periods = gamma + 0.5 + (st.S_kg - st.R_kg) / m_gamma_dt;
  out.transit_seconds = transit_periods * dt;
  const double t_am = pipe.ambient_at(tau);
  const double decay = pipe.heat_loss_w_per_m_k * dt /
                       (pipe.area_m2 * constants.water_density * constants.water_specific_heat);
  out.t_out_c = t_am + (out.t_lossless_c - t_am) * std::exp(-decay * transit_periods);
  return out;
}

double steady_outlet(const PipelineSpec& pipe, double mass_flow_kg_s, double t_in_c,
                     double t_ambient_c, const Constants& constants) {
  if (mass_flow_kg_s <= 0.0)
    throw std::invalid_argument("pipeline " + pipe.id + ": steady outlet needs positive flow");
  const double expo = pipe.heat_loss_w_per_m_k * pipe.length_m /
                      (constants.water_specific_heat * mass_flow_kg_s);
  return t_ambient_c + (t_in_c - t_ambient_c) * std::exp(-expo);
}

std::vector<double> plugflow_oracle(const PipelineSpec& pipe, const FlowHistory& flows,
                                    int periods, double dt, int substeps,
                                    const Constants& constants) {
  if (substeps < 100) throw std::invalid_argument("plugflow_oracle: substeps must be >= 100");
  if (periods < 1) throw std::invalid_argument("plugflow_oracle: periods must be >= 1");
  const int nb = pipe.history_depth;
  if (!flows.mass_flow_kg_s.covers(-nb, periods - 1) || !flows.inlet_temp_c.covers(-nb, periods - 1))
    throw std::invalid_argument("plugflow_oracle: flow record does not cover [-N_b, periods)");

  const double pipe_mass = pipe.water_mass_kg(constants);
  double history_mass = 0.0;
  for (int tau = -nb; tau < 0; ++tau) history_mass += flows.mass_flow_kg_s.at(tau) * dt;
  if (history_mass < pipe_mass)
    throw std::invalid_argument(
        "plugflow_oracle: pre-horizon inflow mass does not flush the pipe; extend the history");

  struct Parcel {
    double mass;
    double temp_in;
    double entry_time;
  };
  std::deque<Parcel> pipe_content;
  // Unknown initial content: seeded at the oldest history temperature. It is
  // fully expelled before tau = 0 thanks to the history-mass precondition.
  pipe_content.push_back({pipe_mass, flows.inlet_temp_c.at(-nb), -(nb + 1) * dt});

  const double decay_rate = pipe.heat_loss_w_per_m_k /
                            (pipe.area_m2 * constants.water_density * constants.water_specific_heat);
  const double sub_dt = dt / substeps;

  std::vector<double> outlet(static_cast<std::size_t>(periods), 0.0);
  for (int tau = -nb; tau < periods; ++tau) {
    const double m = flows.mass_flow_kg_s.at(tau);
    const double t_in = flows.inlet_temp_c.at(tau);
    const double t_am = pipe.ambient_at(std::max(tau, 0));
    double exited_mass = 0.0, exited_heat = 0.0;
    for (int s = 0; s < substeps; ++s) {
      const double now = tau * dt + (s + 1) * sub_dt;
      const double parcel_mass = m * sub_dt;
      pipe_content.push_back({parcel_mass, t_in, now - sub_dt});
      double to_expel = parcel_mass;
      while (to_expel > 0.0 && !pipe_content.empty()) {
        Parcel& front = pipe_content.front();
        const double take = std::min(front.mass, to_expel);
        const double residence = now - front.entry_time;
        const double temp = t_am + (front.temp_in - t_am) * std::exp(-decay_rate * residence);
        exited_mass += take;
        exited_heat += take * temp;
        front.mass -= take;
        to_expel -= take;
        if (front.mass <= 0.0) pipe_content.pop_front();
      }
    }
    if (tau >= 0) outlet[static_cast<std::size_t>(tau)] = exited_heat / exited_mass;
  }
  return outlet;
}

}  // namespace hydrodispatch
