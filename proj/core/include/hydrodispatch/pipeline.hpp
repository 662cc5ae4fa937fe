#pragma once

#include <vector>

#include "hydrodispatch/types.hpp"

namespace hydrodispatch {

// Weight vectors describing which past inflow parcels currently fill the pipe
// (alpha) and which fill the pipe plus the water leaving during the current
// period (beta). Both follow the step pattern (1, ..., 1, x, 0, ..., 0).
struct WaterColumnWeights {
  std::vector<double> alpha;  // k = 0..N_b
  std::vector<double> beta;   // k = 0..N_b, beta[0] == 1
};

struct OutletResult {
  double t_lossless_c = 0.0;     // mass-weighted mean inlet temperature of the outflow
  double t_out_c = 0.0;          // after ambient heat loss
  double transit_seconds = 0.0;  // estimated residence time of the exiting water
};

struct NmState {
  int gamma = 0;    // newest prefix length whose mass fills the pipe
  int phi = 0;      // same, but skipping the current period's inflow
  double R_kg = 0;  // prefix mass through gamma
  double S_kg = 0;  // prefix mass through phi-1 (R when the windows coincide)
  std::vector<double> coeff;  // K over offsets k = 0..N_b; multiplies t_s^{tau-k}
};

struct NmOutletResult {
  NmState state;
  double t_lossless_c = 0.0;
  double t_out_c = 0.0;
  double transit_seconds = 0.0;
};

// Fills the weight vectors for period tau from the flow record. Requires the
// flow window [tau - N_b, tau] to be populated and to hold at least the pipe's
// water mass; throws std::invalid_argument otherwise. When the cumulative mass
// hits the pipe content exactly, the shorter support is chosen (the fractional
// entry collapses to zero).
WaterColumnWeights fill_weights(const PipelineSpec& pipe, const FlowHistory& flows, int tau,
                                double dt_seconds, const Constants& constants = {});

// Mass-weighted mean inlet temperature of the water leaving during period tau.
double wmm_lossless(const PipelineSpec& pipe, const FlowHistory& flows, int tau,
                    double dt_seconds, const Constants& constants = {});

// Outlet temperature including ambient loss over the estimated residence time
// (half the alpha+beta weight sum, beta counted from k = 1).
OutletResult wmm_outlet(const PipelineSpec& pipe, const FlowHistory& flows, int tau,
                        double dt_seconds, const Constants& constants = {});

// Same quantity via the integer-indexed formulation; cross-check for the
// weight-based method (the lossless values agree exactly).
NmOutletResult nm_outlet(const PipelineSpec& pipe, const FlowHistory& flows, int tau,
                         double dt_seconds, const Constants& constants = {});

// Steady-state outlet: exponential approach to ambient over the residence
// time rho*A*L/m, i.e. factor exp(-lambda*L/(c*m)).
double steady_outlet(const PipelineSpec& pipe, double mass_flow_kg_s, double t_in_c,
                     double t_ambient_c, const Constants& constants = {});

// Reference Lagrangian parcel simulation: injects `substeps` parcels per
// period, advects them through the pipe volume, and decays each parcel toward
// ambient at rate lambda/(A*rho*c) over its exact residence time. Returns the
// mass-weighted outlet temperature for each in-horizon period 0..periods-1.
// Requires substeps >= 100 and a pre-horizon history whose mass alone fills
// the pipe (so the unknown initial content is flushed before tau = 0).
std::vector<double> plugflow_oracle(const PipelineSpec& pipe, const FlowHistory& flows,
                                    int periods, double dt_seconds, int substeps,
                                    const Constants& constants = {});

}  // namespace hydrodispatch
