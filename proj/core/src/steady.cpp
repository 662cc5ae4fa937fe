#include <cmath>

#include "hydrodispatch/gbd.hpp"

namespace hydrodispatch {

SteadyResult solve_steady(const DispatchInstance& instance, const GbdOptions& options) {
  GbdOptions opts = options;
  opts.model.steady = true;
  if (opts.initial_flows.empty())
    opts.initial_flows = project_flows(instance, history_tail_flows(instance));

  SteadyResult out;
  GbdResult res = gbd_solve(instance, opts);
  out.solution = std::move(res.solution);
  out.state = std::move(res.state);

  // The loss factor exp(-lambda L / (c m)) is re-substituted at each new flow
  // schedule; its change across the last two iterates measures how tightly
  // that substitution closed.
  const auto& iterates = out.state.flow_iterates;
  if (iterates.size() >= 2) {
    const FlowSchedule& prev = iterates[iterates.size() - 2];
    const FlowSchedule& last = iterates.back();
    const double c_w = instance.constants.water_specific_heat;
    for (std::size_t b = 0; b < instance.dhs.pipelines.size(); ++b) {
      const PipelineSpec& pipe = instance.dhs.pipelines[b];
      const double lam = pipe.heat_loss_w_per_m_k * pipe.length_m / c_w;
      for (std::size_t tau = 0; tau < last[b].size(); ++tau) {
        const double delta =
            std::abs(std::exp(-lam / last[b][tau]) - std::exp(-lam / prev[b][tau]));
        out.loss_factor_delta = std::max(out.loss_factor_delta, delta);
      }
    }
  }
  out.loss_converged = out.state.converged && out.loss_factor_delta <= 1e-6;
  return out;
}

}  // namespace hydrodispatch
