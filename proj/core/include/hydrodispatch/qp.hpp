#pragma once

#include <string>
#include <vector>

#include "hydrodispatch/rows.hpp"

namespace hydrodispatch {

// One product term of the objective: coeff * x_i * x_j (i == j gives a
// squared term). Each unordered pair should appear at most once; repeated
// pairs simply add.
struct QuadTerm {
  int i = 0;
  int j = 0;
  double coeff = 0.0;
};

// min  sum_k coeff_k x_i x_j + linear . x + constant
// s.t. equalities:   terms . x == rhs
//      inequalities: terms . x <= rhs
//      lower <= x <= upper (infinities allowed; empty vector = unbounded).
// The quadratic part must be positive semidefinite; this is checked by an
// attempted factorization at solve time.
struct QpProblem {
  int variable_count = 0;
  std::vector<QuadTerm> quadratic;
  std::vector<double> linear;  // empty means all-zero
  double constant = 0.0;
  std::vector<LinearRow> equalities;
  std::vector<LinearRow> inequalities;
  std::vector<double> lower;
  std::vector<double> upper;

  double objective_value(const std::vector<double>& x) const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterationLimit };

std::string status_name(SolveStatus status);

// Multipliers satisfy the stationarity convention
//   grad f(x) + A_eq' eq_duals + A_ineq' ineq_duals - lower_duals + upper_duals = 0,
// i.e. the Lagrangian adds eq_duals . (A x - b) for equalities, so equality
// multipliers carry the sign the cut computations expect. Inequality and
// bound multipliers are nonnegative.
struct QpSolution {
  SolveStatus status = SolveStatus::IterationLimit;
  std::vector<double> x;
  std::vector<double> eq_duals;
  std::vector<double> ineq_duals;
  std::vector<double> lower_duals;
  std::vector<double> upper_duals;
  double objective = 0.0;  // best-iterate value when not optimal
  int iterations = 0;
};

struct SolveOptions {
  double tolerance = 1e-8;
  int max_iterations = 100;
  std::vector<double> initial_x;  // optional starting hint; empty to ignore
  bool trace = false;             // per-iteration progress on stderr
};

// Primal-dual interior point method with predictor-corrector steps. An
// Infeasible or Unbounded verdict is only reported after an auxiliary
// elastic-slack (respectively recession-direction) solve confirms it.
QpSolution solve_qp(const QpProblem& problem, const SolveOptions& options = {});

// Linear case: identical path with zero curvature. Throws if the problem
// carries quadratic terms.
QpSolution solve_lp(const QpProblem& problem, const SolveOptions& options = {});

// One-line shape summary (dimensions, nonzero counts, magnitude ranges) for
// debugging model assembly.
std::string describe(const QpProblem& problem);

}  // namespace hydrodispatch
