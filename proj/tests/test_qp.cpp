#include "hydrodispatch/qp.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "test_util.hpp"

namespace hydrodispatch {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

LinearRow make_row(std::vector<std::pair<int, double>> terms, double rhs) {
  LinearRow row;
  row.terms = std::move(terms);
  row.rhs = rhs;
  return row;
}

// Dense curvature matrix Q with the 1/2 x'Qx convention matching
// QpProblem::objective_value.
Eigen::MatrixXd dense_curvature(const QpProblem& p) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(p.variable_count, p.variable_count);
  for (const QuadTerm& t : p.quadratic) {
    if (t.i == t.j) {
      q(t.i, t.i) += 2.0 * t.coeff;
    } else {
      q(t.i, t.j) += t.coeff;
      q(t.j, t.i) += t.coeff;
    }
  }
  return q;
}

Eigen::VectorXd dense_linear(const QpProblem& p) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p.variable_count);
  for (std::size_t i = 0; i < p.linear.size(); ++i) c[static_cast<long>(i)] = p.linear[i];
  return c;
}

// All inequalities in one dense block: user rows first, then finite lower and
// upper bounds, with the matching multipliers from the solution.
struct FullIneq {
  Eigen::MatrixXd g;
  Eigen::VectorXd h;
  Eigen::VectorXd z;
};

FullIneq assemble_full(const QpProblem& p, const QpSolution& sol) {
  const int n = p.variable_count;
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs, duals;
  for (std::size_t r = 0; r < p.inequalities.size(); ++r) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
    for (const auto& term : p.inequalities[r].terms) row[term.first] += term.second;
    rows.push_back(row);
    rhs.push_back(p.inequalities[r].rhs);
    duals.push_back(sol.ineq_duals[r]);
  }
  for (int i = 0; i < n; ++i) {
    if (!p.lower.empty() && p.lower[static_cast<std::size_t>(i)] > -kInf) {
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
      row[i] = -1.0;
      rows.push_back(row);
      rhs.push_back(-p.lower[static_cast<std::size_t>(i)]);
      duals.push_back(sol.lower_duals[static_cast<std::size_t>(i)]);
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!p.upper.empty() && p.upper[static_cast<std::size_t>(i)] < kInf) {
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
      row[i] = 1.0;
      rows.push_back(row);
      rhs.push_back(p.upper[static_cast<std::size_t>(i)]);
      duals.push_back(sol.upper_duals[static_cast<std::size_t>(i)]);
    }
  }
  FullIneq full;
  full.g = Eigen::MatrixXd::Zero(static_cast<long>(rows.size()), n);
  full.h = Eigen::VectorXd::Zero(static_cast<long>(rows.size()));
  full.z = Eigen::VectorXd::Zero(static_cast<long>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    full.g.row(static_cast<long>(r)) = rows[r];
    full.h[static_cast<long>(r)] = rhs[r];
    full.z[static_cast<long>(r)] = duals[r];
  }
  return full;
}

// First-order optimality audit at the returned point: stationarity, primal
// feasibility, complementary slackness, and multiplier signs.
void expect_kkt(const QpProblem& p, const QpSolution& sol, double tol) {
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  const int n = p.variable_count;
  const Eigen::Map<const Eigen::VectorXd> x(sol.x.data(), n);
  const Eigen::MatrixXd q = dense_curvature(p);
  const Eigen::VectorXd qx = q * x;
  Eigen::VectorXd grad = qx + dense_linear(p);

  double b_scale = 1.0;
  for (std::size_t r = 0; r < p.equalities.size(); ++r) {
    const LinearRow& row = p.equalities[r];
    b_scale = std::max(b_scale, std::abs(row.rhs));
    double lhs = 0.0;
    for (const auto& term : row.terms) {
      lhs += term.second * sol.x[static_cast<std::size_t>(term.first)];
      grad[term.first] += term.second * sol.eq_duals[r];
    }
    EXPECT_LE(std::abs(lhs - row.rhs), tol * (1.0 + std::abs(row.rhs)));
  }
  (void)b_scale;

  const FullIneq full = assemble_full(p, sol);
  if (full.g.rows() > 0) grad += full.g.transpose() * full.z;
  const double d_scale = 1.0 + dense_linear(p).lpNorm<Eigen::Infinity>() +
                         qx.lpNorm<Eigen::Infinity>();
  EXPECT_LE(grad.lpNorm<Eigen::Infinity>(), tol * d_scale);

  const double obj_scale = 1.0 + std::abs(sol.objective);
  for (long r = 0; r < full.g.rows(); ++r) {
    const double slack = full.h[r] - full.g.row(r).dot(x);
    EXPECT_GE(slack, -tol * (1.0 + std::abs(full.h[r])));
    EXPECT_GE(full.z[r], 0.0);
    EXPECT_LE(full.z[r] * std::max(slack, 0.0), tol * obj_scale);
  }
}

// Reference solution for a strictly convex QP by enumerating active sets of
// the combined inequality block and solving each candidate KKT system.
bool active_set_oracle(const Eigen::MatrixXd& q, const Eigen::VectorXd& c,
                       const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                       const Eigen::MatrixXd& g, const Eigen::VectorXd& h,
                       Eigen::VectorXd* x_out, double* obj_out) {
  const int n = static_cast<int>(q.rows());
  const int me = static_cast<int>(a.rows());
  const int mi = static_cast<int>(g.rows());
  double best = kInf;
  bool found = false;
  for (unsigned mask = 0; mask < (1u << mi); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < mi; ++i)
      if (mask & (1u << i)) act.push_back(i);
    if (static_cast<int>(act.size()) > n - me) continue;
    const int k = static_cast<int>(act.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + me + k, n + me + k);
    Eigen::VectorXd rhs(n + me + k);
    kkt.topLeftCorner(n, n) = q;
    rhs.head(n) = -c;
    if (me > 0) {
      kkt.block(n, 0, me, n) = a;
      kkt.block(0, n, n, me) = a.transpose();
      rhs.segment(n, me) = b;
    }
    for (int i = 0; i < k; ++i) {
      kkt.block(n + me + i, 0, 1, n) = g.row(act[static_cast<std::size_t>(i)]);
      kkt.block(0, n + me + i, n, 1) = g.row(act[static_cast<std::size_t>(i)]).transpose();
      rhs[n + me + i] = h[act[static_cast<std::size_t>(i)]];
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd x = sol.head(n);
    bool ok = true;
    for (int i = 0; i < mi && ok; ++i)
      if (g.row(i).dot(x) > h[i] + 1e-9 * (1.0 + std::abs(h[i]))) ok = false;
    for (int i = 0; i < k && ok; ++i)
      if (sol[n + me + i] < -1e-9) ok = false;
    if (!ok) continue;
    const double obj = 0.5 * x.dot(q * x) + c.dot(x);
    if (obj < best) {
      best = obj;
      *x_out = x;
      found = true;
    }
  }
  if (found) *obj_out = best;
  return found;
}

// Reference LP solution by enumerating basic feasible points (vertices).
bool vertex_oracle(const Eigen::VectorXd& c, const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                   const Eigen::MatrixXd& g, const Eigen::VectorXd& h, Eigen::VectorXd* x_out,
                   double* best_out, double* second_out) {
  const int n = static_cast<int>(c.size());
  const int me = static_cast<int>(a.rows());
  const int mi = static_cast<int>(g.rows());
  const int need = n - me;
  double best = kInf, second = kInf;
  bool found = false;
  for (unsigned mask = 0; mask < (1u << mi); ++mask) {
    if (__builtin_popcount(mask) != need) continue;
    Eigen::MatrixXd sys(n, n);
    Eigen::VectorXd rhs(n);
    if (me > 0) {
      sys.topRows(me) = a;
      rhs.head(me) = b;
    }
    int r = me;
    for (int i = 0; i < mi; ++i) {
      if (mask & (1u << i)) {
        sys.row(r) = g.row(i);
        rhs[r] = h[i];
        ++r;
      }
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd x = lu.solve(rhs);
    bool ok = true;
    for (int i = 0; i < mi && ok; ++i)
      if (g.row(i).dot(x) > h[i] + 1e-9 * (1.0 + std::abs(h[i]))) ok = false;
    if (!ok) continue;
    const double obj = c.dot(x);
    if (obj < best - 1e-12) {
      second = best;
      best = obj;
      *x_out = x;
      found = true;
    } else if (obj > best + 1e-12 && obj < second) {
      second = obj;
    }
  }
  *best_out = best;
  *second_out = second;
  return found;
}

struct RandomQp {
  QpProblem problem;
  Eigen::MatrixXd q, a, g;  // g includes the bound rows, matching the oracle
  Eigen::VectorXd c, b, h;
};

RandomQp random_qp(hdtest::Rng& rng) {
  RandomQp r;
  const int n = rng.uniform_int(1, 8);
  const int me = rng.uniform_int(0, std::min(2, n - 1 >= 0 ? n - 1 : 0));
  const int mi = rng.uniform_int(1, 5);

  Eigen::MatrixXd basis(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) basis(i, j) = rng.uniform(-1.0, 1.0);
  r.q = basis.transpose() * basis + rng.uniform(0.1, 2.0) * Eigen::MatrixXd::Identity(n, n);
  r.c.resize(n);
  for (int i = 0; i < n; ++i) r.c[i] = rng.uniform(-3.0, 3.0);

  Eigen::VectorXd x0(n);
  for (int i = 0; i < n; ++i) x0[i] = rng.uniform(-1.0, 1.0);

  r.a.resize(me, n);
  r.b.resize(me);
  for (int row = 0; row < me; ++row) {
    for (int j = 0; j < n; ++j) r.a(row, j) = rng.uniform(-1.0, 1.0);
    r.b[row] = r.a.row(row).dot(x0);
  }

  std::vector<Eigen::RowVectorXd> grows;
  std::vector<double> hvals;
  for (int row = 0; row < mi; ++row) {
    Eigen::RowVectorXd grow(n);
    for (int j = 0; j < n; ++j) grow[j] = rng.uniform(-1.0, 1.0);
    grows.push_back(grow);
    hvals.push_back(grow.dot(x0) + rng.uniform(0.01, 0.8));
  }

  r.problem.variable_count = n;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      if (r.q(i, j) != 0.0)
        r.problem.quadratic.push_back({i, j, i == j ? 0.5 * r.q(i, i) : r.q(i, j)});
  r.problem.linear.assign(r.c.data(), r.c.data() + n);
  for (int row = 0; row < me; ++row) {
    LinearRow lr;
    for (int j = 0; j < n; ++j) lr.terms.push_back({j, r.a(row, j)});
    lr.rhs = r.b[row];
    r.problem.equalities.push_back(lr);
  }
  for (int row = 0; row < mi; ++row) {
    LinearRow lr;
    for (int j = 0; j < n; ++j) lr.terms.push_back({j, grows[static_cast<std::size_t>(row)][j]});
    lr.rhs = hvals[static_cast<std::size_t>(row)];
    r.problem.inequalities.push_back(lr);
  }

  // Bound a couple of variables so the bound-handling path is exercised
  // without blowing up the oracle's enumeration.
  r.problem.lower.assign(static_cast<std::size_t>(n), -kInf);
  r.problem.upper.assign(static_cast<std::size_t>(n), kInf);
  const int bounded = rng.uniform_int(0, std::min(2, n));
  for (int i = 0; i < bounded; ++i) {
    const int var = rng.uniform_int(0, n - 1);
    r.problem.lower[static_cast<std::size_t>(var)] = x0[var] - rng.uniform(0.05, 1.0);
    r.problem.upper[static_cast<std::size_t>(var)] = x0[var] + rng.uniform(0.05, 1.0);
  }
  for (int i = 0; i < n; ++i) {
    if (r.problem.lower[static_cast<std::size_t>(i)] > -kInf) {
      Eigen::RowVectorXd grow = Eigen::RowVectorXd::Zero(n);
      grow[i] = -1.0;
      grows.push_back(grow);
      hvals.push_back(-r.problem.lower[static_cast<std::size_t>(i)]);
    }
    if (r.problem.upper[static_cast<std::size_t>(i)] < kInf) {
      Eigen::RowVectorXd grow = Eigen::RowVectorXd::Zero(n);
      grow[i] = 1.0;
      grows.push_back(grow);
      hvals.push_back(r.problem.upper[static_cast<std::size_t>(i)]);
    }
  }
  r.g.resize(static_cast<long>(grows.size()), n);
  r.h.resize(static_cast<long>(hvals.size()));
  for (std::size_t row = 0; row < grows.size(); ++row) {
    r.g.row(static_cast<long>(row)) = grows[row];
    r.h[static_cast<long>(row)] = hvals[row];
  }
  return r;
}

TEST(QpHandExamples, ParabolaAgainstFloorViaRow) {
  QpProblem p;
  p.variable_count = 1;
  p.quadratic = {{0, 0, 1.0}};
  p.inequalities = {make_row({{0, -1.0}}, -1.0)};  // x >= 1
  const QpSolution sol = solve_qp(p);
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  EXPECT_NEAR(sol.x[0], 1.0, 1e-7);
  EXPECT_NEAR(sol.ineq_duals[0], 2.0, 1e-6);
  EXPECT_NEAR(sol.objective, 1.0, 1e-7);
  expect_kkt(p, sol, 1e-7);
}

TEST(QpHandExamples, ParabolaAgainstFloorViaBound) {
  QpProblem p;
  p.variable_count = 1;
  p.quadratic = {{0, 0, 1.0}};
  p.lower = {1.0};
  p.upper = {kInf};
  const QpSolution sol = solve_qp(p);
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  EXPECT_NEAR(sol.x[0], 1.0, 1e-7);
  EXPECT_NEAR(sol.lower_duals[0], 2.0, 1e-6);
}

TEST(QpHandExamples, SymmetricSimplexCenter) {
  QpProblem p;
  p.variable_count = 3;
  p.quadratic = {{0, 0, 0.5}, {1, 1, 0.5}, {2, 2, 0.5}};
  p.equalities = {make_row({{0, 1.0}, {1, 1.0}, {2, 1.0}}, 1.0)};
  const QpSolution sol = solve_qp(p);
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(sol.x[static_cast<std::size_t>(i)], 1.0 / 3.0, 1e-8);
  EXPECT_NEAR(sol.eq_duals[0], -1.0 / 3.0, 1e-8);
  EXPECT_NEAR(sol.objective, 1.0 / 6.0, 1e-9);
}

TEST(LpHandExamples, BoxVertex) {
  QpProblem p;
  p.variable_count = 1;
  p.linear = {-1.0};
  p.lower = {0.0};
  p.upper = {5.0};
  const QpSolution sol = solve_lp(p);
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  EXPECT_NEAR(sol.x[0], 5.0, 1e-7);
  EXPECT_NEAR(sol.objective, -5.0, 1e-7);
  EXPECT_NEAR(sol.upper_duals[0], 1.0, 1e-6);
}

TEST(LpHandExamples, InfeasiblePairIsDetected) {
  QpProblem p;
  p.variable_count = 1;
  p.linear = {1.0};
  p.inequalities = {make_row({{0, 1.0}}, 0.0), make_row({{0, -1.0}}, -1.0)};
  EXPECT_EQ(solve_lp(p).status, SolveStatus::Infeasible);
}

TEST(LpHandExamples, UnboundedRayIsDetected) {
  QpProblem p;
  p.variable_count = 1;
  p.linear = {-1.0};
  p.lower = {0.0};
  p.upper = {kInf};
  EXPECT_EQ(solve_lp(p).status, SolveStatus::Unbounded);
}

TEST(LpHandExamples, RejectsQuadraticTerms) {
  QpProblem p;
  p.variable_count = 1;
  p.quadratic = {{0, 0, 1.0}};
  EXPECT_THROW(solve_lp(p), std::invalid_argument);
}

TEST(QpValidation, RejectsIndefiniteCurvature) {
  QpProblem p;
  p.variable_count = 2;
  p.quadratic = {{0, 0, 1.0}, {1, 1, -1.0}};
  EXPECT_THROW(solve_qp(p), std::invalid_argument);
}

TEST(QpValidation, RejectsMalformedShapes) {
  QpProblem p;
  p.variable_count = 2;
  p.linear = {1.0};  // wrong length
  EXPECT_THROW(solve_qp(p), std::invalid_argument);
  p.linear = {1.0, 1.0};
  p.quadratic = {{0, 5, 1.0}};  // column out of range
  EXPECT_THROW(solve_qp(p), std::invalid_argument);
  p.quadratic.clear();
  p.equalities = {make_row({{3, 1.0}}, 0.0)};  // column out of range
  EXPECT_THROW(solve_qp(p), std::invalid_argument);
  p.equalities = {make_row({{0, 1.0}}, std::nan(""))};
  EXPECT_THROW(solve_qp(p), std::invalid_argument);
}

TEST(QpValidation, CrossedBoundsComeBackInfeasible) {
  QpProblem p;
  p.variable_count = 1;
  p.quadratic = {{0, 0, 1.0}};
  p.lower = {2.0};
  p.upper = {1.0};
  EXPECT_EQ(solve_qp(p).status, SolveStatus::Infeasible);
}

TEST(QpValidation, FreeLinearDirectionIsUnbounded) {
  QpProblem p;
  p.variable_count = 2;
  p.quadratic = {{0, 0, 1.0}};  // no curvature on x1
  p.linear = {0.0, -1.0};
  EXPECT_EQ(solve_qp(p).status, SolveStatus::Unbounded);
}

TEST(QpValidation, ConstantRowsHandled) {
  QpProblem p;
  p.variable_count = 1;
  p.quadratic = {{0, 0, 1.0}};
  p.inequalities = {make_row({}, 1.0)};  // 0 <= 1, vacuous
  EXPECT_EQ(solve_qp(p).status, SolveStatus::Optimal);
  p.inequalities = {make_row({}, -1.0)};  // 0 <= -1, impossible
  EXPECT_EQ(solve_qp(p).status, SolveStatus::Infeasible);
}

TEST(RandomQps, MatchActiveSetOracleWithCleanKkt) {
  hdtest::Rng rng(987654321);
  int solved = 0;
  for (int round = 0; round < 200; ++round) {
    const RandomQp r = random_qp(rng);
    Eigen::VectorXd x_ref;
    double obj_ref = 0.0;
    if (!active_set_oracle(r.q, r.c, r.a, r.b, r.g, r.h, &x_ref, &obj_ref)) continue;
    const QpSolution sol = solve_qp(r.problem);
    ASSERT_EQ(sol.status, SolveStatus::Optimal) << describe(r.problem) << " round " << round;
    expect_kkt(r.problem, sol, 1e-8);
    EXPECT_LE(std::abs(sol.objective - obj_ref), 1e-6 * (1.0 + std::abs(obj_ref)))
        << "round " << round;
    for (int i = 0; i < r.problem.variable_count; ++i)
      EXPECT_NEAR(sol.x[static_cast<std::size_t>(i)], x_ref[i], 1e-5) << "round " << round;
    ++solved;
  }
  // The generator always produces feasible problems, so the oracle should
  // essentially never fail to find the optimum.
  EXPECT_GE(solved, 195);
}

TEST(RandomQps, DualObjectiveMatchesPrimal) {
  hdtest::Rng rng(24681357);
  for (int round = 0; round < 100; ++round) {
    const RandomQp r = random_qp(rng);
    const QpSolution sol = solve_qp(r.problem);
    ASSERT_EQ(sol.status, SolveStatus::Optimal);
    const int n = r.problem.variable_count;
    const Eigen::Map<const Eigen::VectorXd> y(
        sol.eq_duals.data(), static_cast<long>(sol.eq_duals.size()));
    const FullIneq full = assemble_full(r.problem, sol);
    Eigen::VectorXd v = r.c;
    if (r.a.rows() > 0) v += r.a.transpose() * y;
    if (full.g.rows() > 0) v += full.g.transpose() * full.z;
    const Eigen::VectorXd xhat = -r.q.ldlt().solve(v);
    double dual = 0.5 * xhat.dot(r.q * xhat) + v.dot(xhat) - full.h.dot(full.z);
    if (r.a.rows() > 0) dual -= r.b.dot(y);
    (void)n;
    EXPECT_LE(std::abs(sol.objective - dual), 1e-6 * (1.0 + std::abs(sol.objective)))
        << "round " << round;
  }
}

TEST(RandomLps, MatchVertexEnumerationOracle) {
  hdtest::Rng rng(1122334455);
  int compared = 0;
  for (int round = 0; round < 100; ++round) {
    const int n = rng.uniform_int(2, 5);
    const int me = rng.uniform_int(0, 1);
    const int extra = rng.uniform_int(1, 3);
    QpProblem p;
    p.variable_count = n;
    p.linear.resize(static_cast<std::size_t>(n));
    Eigen::VectorXd c(n);
    for (int i = 0; i < n; ++i) {
      c[i] = rng.uniform(-1.0, 1.0);
      p.linear[static_cast<std::size_t>(i)] = c[i];
    }
    Eigen::MatrixXd a(me, n);
    Eigen::VectorXd b(me);
    for (int row = 0; row < me; ++row) {
      LinearRow lr;
      for (int j = 0; j < n; ++j) {
        a(row, j) = rng.uniform(-1.0, 1.0);
        lr.terms.push_back({j, a(row, j)});
      }
      b[row] = 0.0;
      lr.rhs = 0.0;
      p.equalities.push_back(lr);
    }
    std::vector<Eigen::RowVectorXd> grows;
    std::vector<double> hvals;
    for (int row = 0; row < extra; ++row) {
      LinearRow lr;
      Eigen::RowVectorXd grow(n);
      for (int j = 0; j < n; ++j) {
        grow[j] = rng.uniform(-1.0, 1.0);
        lr.terms.push_back({j, grow[j]});
      }
      lr.rhs = rng.uniform(0.2, 2.0);
      p.inequalities.push_back(lr);
      grows.push_back(grow);
      hvals.push_back(lr.rhs);
    }
    p.lower.resize(static_cast<std::size_t>(n));
    p.upper.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      p.lower[static_cast<std::size_t>(i)] = -rng.uniform(1.0, 3.0);
      p.upper[static_cast<std::size_t>(i)] = rng.uniform(1.0, 3.0);
      Eigen::RowVectorXd lo = Eigen::RowVectorXd::Zero(n);
      lo[i] = -1.0;
      grows.push_back(lo);
      hvals.push_back(-p.lower[static_cast<std::size_t>(i)]);
      Eigen::RowVectorXd up = Eigen::RowVectorXd::Zero(n);
      up[i] = 1.0;
      grows.push_back(up);
      hvals.push_back(p.upper[static_cast<std::size_t>(i)]);
    }
    Eigen::MatrixXd g(static_cast<long>(grows.size()), n);
    Eigen::VectorXd h(static_cast<long>(hvals.size()));
    for (std::size_t row = 0; row < grows.size(); ++row) {
      g.row(static_cast<long>(row)) = grows[row];
      h[static_cast<long>(row)] = hvals[row];
    }

    Eigen::VectorXd x_ref;
    double best = 0.0, second = 0.0;
    if (!vertex_oracle(c, a, b, g, h, &x_ref, &best, &second)) continue;
    const QpSolution sol = solve_lp(p);
    ASSERT_EQ(sol.status, SolveStatus::Optimal) << "round " << round;
    EXPECT_LE(std::abs(sol.objective - best), 1e-6 * (1.0 + std::abs(best))) << "round " << round;
    if (second > best + 1e-7) {
      for (int i = 0; i < n; ++i)
        EXPECT_NEAR(sol.x[static_cast<std::size_t>(i)], x_ref[i], 1e-5) << "round " << round;
    }
    ++compared;
  }
  EXPECT_GE(compared, 95);
}

TEST(SolverBehaviour, RepeatSolvesAreBitIdentical) {
  hdtest::Rng rng(5555);
  const RandomQp r = random_qp(rng);
  const QpSolution first = solve_qp(r.problem);
  const QpSolution second = solve_qp(r.problem);
  ASSERT_EQ(first.status, SolveStatus::Optimal);
  ASSERT_EQ(second.status, SolveStatus::Optimal);
  EXPECT_EQ(first.iterations, second.iterations);
  for (std::size_t i = 0; i < first.x.size(); ++i) EXPECT_EQ(first.x[i], second.x[i]);
  for (std::size_t i = 0; i < first.eq_duals.size(); ++i)
    EXPECT_EQ(first.eq_duals[i], second.eq_duals[i]);
}

TEST(SolverBehaviour, InitialHintKeepsTheOptimum) {
  hdtest::Rng rng(7777);
  const RandomQp r = random_qp(rng);
  const QpSolution cold = solve_qp(r.problem);
  ASSERT_EQ(cold.status, SolveStatus::Optimal);
  SolveOptions opt;
  opt.initial_x = cold.x;
  const QpSolution warm = solve_qp(r.problem, opt);
  ASSERT_EQ(warm.status, SolveStatus::Optimal);
  EXPECT_LE(std::abs(warm.objective - cold.objective), 1e-7 * (1.0 + std::abs(cold.objective)));

  SolveOptions bad;
  bad.initial_x = {1.0};
  if (r.problem.variable_count != 1) EXPECT_THROW(solve_qp(r.problem, bad), std::invalid_argument);
}

TEST(SolverBehaviour, DuplicatedRowsStillSolve) {
  QpProblem p;
  p.variable_count = 2;
  p.quadratic = {{0, 0, 1.0}, {1, 1, 1.0}};
  p.linear = {-2.0, -4.0};
  p.equalities = {make_row({{0, 1.0}, {1, 1.0}}, 1.0), make_row({{0, 1.0}, {1, 1.0}}, 1.0)};
  p.inequalities = {make_row({{0, 1.0}}, 0.8), make_row({{0, 1.0}}, 0.8)};
  const QpSolution sol = solve_qp(p);
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  EXPECT_NEAR(sol.x[0] + sol.x[1], 1.0, 1e-7);
  // Unconstrained stationary point (1, 2) violates the equality; the
  // projected optimum sits at x = (0, 1).
  EXPECT_NEAR(sol.x[0], 0.0, 1e-6);
  EXPECT_NEAR(sol.x[1], 1.0, 1e-6);
}

TEST(SolverBehaviour, DescribeSummarizesShape) {
  QpProblem p;
  p.variable_count = 3;
  p.quadratic = {{0, 0, 1.0}};
  p.equalities = {make_row({{0, 1.0}, {1, 2.0}}, 3.0)};
  p.inequalities = {make_row({{2, 1.0}}, 4.0)};
  p.lower = {0.0, -kInf, -kInf};
  p.upper = {kInf, kInf, 9.0};
  const std::string text = describe(p);
  EXPECT_NE(text.find("n=3"), std::string::npos);
  EXPECT_NE(text.find("eq=1"), std::string::npos);
  EXPECT_NE(text.find("ineq=1"), std::string::npos);
  EXPECT_NE(text.find("bounds=2"), std::string::npos);
}

}  // namespace
}  // namespace hydrodispatch
