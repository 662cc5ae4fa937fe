#include "hydrodispatch/qp.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace hydrodispatch {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double QpProblem::objective_value(const std::vector<double>& x) const {
  double acc = constant;
  for (const QuadTerm& t : quadratic)
    acc += t.coeff * x[static_cast<std::size_t>(t.i)] * x[static_cast<std::size_t>(t.j)];
  for (std::size_t i = 0; i < linear.size(); ++i) acc += linear[i] * x[i];
  return acc;
}

std::string status_name(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::IterationLimit: return "iteration-limit";
  }
  return "unknown";
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Internal standard form:
//   min 1/2 x'Qx + c'x   s.t.  A x = b,  G x <= h,
// with the variable bounds folded into trailing rows of G.
struct Standard {
  int n = 0;
  SpMat Q;
  Eigen::VectorXd c;
  SpMat A;
  Eigen::VectorXd b;
  SpMat G;
  Eigen::VectorXd h;
  int user_rows = 0;           // leading rows of G taken from problem.inequalities
  std::vector<int> lower_var;  // variable behind each lower-bound row, in order
  std::vector<int> upper_var;
};

void check_shape(const QpProblem& p) {
  if (p.variable_count <= 0) throw std::invalid_argument("qp: variable_count must be positive");
  const std::size_t n = static_cast<std::size_t>(p.variable_count);
  if (!p.linear.empty() && p.linear.size() != n)
    throw std::invalid_argument("qp: linear term size mismatch");
  if (!p.lower.empty() && p.lower.size() != n)
    throw std::invalid_argument("qp: lower bound size mismatch");
  if (!p.upper.empty() && p.upper.size() != n)
    throw std::invalid_argument("qp: upper bound size mismatch");
  for (double v : p.linear)
    if (!std::isfinite(v)) throw std::invalid_argument("qp: non-finite linear coefficient");
  for (double v : p.lower)
    if (std::isnan(v) || v == kInf)
      throw std::invalid_argument("qp: lower bound must be finite or -inf");
  for (double v : p.upper)
    if (std::isnan(v) || v == -kInf)
      throw std::invalid_argument("qp: upper bound must be finite or +inf");
  for (const QuadTerm& t : p.quadratic) {
    if (t.i < 0 || t.i >= p.variable_count || t.j < 0 || t.j >= p.variable_count)
      throw std::invalid_argument("qp: quadratic index out of range");
    if (!std::isfinite(t.coeff))
      throw std::invalid_argument("qp: non-finite quadratic coefficient");
  }
  const auto check_rows = [&](const std::vector<LinearRow>& rows, const char* kind) {
    for (const LinearRow& row : rows) {
      if (!std::isfinite(row.rhs))
        throw std::invalid_argument(std::string("qp: non-finite ") + kind + " rhs");
      for (const auto& term : row.terms) {
        if (term.first < 0 || term.first >= p.variable_count)
          throw std::invalid_argument(std::string("qp: ") + kind + " column out of range");
        if (!std::isfinite(term.second))
          throw std::invalid_argument(std::string("qp: non-finite ") + kind + " coefficient");
      }
    }
  };
  check_rows(p.equalities, "equality");
  check_rows(p.inequalities, "inequality");
}

SpMat rows_to_matrix(const std::vector<LinearRow>& rows, int n) {
  std::vector<Triplet> trips;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (const auto& term : rows[r].terms)
      trips.emplace_back(static_cast<int>(r), term.first, term.second);
  SpMat m(static_cast<int>(rows.size()), n);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

Standard standardize(const QpProblem& p, bool include_quadratic) {
  Standard st;
  st.n = p.variable_count;
  st.c = Eigen::VectorXd::Zero(st.n);
  for (std::size_t i = 0; i < p.linear.size(); ++i) st.c[static_cast<long>(i)] = p.linear[i];

  std::vector<Triplet> qt;
  if (include_quadratic) {
    for (const QuadTerm& t : p.quadratic) {
      if (t.i == t.j) {
        qt.emplace_back(t.i, t.i, 2.0 * t.coeff);
      } else {
        qt.emplace_back(t.i, t.j, t.coeff);
        qt.emplace_back(t.j, t.i, t.coeff);
      }
    }
  }
  st.Q.resize(st.n, st.n);
  st.Q.setFromTriplets(qt.begin(), qt.end());

  st.A = rows_to_matrix(p.equalities, st.n);
  st.b.resize(static_cast<long>(p.equalities.size()));
  for (std::size_t r = 0; r < p.equalities.size(); ++r)
    st.b[static_cast<long>(r)] = p.equalities[r].rhs;

  std::vector<Triplet> gt;
  std::vector<double> h;
  for (std::size_t r = 0; r < p.inequalities.size(); ++r) {
    for (const auto& term : p.inequalities[r].terms)
      gt.emplace_back(static_cast<int>(r), term.first, term.second);
    h.push_back(p.inequalities[r].rhs);
  }
  st.user_rows = static_cast<int>(p.inequalities.size());
  for (int i = 0; i < st.n; ++i) {
    if (!p.lower.empty() && p.lower[static_cast<std::size_t>(i)] > -kInf) {
      gt.emplace_back(static_cast<int>(h.size()), i, -1.0);
      h.push_back(-p.lower[static_cast<std::size_t>(i)]);
      st.lower_var.push_back(i);
    }
  }
  for (int i = 0; i < st.n; ++i) {
    if (!p.upper.empty() && p.upper[static_cast<std::size_t>(i)] < kInf) {
      gt.emplace_back(static_cast<int>(h.size()), i, 1.0);
      h.push_back(p.upper[static_cast<std::size_t>(i)]);
      st.upper_var.push_back(i);
    }
  }
  st.G.resize(static_cast<int>(h.size()), st.n);
  st.G.setFromTriplets(gt.begin(), gt.end());
  st.h = Eigen::Map<Eigen::VectorXd>(h.data(), static_cast<long>(h.size()));
  return st;
}

// PSD is required, and checked the cheap way: factor Q plus a tiny shift and
// reject if the pivots come out materially negative.
void validate_curvature(const SpMat& q) {
  if (q.nonZeros() == 0) return;
  double scale = 0.0;
  for (int k = 0; k < q.outerSize(); ++k)
    for (SpMat::InnerIterator it(q, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
  const double shift = 1e-9 * (1.0 + scale);
  SpMat eye(q.rows(), q.cols());
  eye.setIdentity();
  const SpMat reg = q + shift * eye;
  Eigen::SimplicialLDLT<SpMat> ldlt(reg);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < -1e-6 * (1.0 + scale))
    throw std::invalid_argument("qp: quadratic term is not positive semidefinite");
}

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double step = kInf;
  for (long i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) step = std::min(step, -v[i] / dv[i]);
  return step;
}

struct IpmOutcome {
  bool converged = false;
  Eigen::VectorXd x, y, z, s;
  double objective = 0.0;
  double metric = kInf;
  int iterations = 0;
};

// Infeasible-start predictor-corrector interior point iteration on the
// standard form. Returns the best iterate when it fails to converge so the
// caller can diagnose and report honestly.
//
// Newton systems are solved in condensed form: the slack and inequality-dual
// blocks are eliminated analytically, leaving an (n + me) augmented system
// with the barrier weights z/s folded into the leading block. Active
// inequalities then appear as large diagonal entries, which factors far more
// stably than the full saddle-point system, and the eliminated rows are
// recovered one by one to machine precision afterwards.
IpmOutcome run_ipm(const Standard& st, double tol, int max_iter, const Eigen::VectorXd* hint,
                   bool trace = false) {
  const int n = st.n;
  const int me = static_cast<int>(st.A.rows());
  const int mi = static_cast<int>(st.G.rows());
  const int total = n + me;
  const bool is_lp = st.Q.nonZeros() == 0;
  const SpMat Gt = SpMat(st.G.transpose());

  Eigen::VectorXd x = (hint != nullptr) ? *hint : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(me);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(mi);
  Eigen::VectorXd s = Eigen::VectorXd::Ones(mi);

  const double b_scale = 1.0 + (me > 0 ? st.b.lpNorm<Eigen::Infinity>() : 0.0);
  const double h_scale = 1.0 + (mi > 0 ? st.h.lpNorm<Eigen::Infinity>() : 0.0);
  const double c_scale = 1.0 + st.c.lpNorm<Eigen::Infinity>();

  // Constant part of the condensed matrix; the barrier weights and the
  // regularization are appended fresh every iteration.
  std::vector<Triplet> base;
  base.reserve(static_cast<std::size_t>(st.Q.nonZeros() + 2 * st.A.nonZeros() + total));
  for (int k = 0; k < st.Q.outerSize(); ++k)
    for (SpMat::InnerIterator it(st.Q, k); it; ++it)
      base.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int k = 0; k < st.A.outerSize(); ++k) {
    for (SpMat::InnerIterator it(st.A, k); it; ++it) {
      base.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
      base.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()), it.value());
    }
  }

  double delta = 1e-8;
  SpMat kkt(total, total);
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  bool analyzed = false;

  // Assembles and factors the condensed matrix for the current barrier
  // weights, growing the static regularization if the factorization breaks
  // down numerically.
  const auto factorize = [&](const Eigen::VectorXd& sv, const Eigen::VectorXd& zv) {
    std::vector<Triplet> trips = base;
    if (mi > 0) {
      SpMat wg = st.G;
      for (int k = 0; k < wg.outerSize(); ++k)
        for (SpMat::InnerIterator it(wg, k); it; ++it)
          it.valueRef() *= zv[it.row()] / sv[it.row()];
      const SpMat gtwg = Gt * wg;
      for (int k = 0; k < gtwg.outerSize(); ++k)
        for (SpMat::InnerIterator it(gtwg, k); it; ++it)
          trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
    while (true) {
      std::vector<Triplet> all = trips;
      for (int i = 0; i < n; ++i) all.emplace_back(i, i, delta);
      for (int i = 0; i < me; ++i) all.emplace_back(n + i, n + i, -delta);
      kkt.setFromTriplets(all.begin(), all.end());
      kkt.makeCompressed();
      if (!analyzed) {
        lu.analyzePattern(kkt);
        analyzed = true;
      }
      lu.factorize(kkt);
      if (lu.info() == Eigen::Success) return true;
      delta *= 100.0;
      if (delta > 1.0) return false;
    }
  };

  // Iterative refinement against the unregularized condensed system; the
  // static regularization keeps the factorization stable without biasing the
  // returned step. Rounds stop once the residual is small or stops
  // shrinking, and the best candidate seen is the one returned.
  double last_solve_residual = 0.0;
  const auto solve_refined = [&](const Eigen::VectorXd& rhs) {
    Eigen::VectorXd sol = lu.solve(rhs);
    Eigen::VectorXd best_sol = sol;
    double best_res = kInf;
    const double rhs_scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
    for (int round = 0; round < 5; ++round) {
      Eigen::VectorXd r = rhs - kkt * sol;
      r.head(n) += delta * sol.head(n);
      r.tail(me) -= delta * sol.tail(me);
      const double res = r.lpNorm<Eigen::Infinity>();
      if (res < best_res) {
        best_res = res;
        best_sol = sol;
      }
      if (res <= 1e-13 * rhs_scale || res > 2.0 * best_res) break;
      sol += lu.solve(r);
    }
    last_solve_residual = best_res;
    return best_sol;
  };

  struct Direction {
    Eigen::VectorXd dx, dy, dz, ds;
  };
  // One Newton solve against the current factorization for the given
  // complementarity target. The eliminated rows are rebuilt exactly: ds from
  // the primal inequality rows, dz from the complementarity rows.
  const auto newton_direction = [&](const Eigen::VectorXd& rd, const Eigen::VectorXd& rp,
                                    const Eigen::VectorXd& rg, const Eigen::VectorXd& rsz) {
    Eigen::VectorXd rhs(total);
    rhs.head(n) = -rd;
    if (mi > 0) rhs.head(n) -= Gt * ((z.cwiseProduct(rg) - rsz).cwiseQuotient(s));
    if (me > 0) rhs.segment(n, me) = -rp;
    const Eigen::VectorXd sol = solve_refined(rhs);
    Direction d;
    d.dx = sol.head(n);
    d.dy = sol.tail(me);
    if (mi > 0) {
      d.ds = -rg - st.G * d.dx;
      d.dz = (-rsz - z.cwiseProduct(d.ds)).cwiseQuotient(s);
    }
    return d;
  };

  // Starting point: take one full Newton step from the trivial iterate and
  // shift the slack and dual estimates to comfortable positivity. This
  // adapts the initial complementarity products to the problem's own scale,
  // which keeps the first real iterations from being blocked at the
  // boundary.
  if (mi > 0 && factorize(s, z)) {
    Eigen::VectorXd rd0 = st.c + st.Q * x + Gt * z;
    if (me > 0) rd0 += st.A.transpose() * y;
    const Eigen::VectorXd rp0 = (me > 0) ? Eigen::VectorXd(st.A * x - st.b) : Eigen::VectorXd();
    const Eigen::VectorXd rg0 = st.G * x + s - st.h;
    const Direction d0 = newton_direction(rd0, rp0, rg0, s.cwiseProduct(z));
    if (d0.dx.allFinite() && d0.dy.allFinite() && d0.dz.allFinite()) {
      const Eigen::VectorXd x0 = x + d0.dx;
      const Eigen::VectorXd y0 = y + d0.dy;
      const Eigen::VectorXd z0 = z + d0.dz;
      const Eigen::VectorXd s0 = st.h - st.G * x0;
      const double s_shift = std::max(0.0, -1.5 * s0.minCoeff());
      const double z_shift = std::max(0.0, -1.5 * z0.minCoeff());
      const Eigen::VectorXd s_hat = s0.array() + s_shift;
      const Eigen::VectorXd z_hat = z0.array() + z_shift;
      const double pairing = s_hat.dot(z_hat);
      const double s_extra = 0.5 * pairing / std::max(z_hat.sum(), 1e-300);
      const double z_extra = 0.5 * pairing / std::max(s_hat.sum(), 1e-300);
      const Eigen::VectorXd s_cand = s_hat.array() + s_extra;
      const Eigen::VectorXd z_cand = z_hat.array() + z_extra;
      if (x0.allFinite() && s_cand.allFinite() && z_cand.allFinite() &&
          s_cand.minCoeff() > 0.0 && z_cand.minCoeff() > 0.0) {
        x = x0;
        y = y0;
        s = s_cand;
        z = z_cand;
      }
    }
  }

  IpmOutcome best;
  best.x = x;
  best.y = y;
  best.z = z;
  best.s = s;
  double best_metric = kInf;
  double prev_metric = kInf;
  int stall = 0;

  for (int iter = 0; iter <= max_iter; ++iter) {
    const Eigen::VectorXd qx = st.Q * x;
    Eigen::VectorXd rd = st.c + qx;
    if (me > 0) rd += st.A.transpose() * y;
    if (mi > 0) rd += Gt * z;
    const Eigen::VectorXd rp = (me > 0) ? Eigen::VectorXd(st.A * x - st.b) : Eigen::VectorXd();
    const Eigen::VectorXd rg = (mi > 0) ? Eigen::VectorXd(st.G * x + s - st.h) : Eigen::VectorXd();
    const double gap = (mi > 0) ? s.dot(z) : 0.0;
    const double mu = (mi > 0) ? gap / mi : 0.0;
    const double obj = 0.5 * x.dot(qx) + st.c.dot(x);

    const double rd_rel = rd.lpNorm<Eigen::Infinity>() / (c_scale + qx.lpNorm<Eigen::Infinity>());
    const double rp_rel = (me > 0) ? rp.lpNorm<Eigen::Infinity>() / b_scale : 0.0;
    const double rg_rel = (mi > 0) ? rg.lpNorm<Eigen::Infinity>() / h_scale : 0.0;
    const double gap_rel = (mi > 0) ? gap / (1.0 + std::abs(obj)) : 0.0;
    const double metric = std::max({rd_rel, rp_rel, rg_rel, gap_rel});

    if (metric < best_metric) {
      best_metric = metric;
      best.x = x;
      best.y = y;
      best.z = z;
      best.s = s;
      best.objective = obj;
      best.metric = metric;
      best.iterations = iter;
    }
    if (trace)
      std::fprintf(stderr, "ipm %3d rd %.2e rp %.2e rg %.2e gap %.2e mu %.2e\n", iter, rd_rel,
                   rp_rel, rg_rel, gap_rel, mu);
    if (rd_rel <= tol && rp_rel <= tol && rg_rel <= tol && gap_rel <= tol) {
      best.converged = true;
      best.x = x;
      best.y = y;
      best.z = z;
      best.s = s;
      best.objective = obj;
      best.metric = metric;
      best.iterations = iter;
      return best;
    }
    if (iter == max_iter) break;
    if (!x.allFinite() || !y.allFinite() || !z.allFinite() || !s.allFinite()) break;
    if (x.lpNorm<Eigen::Infinity>() > 1e12) break;
    if (me > 0 && y.lpNorm<Eigen::Infinity>() > 1e12) break;
    if (mi > 0 && z.lpNorm<Eigen::Infinity>() > 1e12) break;
    if (metric > 0.99 * prev_metric) {
      if (++stall > 30) break;
    } else {
      stall = 0;
    }
    prev_metric = metric;

    if (!factorize(s, z)) break;

    if (mi == 0) {
      // Pure equality problem: the Newton step is exact.
      const Direction d = newton_direction(rd, rp, Eigen::VectorXd(), Eigen::VectorXd());
      x += d.dx;
      y += d.dy;
      continue;
    }

    Direction d = newton_direction(rd, rp, rg, s.cwiseProduct(z));
    // Linear programs may move the primal and dual iterates by different
    // amounts; with curvature the two are coupled and share one step.
    double ap_aff = std::min(1.0, max_step(s, d.ds));
    double ad_aff = std::min(1.0, max_step(z, d.dz));
    if (!is_lp) ap_aff = ad_aff = std::min(ap_aff, ad_aff);
    const double mu_aff = (s + ap_aff * d.ds).dot(z + ad_aff * d.dz) / mi;
    const double ratio = std::max(mu_aff, 0.0) / std::max(mu, 1e-300);
    double sigma = std::min(1.0, ratio * ratio * ratio);
    if (std::min(ap_aff, ad_aff) < 0.1) sigma = std::max(sigma, 0.1);

    Eigen::VectorXd rsz =
        s.cwiseProduct(z) + d.ds.cwiseProduct(d.dz) - Eigen::VectorXd::Constant(mi, sigma * mu);
    d = newton_direction(rd, rp, rg, rsz);

    double ap = std::min(1.0, 0.995 * max_step(s, d.ds));
    double ad = std::min(1.0, 0.995 * max_step(z, d.dz));
    if (!is_lp) ap = ad = std::min(ap, ad);

    // Additional centrality correctors: push the complementarity products
    // that block the step back toward the current target. Each round reuses
    // the factorization, so the extra cost is one back-solve.
    const double mu_t = std::max(sigma * mu, 1e-300);
    for (int round = 0; round < 3 && std::min(ap, ad) < 0.995; ++round) {
      const double tp = std::min(1.0, ap + 0.3);
      const double td = std::min(1.0, ad + 0.3);
      const Eigen::VectorXd v = (s + tp * d.ds).cwiseProduct(z + td * d.dz);
      Eigen::VectorXd t = Eigen::VectorXd::Zero(mi);
      for (int i = 0; i < mi; ++i) {
        if (v[i] < 0.1 * mu_t) {
          t[i] = 0.1 * mu_t - v[i];
        } else if (v[i] > 10.0 * mu_t) {
          t[i] = std::max(10.0 * mu_t - v[i], -10.0 * mu_t);
        }
      }
      if (t.lpNorm<Eigen::Infinity>() <= 1e-14 * mu_t) break;
      const Eigen::VectorXd rsz_try = rsz - t;
      const Direction d_try = newton_direction(rd, rp, rg, rsz_try);
      double ap_try = std::min(1.0, 0.995 * max_step(s, d_try.ds));
      double ad_try = std::min(1.0, 0.995 * max_step(z, d_try.dz));
      if (!is_lp) ap_try = ad_try = std::min(ap_try, ad_try);
      if (ap_try + ad_try < ap + ad + 0.01) break;
      d = d_try;
      ap = ap_try;
      ad = ad_try;
      rsz = rsz_try;
    }

    // Step-length recovery: when even the corrected direction is blocked,
    // retarget the full current barrier parameter to pull the iterate away
    // from the boundary before trying again.
    if (std::min(ap, ad) < 0.05) {
      const Eigen::VectorXd rsz_c =
          s.cwiseProduct(z) - Eigen::VectorXd::Constant(mi, mu);
      const Direction d_c = newton_direction(rd, rp, rg, rsz_c);
      double ap_c = std::min(1.0, 0.995 * max_step(s, d_c.ds));
      double ad_c = std::min(1.0, 0.995 * max_step(z, d_c.dz));
      if (!is_lp) ap_c = ad_c = std::min(ap_c, ad_c);
      if (std::min(ap_c, ad_c) > std::min(ap, ad)) {
        d = d_c;
        ap = ap_c;
        ad = ad_c;
      }
    }

    if (trace) {
      int bp = -1, bd = -1;
      double wp = kInf, wd = kInf;
      for (int i = 0; i < mi; ++i) {
        if (d.ds[i] < 0.0 && -s[i] / d.ds[i] < wp) {
          wp = -s[i] / d.ds[i];
          bp = i;
        }
        if (d.dz[i] < 0.0 && -z[i] / d.dz[i] < wd) {
          wd = -z[i] / d.dz[i];
          bd = i;
        }
      }
      std::fprintf(stderr,
                   "        sigma %.2e ap %.2e ad %.2e delta %.1e res %.2e | "
                   "sblk %d s %.2e ds %.2e | zblk %d z %.2e dz %.2e\n",
                   sigma, ap, ad, delta, last_solve_residual, bp, bp >= 0 ? s[bp] : 0.0,
                   bp >= 0 ? d.ds[bp] : 0.0, bd, bd >= 0 ? z[bd] : 0.0, bd >= 0 ? d.dz[bd] : 0.0);
    }
    if (std::max(ap, ad) < 1e-11) break;
    x += ap * d.dx;
    s += ap * d.ds;
    y += ad * d.dy;
    z += ad * d.dz;
  }
  return best;
}

// Elastic feasibility probe: minimum total constraint violation over
//   A x + u - v = b, G x - w <= h, u, v, w >= 0.
// Every original row is first rescaled to unit magnitude so the violation
// variables all live on one scale regardless of the row units. The probe is
// always feasible and bounded below by zero; a clearly positive optimum
// certifies infeasibility of the original problem.
bool confirm_infeasible(const Standard& st, double* violation, bool trace = false) {
  const int n = st.n;
  const int me = static_cast<int>(st.A.rows());
  const int mi = static_cast<int>(st.G.rows());
  if (me == 0 && mi == 0) return false;

  Eigen::VectorXd ascale = Eigen::VectorXd::Ones(me);
  for (int k = 0; k < st.A.outerSize(); ++k)
    for (SpMat::InnerIterator it(st.A, k); it; ++it)
      ascale[it.row()] = std::max(ascale[it.row()], std::abs(it.value()));
  for (int r = 0; r < me; ++r) ascale[r] = std::max(ascale[r], std::abs(st.b[r]));
  Eigen::VectorXd gscale = Eigen::VectorXd::Ones(mi);
  for (int k = 0; k < st.G.outerSize(); ++k)
    for (SpMat::InnerIterator it(st.G, k); it; ++it)
      gscale[it.row()] = std::max(gscale[it.row()], std::abs(it.value()));
  for (int r = 0; r < mi; ++r) gscale[r] = std::max(gscale[r], std::abs(st.h[r]));

  Standard el;
  el.n = n + 2 * me + mi;
  el.c = Eigen::VectorXd::Zero(el.n);
  el.c.tail(2 * me + mi).setOnes();
  el.Q.resize(el.n, el.n);

  std::vector<Triplet> at;
  for (int k = 0; k < st.A.outerSize(); ++k)
    for (SpMat::InnerIterator it(st.A, k); it; ++it)
      at.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                      it.value() / ascale[it.row()]);
  for (int r = 0; r < me; ++r) {
    at.emplace_back(r, n + r, 1.0);
    at.emplace_back(r, n + me + r, -1.0);
  }
  el.A.resize(me, el.n);
  el.A.setFromTriplets(at.begin(), at.end());
  el.b = st.b.cwiseQuotient(ascale);

  std::vector<Triplet> gt;
  std::vector<double> h;
  for (int k = 0; k < st.G.outerSize(); ++k)
    for (SpMat::InnerIterator it(st.G, k); it; ++it)
      gt.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                      it.value() / gscale[it.row()]);
  for (int r = 0; r < mi; ++r) gt.emplace_back(r, n + 2 * me + r, -1.0);
  for (int r = 0; r < mi; ++r) h.push_back(st.h[r] / gscale[r]);
  for (int j = 0; j < 2 * me + mi; ++j) {
    gt.emplace_back(mi + j, n + j, -1.0);
    h.push_back(0.0);
  }
  el.G.resize(static_cast<int>(h.size()), el.n);
  el.G.setFromTriplets(gt.begin(), gt.end());
  el.h = Eigen::Map<Eigen::VectorXd>(h.data(), static_cast<long>(h.size()));

  // The decision only needs the optimum to a margin, not full accuracy.
  const IpmOutcome out = run_ipm(el, 1e-8, 300, nullptr, trace);
  *violation = out.objective;
  const double threshold = 1e-7 * (1.0 + me + mi);
  if (out.converged) return out.objective > threshold;
  // Near-converged fallback: trust the best iterate only when it is feasible
  // and complementary to far better accuracy than the margin it certifies,
  // and the dual bound agrees that the optimum is clearly positive.
  if (out.metric > 1e-5) return false;
  const double dual_obj = -el.b.dot(out.y) - el.h.dot(out.z);
  return out.objective > 10.0 * threshold && dual_obj > 10.0 * threshold;
}

// Recession probe: a direction d with A d = 0, Q d = 0, G d <= 0 and
// c'd < 0 certifies an unbounded objective over a nonempty feasible set.
// Constraint rows are rescaled to unit magnitude, which leaves the recession
// cone unchanged, and the direction is confined to the unit box.
bool confirm_unbounded(const Standard& st, bool trace = false) {
  const int n = st.n;
  const int me = static_cast<int>(st.A.rows());
  const int mi = static_cast<int>(st.G.rows());

  Standard rec;
  rec.n = n;
  rec.c = st.c;
  rec.Q.resize(n, n);

  std::vector<Triplet> at;
  Eigen::VectorXd ascale = Eigen::VectorXd::Ones(me + n);
  for (int k = 0; k < st.A.outerSize(); ++k)
    for (SpMat::InnerIterator it(st.A, k); it; ++it)
      ascale[it.row()] = std::max(ascale[it.row()], std::abs(it.value()));
  for (int k = 0; k < st.Q.outerSize(); ++k)
    for (SpMat::InnerIterator it(st.Q, k); it; ++it)
      ascale[me + it.row()] = std::max(ascale[me + it.row()], std::abs(it.value()));
  for (int k = 0; k < st.A.outerSize(); ++k)
    for (SpMat::InnerIterator it(st.A, k); it; ++it)
      at.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                      it.value() / ascale[it.row()]);
  for (int k = 0; k < st.Q.outerSize(); ++k)
    for (SpMat::InnerIterator it(st.Q, k); it; ++it)
      at.emplace_back(me + static_cast<int>(it.row()), static_cast<int>(it.col()),
                      it.value() / ascale[me + it.row()]);
  rec.A.resize(me + n, n);
  rec.A.setFromTriplets(at.begin(), at.end());
  rec.b = Eigen::VectorXd::Zero(me + n);

  std::vector<Triplet> gt;
  std::vector<double> h;
  Eigen::VectorXd gscale = Eigen::VectorXd::Ones(mi);
  for (int k = 0; k < st.G.outerSize(); ++k)
    for (SpMat::InnerIterator it(st.G, k); it; ++it)
      gscale[it.row()] = std::max(gscale[it.row()], std::abs(it.value()));
  for (int k = 0; k < st.G.outerSize(); ++k)
    for (SpMat::InnerIterator it(st.G, k); it; ++it)
      gt.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                      it.value() / gscale[it.row()]);
  for (int r = 0; r < mi; ++r) h.push_back(0.0);
  for (int j = 0; j < n; ++j) {
    gt.emplace_back(mi + 2 * j, j, 1.0);
    h.push_back(1.0);
    gt.emplace_back(mi + 2 * j + 1, j, -1.0);
    h.push_back(1.0);
  }
  rec.G.resize(static_cast<int>(h.size()), n);
  rec.G.setFromTriplets(gt.begin(), gt.end());
  rec.h = Eigen::Map<Eigen::VectorXd>(h.data(), static_cast<long>(h.size()));

  const IpmOutcome out = run_ipm(rec, 1e-8, 300, nullptr, trace);
  const double margin = 1e-7 * (1.0 + st.c.lpNorm<Eigen::Infinity>());
  if (out.converged) return out.objective < -margin;
  // Near-converged fallback: the best iterate is itself the certificate when
  // it satisfies the cone constraints to far better accuracy than the cost
  // margin it must clear.
  return out.metric <= 1e-5 && out.objective < -10.0 * margin;
}

QpSolution package(const QpProblem& p, const Standard& st, const IpmOutcome& out,
                   SolveStatus status) {
  QpSolution sol;
  sol.status = status;
  sol.iterations = out.iterations;
  sol.x.assign(out.x.data(), out.x.data() + st.n);
  sol.objective = p.objective_value(sol.x);
  if (out.y.size() > 0) sol.eq_duals.assign(out.y.data(), out.y.data() + out.y.size());
  sol.ineq_duals.assign(static_cast<std::size_t>(st.user_rows), 0.0);
  for (int r = 0; r < st.user_rows; ++r) sol.ineq_duals[static_cast<std::size_t>(r)] = out.z[r];
  sol.lower_duals.assign(static_cast<std::size_t>(st.n), 0.0);
  sol.upper_duals.assign(static_cast<std::size_t>(st.n), 0.0);
  int row = st.user_rows;
  for (int var : st.lower_var) sol.lower_duals[static_cast<std::size_t>(var)] = out.z[row++];
  for (int var : st.upper_var) sol.upper_duals[static_cast<std::size_t>(var)] = out.z[row++];
  return sol;
}

QpSolution solve_impl(const QpProblem& p, const SolveOptions& options, bool include_quadratic) {
  check_shape(p);
  if (!options.initial_x.empty() &&
      options.initial_x.size() != static_cast<std::size_t>(p.variable_count))
    throw std::invalid_argument("qp: initial point size mismatch");
  if (options.tolerance <= 0.0) throw std::invalid_argument("qp: tolerance must be positive");
  if (options.max_iterations < 1)
    throw std::invalid_argument("qp: max_iterations must be positive");

  const Standard st = standardize(p, include_quadratic);
  validate_curvature(st.Q);

  Eigen::VectorXd hint;
  if (!options.initial_x.empty())
    hint = Eigen::Map<const Eigen::VectorXd>(options.initial_x.data(),
                                             static_cast<long>(options.initial_x.size()));
  const IpmOutcome out =
      run_ipm(st, options.tolerance, options.max_iterations,
              options.initial_x.empty() ? nullptr : &hint, options.trace);
  if (out.converged) return package(p, st, out, SolveStatus::Optimal);

  double violation = 0.0;
  if (confirm_infeasible(st, &violation, options.trace))
    return package(p, st, out, SolveStatus::Infeasible);
  if (confirm_unbounded(st, options.trace)) return package(p, st, out, SolveStatus::Unbounded);
  return package(p, st, out, SolveStatus::IterationLimit);
}

}  // namespace

QpSolution solve_qp(const QpProblem& problem, const SolveOptions& options) {
  return solve_impl(problem, options, true);
}

QpSolution solve_lp(const QpProblem& problem, const SolveOptions& options) {
  if (!problem.quadratic.empty())
    throw std::invalid_argument("solve_lp: problem carries quadratic terms");
  return solve_impl(problem, options, false);
}

std::string describe(const QpProblem& problem) {
  std::size_t eq_nnz = 0, ineq_nnz = 0;
  double rhs_max = 0.0;
  for (const LinearRow& row : problem.equalities) {
    eq_nnz += row.terms.size();
    rhs_max = std::max(rhs_max, std::abs(row.rhs));
  }
  for (const LinearRow& row : problem.inequalities) {
    ineq_nnz += row.terms.size();
    rhs_max = std::max(rhs_max, std::abs(row.rhs));
  }
  int bounded = 0;
  for (double v : problem.lower)
    if (v > -kInf) ++bounded;
  for (double v : problem.upper)
    if (v < kInf) ++bounded;
  std::ostringstream out;
  out << "qp: n=" << problem.variable_count << " quad=" << problem.quadratic.size()
      << " eq=" << problem.equalities.size() << "(nnz " << eq_nnz << ")"
      << " ineq=" << problem.inequalities.size() << "(nnz " << ineq_nnz << ")"
      << " bounds=" << bounded << " max|rhs|=" << rhs_max;
  return out.str();
}

}  // namespace hydrodispatch
