#include "coordrp/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

namespace coordrp::lp {

namespace {

// Minimum magnitude for an acceptable pivot element.
constexpr double kPivTol = 1e-9;

// How an original variable maps onto nonnegative computational columns.
struct VarMap {
  enum Kind { Shifted, Mirrored, Split } kind = Shifted;
  int col = -1;       // primary column
  int col_neg = -1;   // negative part (Split only)
  double offset = 0;  // lo (Shifted) or up (Mirrored)
};

// Dense bounded-variable simplex working state.
//
// Tableau layout: rows 0..m-1 are constraint rows (kept in reduced form, the
// basis columns are unit vectors), row m is the phase-1 cost row and row m+1
// the phase-2 cost row; both are reduced alongside the constraint rows so the
// entries are reduced costs.  Column ntot is the right-hand side.  Every
// nonbasic column logically sits at value 0; a column whose variable is
// actually at its upper bound is stored substituted (z' = ub - z), tracked by
// the `flipped` flag, so the textbook "all nonbasic at lower bound" pivot
// rules apply unchanged.
struct Tableau {
  int m = 0;     // constraint rows
  int ntot = 0;  // computational + slack + artificial columns
  std::vector<double> a;       // (m+2) x (ntot+1)
  std::vector<int> basis;      // basic column per row
  std::vector<double> ub;      // per-column upper bound (lower is 0)
  std::vector<char> flipped;   // column currently substituted z' = ub - z
  std::vector<char> banned;    // column may never enter (artificials, fixed)
  std::vector<char> is_basic;

  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * (ntot + 1); }
  double& at(int r, int c) { return row(r)[c]; }
  double& rhs(int r) { return row(r)[ntot]; }

  // Substitute column j by z' = ub - z: negate the column in every row and
  // absorb ub * column into the right-hand side.
  void flip(int j) {
    const double bound = ub[j];
    for (int r = 0; r < m + 2; ++r) {
      double* rw = row(r);
      rw[ntot] -= bound * rw[j];
      rw[j] = -rw[j];
    }
    flipped[j] = !flipped[j];
  }

  void pivot(int prow, int pcol) {
    double* pr = row(prow);
    const double inv = 1.0 / pr[pcol];
    for (int c = 0; c <= ntot; ++c) pr[c] *= inv;
    pr[pcol] = 1.0;
    for (int r = 0; r < m + 2; ++r) {
      if (r == prow) continue;
      double* rw = row(r);
      const double f = rw[pcol];
      if (f == 0.0) continue;
      for (int c = 0; c <= ntot; ++c) rw[c] -= f * pr[c];
      rw[pcol] = 0.0;
    }
    is_basic[basis[prow]] = 0;
    basis[prow] = pcol;
    is_basic[pcol] = 1;
  }

  void log(const char* tag) const {
    std::fprintf(stderr, "[lp] %s: m=%d ntot=%d\n", tag, m, ntot);
    if (m <= 8 && ntot <= 12) {
      for (int r = 0; r < m + 2; ++r) {
        std::fprintf(stderr, "[lp]  ");
        const double* rw = a.data() + static_cast<std::size_t>(r) * (ntot + 1);
        for (int c = 0; c <= ntot; ++c) std::fprintf(stderr, " % 9.4f", rw[c]);
        std::fprintf(stderr, "\n");
      }
    }
  }
};

}  // namespace

LpSolution solve(const LinearProgram& lp, const SolveOptions& opts) {
  const int n = lp.num_vars();
  const int m = lp.num_constraints();
  const double tol = opts.tol;

  // ---- map original variables onto nonnegative computational columns ------
  std::vector<VarMap> vmap(n);
  int ncomp = 0;
  for (int j = 0; j < n; ++j) {
    const double lo = lp.lower(j), hi = lp.upper(j);
    if (std::isinf(lo) && std::isinf(hi)) {
      vmap[j] = {VarMap::Split, ncomp, ncomp + 1, 0.0};
      ncomp += 2;
    } else if (std::isinf(lo)) {
      vmap[j] = {VarMap::Mirrored, ncomp++, -1, hi};
    } else {
      vmap[j] = {VarMap::Shifted, ncomp++, -1, lo};
    }
  }

  std::vector<int> slack_of(m, -1);
  int nslack = 0;
  for (int r = 0; r < m; ++r) {
    if (lp.constraints()[r].rel != Relation::Equal) slack_of[r] = nslack++;
  }

  // Transformed rows, before artificial assignment.
  std::vector<std::vector<double>> rowdata(m);
  std::vector<double> rowrhs(m);
  for (int r = 0; r < m; ++r) {
    const Constraint& con = lp.constraints()[r];
    std::vector<double> rw(ncomp + nslack, 0.0);
    double b = con.rhs;
    for (int j = 0; j < n; ++j) {
      const double c = con.coeffs[j];
      if (c == 0.0) continue;
      switch (vmap[j].kind) {
        case VarMap::Shifted:
          rw[vmap[j].col] += c;
          b -= c * vmap[j].offset;
          break;
        case VarMap::Mirrored:
          rw[vmap[j].col] -= c;
          b -= c * vmap[j].offset;
          break;
        case VarMap::Split:
          rw[vmap[j].col] += c;
          rw[vmap[j].col_neg] -= c;
          break;
      }
    }
    if (con.rel == Relation::LessEqual) rw[ncomp + slack_of[r]] = 1.0;
    if (con.rel == Relation::GreaterEqual) rw[ncomp + slack_of[r]] = -1.0;
    if (b < 0.0) {
      for (double& x : rw) x = -x;
      b = -b;
    }
    rowdata[r] = std::move(rw);
    rowrhs[r] = b;
  }
  double rhs_scale = 0.0;
  for (int r = 0; r < m; ++r) rhs_scale = std::max(rhs_scale, rowrhs[r]);

  // Rows whose slack survived negation with +1 start with the slack basic;
  // everything else gets an artificial.
  std::vector<int> art_of(m, -1);
  int nart = 0;
  for (int r = 0; r < m; ++r) {
    const bool slack_ok =
        slack_of[r] >= 0 && rowdata[r][ncomp + slack_of[r]] == 1.0;
    if (!slack_ok) art_of[r] = nart++;
  }

  Tableau tb;
  tb.m = m;
  tb.ntot = ncomp + nslack + nart;
  tb.a.assign(static_cast<std::size_t>(m + 2) * (tb.ntot + 1), 0.0);
  tb.basis.assign(m, -1);
  tb.ub.assign(tb.ntot, kInf);
  tb.flipped.assign(tb.ntot, 0);
  tb.banned.assign(tb.ntot, 0);
  tb.is_basic.assign(tb.ntot, 0);

  for (int j = 0; j < n; ++j) {
    if (vmap[j].kind == VarMap::Shifted) {
      const double w = lp.upper(j) - lp.lower(j);
      tb.ub[vmap[j].col] = w;
      if (w == 0.0) tb.banned[vmap[j].col] = 1;  // fixed variable
    }
  }

  for (int r = 0; r < m; ++r) {
    double* rw = tb.row(r);
    std::copy(rowdata[r].begin(), rowdata[r].end(), rw);
    if (art_of[r] >= 0) rw[ncomp + nslack + art_of[r]] = 1.0;
    tb.rhs(r) = rowrhs[r];
    const int bcol = art_of[r] >= 0 ? ncomp + nslack + art_of[r]
                                    : ncomp + slack_of[r];
    tb.basis[r] = bcol;
    tb.is_basic[bcol] = 1;
  }

  // Phase-1 cost row: minimize the sum of artificials.  Phase-2 cost row:
  // the real objective mapped through the variable substitutions (constant
  // terms dropped; the reported objective is recomputed from the primal).
  {
    double* c1 = tb.row(m);
    for (int k = 0; k < nart; ++k) c1[ncomp + nslack + k] = 1.0;
    double* c2 = tb.row(m + 1);
    if (lp.sense() != Sense::FeasibilityOnly) {
      const double sgn = lp.sense() == Sense::Maximize ? -1.0 : 1.0;
      for (int j = 0; j < n; ++j) {
        const double c = sgn * lp.objective()[j];
        if (c == 0.0) continue;
        switch (vmap[j].kind) {
          case VarMap::Shifted: c2[vmap[j].col] += c; break;
          case VarMap::Mirrored: c2[vmap[j].col] -= c; break;
          case VarMap::Split:
            c2[vmap[j].col] += c;
            c2[vmap[j].col_neg] -= c;
            break;
        }
      }
    }
    // Reduce both cost rows against the initial basis.
    for (int r = 0; r < m; ++r) {
      for (int crow : {m, m + 1}) {
        const double cb = tb.at(crow, tb.basis[r]);
        if (cb == 0.0) continue;
        double* target = tb.row(crow);
        const double* src = tb.row(r);
        for (int c = 0; c <= tb.ntot; ++c) target[c] -= cb * src[c];
        target[tb.basis[r]] = 0.0;
      }
    }
  }

  const long size_scale = static_cast<long>(m) + tb.ntot;
  const long max_iters =
      opts.max_iterations > 0 ? opts.max_iterations : 5000 + 20 * size_scale;
  const long bland_after = 500 + 2 * size_scale;
  long iters = 0;

  std::vector<double> col(m);
  std::vector<char> ghost(tb.ntot, 0);

  // Runs one simplex phase to optimality on cost row `crow`.
  // Returns false if the phase detected unboundedness.
  auto run_phase = [&](int crow) -> bool {
    std::fill(ghost.begin(), ghost.end(), 0);
    for (;;) {
      if (opts.log_tableau) tb.log(crow == m ? "phase1" : "phase2");
      const bool bland = iters > bland_after;
      const double* cost = tb.row(crow);

      int enter = -1;
      double best = -tol;
      for (int j = 0; j < tb.ntot; ++j) {
        if (tb.is_basic[j] || tb.banned[j] || ghost[j]) continue;
        const double d = cost[j];
        if (d < best) {
          enter = j;
          if (bland) break;
          best = d;
        }
      }
      if (enter < 0) return true;  // phase optimal

      for (int r = 0; r < m; ++r) col[r] = tb.at(r, enter);

      // Ratio test: entering moves up from 0 by t.  Blockers are the entering
      // variable's own upper bound (flip), a basic variable driven to 0, or a
      // basic variable driven to its upper bound (leaves flipped).
      double limit = tb.ub[enter];
      int block_row = -1;
      bool block_at_upper = false;
      for (int r = 0; r < m; ++r) {
        const double y = col[r];
        if (y > kPivTol) {
          const double t = std::max(tb.rhs(r), 0.0) / y;
          if (t < limit - 1e-12 ||
              (block_row >= 0 && t < limit + 1e-12 &&
               (bland ? tb.basis[r] < tb.basis[block_row]
                      : std::abs(y) > std::abs(col[block_row])))) {
            limit = t;
            block_row = r;
            block_at_upper = false;
          }
        } else if (y < -kPivTol) {
          const double cap = tb.ub[tb.basis[r]];
          if (std::isinf(cap)) continue;
          const double t = (cap - tb.rhs(r)) / (-y);
          if (t < limit - 1e-12 ||
              (block_row >= 0 && t < limit + 1e-12 &&
               (bland ? tb.basis[r] < tb.basis[block_row]
                      : std::abs(y) > std::abs(col[block_row])))) {
            limit = t;
            block_row = r;
            block_at_upper = true;
          }
        }
      }

      if (block_row < 0) {
        if (std::isinf(limit)) {
          // No row blocks and the entering bound is infinite.  The phase-1
          // objective is bounded below by zero, so in phase 1 this can only
          // be a column whose remaining entries sank below the pivot
          // tolerance; the same holds in phase 2 when the promised
          // improvement rate is itself near tolerance.  Such ghost columns
          // are retired from the phase instead of being reported as an
          // unbounded ray.
          if (crow == m || best > -1e3 * tol) {
            ghost[enter] = 1;
            continue;
          }
          return false;  // unbounded direction
        }
        tb.flip(enter);  // bound flip, basis unchanged
      } else {
        if (block_at_upper) tb.flip(tb.basis[block_row]);
        tb.pivot(block_row, enter);
      }

      if (++iters > max_iters)
        throw NumericError("lp: pivot iteration cap exceeded (" +
                           std::to_string(max_iters) + ")");
    }
  };

  LpSolution sol;

  if (!run_phase(m)) throw NumericError("lp: phase 1 reported unbounded");
  if (-tb.rhs(m) > tol * (1.0 + rhs_scale)) {
    sol.status = SolveStatus::Infeasible;
    sol.iterations = iters;
    return sol;
  }

  // Retire artificials: ban them from entering and pivot basic ones out where
  // possible; rows that cannot release their artificial are redundant and
  // stay inert (all-zero over real columns).
  for (int k = 0; k < nart; ++k) tb.banned[ncomp + nslack + k] = 1;
  for (int r = 0; r < m; ++r) {
    if (tb.basis[r] < ncomp + nslack) continue;
    for (int j = 0; j < ncomp + nslack; ++j) {
      if (tb.is_basic[j] || tb.banned[j]) continue;
      if (std::abs(tb.at(r, j)) > kPivTol) {
        tb.pivot(r, j);
        break;
      }
    }
  }

  if (lp.sense() != Sense::FeasibilityOnly) {
    if (!run_phase(m + 1)) {
      sol.status = SolveStatus::Unbounded;
      sol.iterations = iters;
      return sol;
    }
  }

  // ---- extract primal in original coordinates ------------------------------
  std::vector<double> zval(tb.ntot, 0.0);
  for (int r = 0; r < m; ++r) zval[tb.basis[r]] = tb.rhs(r);
  for (int j = 0; j < tb.ntot; ++j) {
    if (tb.flipped[j]) zval[j] = tb.ub[j] - zval[j];
  }
  sol.primal.resize(n);
  for (int j = 0; j < n; ++j) {
    switch (vmap[j].kind) {
      case VarMap::Shifted: sol.primal[j] = vmap[j].offset + zval[vmap[j].col]; break;
      case VarMap::Mirrored: sol.primal[j] = vmap[j].offset - zval[vmap[j].col]; break;
      case VarMap::Split:
        sol.primal[j] = zval[vmap[j].col] - zval[vmap[j].col_neg];
        break;
    }
  }

  // Re-substitution check: the reduced tableau should describe a point that
  // still satisfies the original rows.  The allowance is a backward-error
  // bound, scaled by the row's activity so that legitimately large solutions
  // are not rejected for roundoff proportional to their own magnitude.
  for (int r = 0; r < m; ++r) {
    const Constraint& con = lp.constraints()[r];
    double lhs = 0.0, activity = 0.0;
    for (int j = 0; j < n; ++j) {
      lhs += con.coeffs[j] * sol.primal[j];
      activity += std::abs(con.coeffs[j] * sol.primal[j]);
    }
    const double slackv = lhs - con.rhs;
    const double allow =
        64.0 * tol * (1.0 + std::max(std::abs(con.rhs), activity));
    const bool bad = (con.rel == Relation::LessEqual && slackv > allow) ||
                     (con.rel == Relation::GreaterEqual && slackv < -allow) ||
                     (con.rel == Relation::Equal && std::abs(slackv) > allow);
    if (bad) {
      char buf[96];
      std::snprintf(buf, sizeof buf,
                    "lp: solution failed re-substitution (row %d, residual "
                    "%.3g)",
                    r, slackv);
      throw NumericError(buf);
    }
  }

  if (lp.sense() != Sense::FeasibilityOnly) {
    double obj = 0.0;
    for (int j = 0; j < n; ++j) obj += lp.objective()[j] * sol.primal[j];
    sol.objective_value = obj;
  }
  sol.status = SolveStatus::Optimal;
  sol.iterations = iters;
  return sol;
}

}  // namespace coordrp::lp
