#pragma once

// Self-contained dense linear programming kernel.
//
// Solves   min/max c'x   s.t.   a_r' x {<=,=,>=} b_r,   l <= x <= u
// with a two-phase primal simplex on a dense tableau.  Variable bounds are
// handled natively (bounded-variable simplex), so box constraints such as
// binary relaxations x in [0,1] cost no extra rows.  Determinism: identical
// inputs produce identical pivots and therefore identical solutions.

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace coordrp::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Default feasibility/optimality tolerance (absolute; inputs are expected to
// be reasonably scaled, roughly unit-magnitude coefficients).
inline constexpr double kDefaultTol = 1e-9;

enum class Relation { LessEqual, Equal, GreaterEqual };
enum class Sense { FeasibilityOnly, Minimize, Maximize };
enum class SolveStatus { Optimal, Infeasible, Unbounded };

struct Constraint {
  std::vector<double> coeffs;  // dense, one entry per variable
  Relation rel = Relation::LessEqual;
  double rhs = 0.0;
};

class LinearProgram {
 public:
  explicit LinearProgram(int num_vars)
      : num_vars_(num_vars),
        objective_(num_vars, 0.0),
        lower_(num_vars, 0.0),
        upper_(num_vars, kInf) {
    if (num_vars < 1) throw std::invalid_argument("LinearProgram: need >= 1 variable");
  }

  int num_vars() const { return num_vars_; }
  int num_constraints() const { return static_cast<int>(rows_.size()); }

  void set_objective(std::vector<double> c, Sense sense) {
    if (static_cast<int>(c.size()) != num_vars_)
      throw std::invalid_argument("set_objective: coefficient count mismatch");
    objective_ = std::move(c);
    sense_ = sense;
  }

  void set_bounds(int var, double lo, double hi) {
    if (var < 0 || var >= num_vars_)
      throw std::invalid_argument("set_bounds: variable index out of range");
    if (lo > hi) throw std::invalid_argument("set_bounds: lower exceeds upper");
    lower_[var] = lo;
    upper_[var] = hi;
  }

  int add_constraint(std::vector<double> coeffs, Relation rel, double rhs) {
    if (static_cast<int>(coeffs.size()) != num_vars_)
      throw std::invalid_argument("add_constraint: coefficient count mismatch");
    rows_.push_back({std::move(coeffs), rel, rhs});
    return static_cast<int>(rows_.size()) - 1;
  }

  const std::vector<Constraint>& constraints() const { return rows_; }
  const std::vector<double>& objective() const { return objective_; }
  Sense sense() const { return sense_; }
  double lower(int var) const { return lower_[var]; }
  double upper(int var) const { return upper_[var]; }

 private:
  int num_vars_;
  Sense sense_ = Sense::FeasibilityOnly;
  std::vector<double> objective_;
  std::vector<double> lower_, upper_;
  std::vector<Constraint> rows_;
};

struct LpSolution {
  SolveStatus status = SolveStatus::Infeasible;
  std::vector<double> primal;       // meaningful when status == Optimal
  double objective_value = 0.0;     // 0 for FeasibilityOnly
  long iterations = 0;              // simplex pivots over both phases
};

struct SolveOptions {
  double tol = kDefaultTol;
  long max_iterations = 0;  // 0 -> automatic cap based on problem size
  bool log_tableau = false; // dump tableau snapshots to stderr (small LPs)
};

// Pivoting exceeded the iteration cap; signals ill-conditioning to the caller.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

LpSolution solve(const LinearProgram& lp, const SolveOptions& opts = {});

}  // namespace coordrp::lp
