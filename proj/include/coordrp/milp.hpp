#pragma once

// Coordination detector: decides whether an observed dataset admits a
// personalized split of every aggregate bundle that (a) respects each agent's
// assignable floor, (b) adds up to the aggregate, and (c) leaves every agent
// consistent with utility maximization (acyclic revealed preferences).  The
// question is encoded as a mixed-integer feasibility program over quantities
// q_t^i, expenditures eta_t^i = alpha_t' q_t^i, and binary revealed-preference
// indicators x_st^i, and decided by LP-based branch and bound that branches
// on violated preference-cycle disjunctions.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "coordrp/dataset.hpp"

namespace coordrp::milp {

// Relative scale for the strict-preference margin: a purchase counts as
// revealed preferred only when it beats the alternative by more than
// kEpsilonScale * max_t(group expenditure).
inline constexpr double kEpsilonScale = 1e-6;

// One revealed-preference indicator x_{st}^i ("agent i weakly prefers its
// observation-s bundle to its observation-t bundle at the s prices").
struct PairVar {
  int agent = 0;
  int s = 0;
  int t = 0;
};

struct MilpProblem {
  core::Dataset dataset;
  double epsilon_strict = 0.0;        // strictness margin (absolute)
  std::vector<double> expenditures;   // y_t = alpha_t' beta_t (big-M constants)
  std::vector<PairVar> binaries;      // lexicographic (agent, s, t), s != t

  int num_quantity_vars() const;      // T * M * N
  int num_expenditure_vars() const;   // T * M
  long num_transitivity_triples() const;  // M * T * (T-1) * (T-2)
};

// Validates the dataset and assembles the instance.  epsilon_strict <= 0
// selects the default kEpsilonScale * max_t y_t.
MilpProblem build_problem(const core::Dataset& data, double epsilon_strict = 0.0);

enum class Decision { Coordinating, NotCoordinating };

struct MilpVerdict {
  Decision decision = Decision::NotCoordinating;
  // Present iff coordinating: a concrete split certifying feasibility, and
  // the revealed-preference indicators it induces (aligned with
  // MilpProblem::binaries).
  std::optional<core::PersonalizedAllocation> witness;
  std::optional<std::vector<std::uint8_t>> binaries;
  long node_count = 0;
  double wall_time_ms = 0.0;
};

struct DecideOptions {
  long node_budget = 1'000'000;
};

// The search hit the node budget before reaching a verdict.  Undecided is a
// distinct outcome from not-coordinating; callers must not conflate them.
class NodeBudgetExceeded : public std::runtime_error {
 public:
  NodeBudgetExceeded(long nodes)
      : std::runtime_error("decide: node budget exceeded after " +
                           std::to_string(nodes) + " nodes"),
        node_count(nodes) {}
  long node_count;
};

MilpVerdict decide(const MilpProblem& problem, const DecideOptions& opts = {});

// Reference detector for the fully observed single-agent case (M = 1 and
// assignable == aggregate): classic transitive-closure acyclicity check on
// the revealed-preference relation.  No tolerance blur: weak preference is
// alpha_s'(beta_s - beta_t) >= 0, violation is a strict reverse inequality.
bool garp_oracle(const core::Dataset& data);

}  // namespace coordrp::milp
