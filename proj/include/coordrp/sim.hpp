#pragma once

// Forward model of a coordinating multi-agent resource network.  Generates
// probe (price) signals, computes the group's Pareto-optimal allocation of a
// shared budget across agents via a weighted-sum solver, and applies the
// partial-observation measurement model (exact aggregate, per-agent scaled
// floors) to produce datasets for the detector.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coordrp/dataset.hpp"
#include "coordrp/rng.hpp"

namespace coordrp::sim {

// Objective tolerance for the allocation solver: the returned bundles'
// weighted objective is within this of the best value any verifier should be
// able to find.
inline constexpr double kOptTol = 1e-6;

enum class UtilityKind {
  Product,       // prod_k beta(k)
  Sum,           // sum_k beta(k)
  PowerProduct,  // prod_k beta(k)^{a_k}, 0 < a_k <= 1
};

struct AgentSpec {
  UtilityKind utility = UtilityKind::Sum;
  std::vector<double> exponents;  // PowerProduct only; empty otherwise
  double weight = 1.0;            // Pareto weight mu^i > 0
};

struct NetworkSpec {
  std::vector<AgentSpec> agents;
  double budget = 1.0;  // C
  int num_goods = 2;    // N

  int num_agents() const { return static_cast<int>(agents.size()); }
};

// Three-radar demo network: product / sum / sqrt-weighted power product with
// Pareto weights (0.3, 0.3, 0.4), unit budget, two goods.
NetworkSpec demo_network();

// Structural checks: at least one agent, positive weights summing to one,
// positive budget, PowerProduct exponents in (0, 1] matching num_goods, no
// exponents on the other families.  Empty result iff well-formed.
std::vector<std::string> validate_network(const NetworkSpec& spec);

// Utility value of one agent at a componentwise nonnegative bundle.
double agent_utility(const AgentSpec& agent, std::span<const double> beta);

// Network spec serialization.  The canonical on-disk form is a JSON array of
// {"utility": "product"|"sum"|"powerprod", "exponents": [...], "weight": mu}
// with budget 1 and two goods; a wrapper object {"budget", "goods", "agents"}
// overrides those defaults.
std::string network_to_json(const NetworkSpec& spec);
NetworkSpec network_from_json(const std::string& text,
                              const std::string& origin = "");
NetworkSpec read_network(const std::filesystem::path& path);
void write_network(const NetworkSpec& spec, const std::filesystem::path& path);

// The weighted-sum solver failed to produce a budget-feasible maximizer
// (signals a pathological network spec; never returned silently).
class AllocationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One probe: every component i.i.d. uniform on (0.1, 1.1).
core::Probe sample_probe(Rng& rng, int num_goods);

// Pareto-optimal allocation: maximizes sum_i mu_i U^i(zeta_i) subject to
// alpha'(sum_i zeta_i) <= budget, zeta >= 0.  Deterministic (multi-start
// seeds are fixed); the budget constraint binds on return.  Throws
// std::invalid_argument on a malformed spec/probe and AllocationError when
// no candidate converges.
std::vector<core::Vec> allocate(const NetworkSpec& spec,
                                const core::Probe& probe);

// Weighted objective sum_i mu_i U^i(bundles[i]) for diagnostics and tests.
double weighted_objective(const NetworkSpec& spec,
                          std::span<const core::Vec> bundles);

// Measurement model: the aggregate is the exact componentwise sum of the
// bundles; each agent's assignable floor is its bundle scaled by an
// independent factor S_i ~ Unif(0.1, 1).  observe draws the factors from
// rng (one per agent, in agent order); observe_with_factors is the pure
// kernel used by both the simulator and boundary tests.
core::Observation observe(const core::Probe& probe,
                          const std::vector<core::Vec>& bundles, Rng& rng);
core::Observation observe_with_factors(const core::Probe& probe,
                                       const std::vector<core::Vec>& bundles,
                                       std::span<const double> factors);

struct SimulationResult {
  core::Dataset dataset;
  // Hidden per-agent truth bundles, never written into the dataset file.
  core::PersonalizedAllocation truth;
};

// Coordinated forward run: T probes, Pareto-optimal responses, partial
// observations.  Deterministic given (spec, T, seed); probe and measurement
// randomness use separate sub-streams of the seed.
SimulationResult simulate(const NetworkSpec& spec, int horizon,
                          std::uint64_t seed);

// Null model for the Type-II study: per-agent bundles i.i.d. uniform on
// (0, 1)^N with no shared objective, observed in full (assignable floors
// equal the bundles).  Full visibility pins the personalized split to the
// truth, which is what gives the detector statistical power against
// independent behaviour; partially observed floors leave enough freedom
// that almost any independent dataset admits some coordinating split.
SimulationResult simulate_independent(int num_agents, int horizon,
                                      std::uint64_t seed, int num_goods = 2);

}  // namespace coordrp::sim
