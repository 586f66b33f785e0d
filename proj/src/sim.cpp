#include "coordrp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "json_util.hpp"

namespace coordrp::sim {

namespace {

using core::Vec;
using ordered_json = nlohmann::ordered_json;

// Fixed base seed for the solver's interior multi-starts; allocate must be a
// pure function of (spec, probe).
constexpr std::uint64_t kMultiStartSeed = 0xa110c47e5eedULL;
constexpr int kMultiStarts = 5;

// Floor applied to bundle components when differentiating fractional powers
// (the derivative of b^a diverges at b = 0 for a < 1).
constexpr double kGradFloor = 1e-12;

double exponent_total(const AgentSpec& agent) {
  double total = 0.0;
  for (double a : agent.exponents) total += a;
  return total;
}

// Exact within-agent optimum at a given spend level: linear utilities put
// the whole spend on the cheapest good; the (power-)product families split
// spend in proportion to their exponents (first-order conditions along the
// agent's budget line, where all three families are concave).
Vec inner_split(const AgentSpec& agent, double spend, const Vec& alpha) {
  const int N = static_cast<int>(alpha.size());
  Vec zeta(N, 0.0);
  if (!(spend > 0.0)) return zeta;
  switch (agent.utility) {
    case UtilityKind::Sum: {
      int best = 0;
      for (int k = 1; k < N; ++k)
        if (alpha[k] < alpha[best]) best = k;
      zeta[best] = spend / alpha[best];
      break;
    }
    case UtilityKind::Product: {
      for (int k = 0; k < N; ++k) zeta[k] = spend / (N * alpha[k]);
      break;
    }
    case UtilityKind::PowerProduct: {
      const double total = exponent_total(agent);
      for (int k = 0; k < N; ++k)
        zeta[k] = spend * agent.exponents[k] / (total * alpha[k]);
      break;
    }
  }
  return zeta;
}

// Weighted utility of agent i when it spends `spend` optimally.
double share_value(const NetworkSpec& spec, int i, double spend,
                   const Vec& alpha) {
  const AgentSpec& agent = spec.agents[i];
  const Vec zeta = inner_split(agent, spend, alpha);
  return agent.weight * agent_utility(agent, zeta);
}

struct Candidate {
  std::vector<Vec> bundles;
  double value = -1.0;
};

Candidate from_shares(const NetworkSpec& spec, const Vec& alpha,
                      const Vec& shares) {
  Candidate c;
  c.bundles.reserve(spec.agents.size());
  for (std::size_t i = 0; i < spec.agents.size(); ++i)
    c.bundles.push_back(inner_split(spec.agents[i], shares[i], alpha));
  c.value = weighted_objective(spec, c.bundles);
  return c;
}

// Block-coordinate ascent on budget shares: repeatedly re-optimizes the
// spend transferred between each pair of agents (dense 1-d scan plus a local
// golden-section refinement, so corner optima of convex share responses and
// interior optima of concave ones are both found).
void polish_shares(const NetworkSpec& spec, const Vec& alpha, Vec& shares) {
  const int M = spec.num_agents();
  constexpr int kScan = 64;
  constexpr double kGolden = 0.6180339887498949;
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool improved = false;
    for (int i = 0; i < M; ++i) {
      for (int j = i + 1; j < M; ++j) {
        const double lo = -shares[i], hi = shares[j];
        if (hi - lo <= 0.0) continue;
        const auto moved = [&](double t) {
          return share_value(spec, i, shares[i] + t, alpha) +
                 share_value(spec, j, shares[j] - t, alpha);
        };
        const double base = moved(0.0);
        double best_t = 0.0, best_v = base;
        for (int k = 0; k <= kScan; ++k) {
          const double t = lo + (hi - lo) * k / kScan;
          const double v = moved(t);
          if (v > best_v) {
            best_v = v;
            best_t = t;
          }
        }
        double a = std::max(lo, best_t - (hi - lo) / kScan);
        double b = std::min(hi, best_t + (hi - lo) / kScan);
        double x1 = b - kGolden * (b - a), x2 = a + kGolden * (b - a);
        double f1 = moved(x1), f2 = moved(x2);
        for (int it = 0; it < 48; ++it) {
          if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kGolden * (b - a);
            f2 = moved(x2);
          } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kGolden * (b - a);
            f1 = moved(x1);
          }
        }
        const double mid = 0.5 * (a + b);
        const double vm = moved(mid);
        if (vm > best_v) {
          best_v = vm;
          best_t = mid;
        }
        if (best_v > base + 1e-15 * (1.0 + std::abs(base))) {
          shares[i] += best_t;
          shares[j] -= best_t;
          shares[i] = std::max(shares[i], 0.0);
          shares[j] = std::max(shares[j], 0.0);
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
}

// Gradient of the weighted-sum objective in the flattened bundle vector.
void gradient(const NetworkSpec& spec, const std::vector<double>& z,
              std::vector<double>& g) {
  const int N = spec.num_goods;
  for (int i = 0; i < spec.num_agents(); ++i) {
    const AgentSpec& agent = spec.agents[i];
    const double* beta = z.data() + static_cast<std::size_t>(i) * N;
    double* gi = g.data() + static_cast<std::size_t>(i) * N;
    switch (agent.utility) {
      case UtilityKind::Sum:
        for (int k = 0; k < N; ++k) gi[k] = agent.weight;
        break;
      case UtilityKind::Product:
        for (int k = 0; k < N; ++k) {
          double prod = 1.0;
          for (int j = 0; j < N; ++j)
            if (j != k) prod *= std::max(beta[j], 0.0);
          gi[k] = agent.weight * prod;
        }
        break;
      case UtilityKind::PowerProduct:
        for (int k = 0; k < N; ++k) {
          const double ak = agent.exponents[k];
          double prod = ak * std::pow(std::max(beta[k], kGradFloor), ak - 1.0);
          for (int j = 0; j < N; ++j)
            if (j != k)
              prod *= std::pow(std::max(beta[j], 0.0), agent.exponents[j]);
          gi[k] = agent.weight * prod;
        }
        break;
    }
  }
}

// Euclidean projection onto {x >= 0, cost'x <= budget}: clamp, and when the
// budget is exceeded find the multiplier theta with
// sum_j cost_j * max(x_j - theta * cost_j, 0) = budget by walking the sorted
// breakpoints x_j / cost_j.
void project(std::vector<double>& z, const std::vector<double>& cost,
             double budget) {
  for (double& v : z) v = std::max(v, 0.0);
  double spend = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) spend += cost[j] * z[j];
  if (spend <= budget) return;

  std::vector<int> idx;
  double s = 0.0, w = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (z[j] > 0.0) {
      idx.push_back(static_cast<int>(j));
      s += cost[j] * z[j];
      w += cost[j] * cost[j];
    }
  }
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return z[a] / cost[a] < z[b] / cost[b];
  });
  double theta = 0.0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    theta = (s - budget) / w;
    const int j = idx[r];
    if (theta <= z[j] / cost[j]) break;
    s -= cost[j] * z[j];
    w -= cost[j] * cost[j];
  }
  for (std::size_t j = 0; j < z.size(); ++j)
    z[j] = std::max(z[j] - theta * cost[j], 0.0);
}

double flat_objective(const NetworkSpec& spec, const std::vector<double>& z) {
  const int N = spec.num_goods;
  double total = 0.0;
  for (int i = 0; i < spec.num_agents(); ++i) {
    const std::span<const double> beta(
        z.data() + static_cast<std::size_t>(i) * N, static_cast<std::size_t>(N));
    total += spec.agents[i].weight * agent_utility(spec.agents[i], beta);
  }
  return total;
}

// Projected-gradient ascent from one random interior point with backtracking
// line search; the objective never decreases.
std::vector<double> gradient_ascend(const NetworkSpec& spec, const Vec& alpha,
                                    const std::vector<double>& cost,
                                    std::uint64_t seed) {
  const int n = spec.num_agents() * spec.num_goods;
  Rng rng(seed);
  std::vector<double> z(n);
  for (double& v : z) v = rng.uniform(0.2, 1.0);
  double spend = 0.0;
  for (int j = 0; j < n; ++j) spend += cost[j] * z[j];
  for (double& v : z) v *= 0.9 * spec.budget / spend;

  double f = flat_objective(spec, z);
  double alpha_max = *std::max_element(alpha.begin(), alpha.end());
  double step = 0.25 * spec.budget / alpha_max;
  std::vector<double> g(n), trial(n);
  for (int iter = 0; iter < 500; ++iter) {
    gradient(spec, z, g);
    double eta = step;
    bool accepted = false;
    for (int bt = 0; bt < 40 && !accepted; ++bt) {
      trial = z;
      for (int j = 0; j < n; ++j) trial[j] += eta * g[j];
      project(trial, cost, spec.budget);
      const double ft = flat_objective(spec, trial);
      if (ft > f) {
        const double gain = ft - f;
        z.swap(trial);
        f = ft;
        step = eta * 1.5;
        accepted = true;
        if (gain <= 1e-14 * (1.0 + std::abs(f))) return z;
      } else {
        eta *= 0.5;
      }
    }
    if (!accepted) break;
  }
  return z;
}

// Earlier candidates win ties (up to FP noise): the exact share-space
// closed forms are considered first, so an iterative candidate only
// replaces them when it is genuinely better.
void consider(Candidate&& cand, Candidate& best) {
  if (cand.value > best.value + 1e-12 * (1.0 + std::abs(best.value)))
    best = std::move(cand);
}

std::string utility_name(UtilityKind kind) {
  switch (kind) {
    case UtilityKind::Product:
      return "product";
    case UtilityKind::Sum:
      return "sum";
    case UtilityKind::PowerProduct:
      return "powerprod";
  }
  return "?";
}

}  // namespace

NetworkSpec demo_network() {
  NetworkSpec spec;
  spec.budget = 1.0;
  spec.num_goods = 2;
  spec.agents = {
      {UtilityKind::Product, {}, 0.3},
      {UtilityKind::Sum, {}, 0.3},
      {UtilityKind::PowerProduct, {0.5, 1.0}, 0.4},
  };
  return spec;
}

std::vector<std::string> validate_network(const NetworkSpec& spec) {
  std::vector<std::string> out;
  if (spec.agents.empty()) out.push_back("network must contain at least one agent");
  if (!(spec.budget > 0.0)) out.push_back("budget must be > 0");
  if (spec.num_goods < 1) out.push_back("num_goods must be >= 1");
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < spec.agents.size(); ++i) {
    const AgentSpec& agent = spec.agents[i];
    const std::string who = "agent " + std::to_string(i + 1);
    if (!(agent.weight > 0.0)) out.push_back(who + ": weight must be > 0");
    weight_sum += agent.weight;
    if (agent.utility == UtilityKind::PowerProduct) {
      if (static_cast<int>(agent.exponents.size()) != spec.num_goods) {
        out.push_back(who + ": powerprod needs one exponent per good");
      } else {
        for (double a : agent.exponents)
          if (!(a > 0.0) || a > 1.0) {
            out.push_back(who + ": powerprod exponents must lie in (0, 1]");
            break;
          }
      }
    } else if (!agent.exponents.empty()) {
      out.push_back(who + ": exponents are only valid for powerprod");
    }
  }
  if (!spec.agents.empty() && std::abs(weight_sum - 1.0) > 1e-9)
    out.push_back("pareto weights must sum to 1 (got " +
                  core::format_double(weight_sum) + ")");
  return out;
}

double agent_utility(const AgentSpec& agent, std::span<const double> beta) {
  switch (agent.utility) {
    case UtilityKind::Sum: {
      double acc = 0.0;
      for (double b : beta) acc += b;
      return acc;
    }
    case UtilityKind::Product: {
      double acc = 1.0;
      for (double b : beta) acc *= b;
      return acc;
    }
    case UtilityKind::PowerProduct: {
      double acc = 1.0;
      for (std::size_t k = 0; k < beta.size(); ++k)
        acc *= std::pow(std::max(beta[k], 0.0), agent.exponents[k]);
      return acc;
    }
  }
  return 0.0;
}

std::string network_to_json(const NetworkSpec& spec) {
  ordered_json agents = ordered_json::array();
  for (const AgentSpec& agent : spec.agents) {
    ordered_json a;
    a["utility"] = utility_name(agent.utility);
    if (agent.utility == UtilityKind::PowerProduct)
      a["exponents"] = agent.exponents;
    a["weight"] = agent.weight;
    agents.push_back(std::move(a));
  }
  if (spec.budget == 1.0 && spec.num_goods == 2) return agents.dump(2) + "\n";
  ordered_json root;
  root["budget"] = spec.budget;
  root["goods"] = spec.num_goods;
  root["agents"] = std::move(agents);
  return root.dump(2) + "\n";
}

NetworkSpec network_from_json(const std::string& text,
                              const std::string& origin) {
  const ordered_json root = detail::parse_checked(text, origin);
  NetworkSpec spec;
  const ordered_json* agents = nullptr;
  if (root.is_array()) {
    agents = &root;
  } else {
    detail::require(root.is_object(), origin,
                    "top level must be an array of agents or an object");
    detail::require(root.contains("agents") && root["agents"].is_array(),
                    origin, "missing array field 'agents'");
    agents = &root["agents"];
    if (root.contains("budget")) {
      detail::require(root["budget"].is_number(), origin,
                      "'budget' must be a number");
      spec.budget = root["budget"].get<double>();
    }
    if (root.contains("goods")) {
      detail::require(root["goods"].is_number_integer(), origin,
                      "'goods' must be an integer");
      spec.num_goods = root["goods"].get<int>();
    }
  }
  for (std::size_t i = 0; i < agents->size(); ++i) {
    const ordered_json& a = (*agents)[i];
    const std::string who = "agent " + std::to_string(i + 1);
    detail::require(a.is_object(), origin, who + " must be an object");
    detail::require(a.contains("utility") && a["utility"].is_string(), origin,
                    who + " missing string field 'utility'");
    detail::require(a.contains("weight") && a["weight"].is_number(), origin,
                    who + " missing numeric field 'weight'");
    AgentSpec agent;
    const std::string kind = a["utility"].get<std::string>();
    if (kind == "product") {
      agent.utility = UtilityKind::Product;
    } else if (kind == "sum") {
      agent.utility = UtilityKind::Sum;
    } else if (kind == "powerprod") {
      agent.utility = UtilityKind::PowerProduct;
    } else {
      detail::require(false, origin,
                      who + ": unknown utility '" + kind +
                          "' (expected product, sum, or powerprod)");
    }
    agent.weight = a["weight"].get<double>();
    if (a.contains("exponents")) {
      detail::require(a["exponents"].is_array(), origin,
                      who + " 'exponents' must be an array of numbers");
      for (const ordered_json& e : a["exponents"]) {
        detail::require(e.is_number(), origin,
                        who + " 'exponents' must be an array of numbers");
        agent.exponents.push_back(e.get<double>());
      }
    }
    spec.agents.push_back(std::move(agent));
  }
  const std::vector<std::string> problems = validate_network(spec);
  if (!problems.empty())
    throw core::SchemaError((origin.empty() ? "<string>" : origin) + ": " +
                            problems.front());
  return spec;
}

NetworkSpec read_network(const std::filesystem::path& path) {
  return network_from_json(detail::read_file(path), path.string());
}

void write_network(const NetworkSpec& spec, const std::filesystem::path& path) {
  detail::write_file(path, network_to_json(spec));
}

core::Probe sample_probe(Rng& rng, int num_goods) {
  if (num_goods < 1)
    throw std::invalid_argument("sample_probe: num_goods must be >= 1");
  core::Probe probe;
  probe.alpha.resize(num_goods);
  for (double& a : probe.alpha) a = rng.uniform(0.1, 1.1);
  return probe;
}

double weighted_objective(const NetworkSpec& spec,
                          std::span<const core::Vec> bundles) {
  double total = 0.0;
  for (std::size_t i = 0; i < spec.agents.size(); ++i)
    total += spec.agents[i].weight *
             agent_utility(spec.agents[i], bundles[i]);
  return total;
}

std::vector<core::Vec> allocate(const NetworkSpec& spec,
                                const core::Probe& probe) {
  {
    const std::vector<std::string> problems = validate_network(spec);
    if (!problems.empty())
      throw std::invalid_argument("allocate: " + problems.front());
  }
  const Vec& alpha = probe.alpha;
  if (static_cast<int>(alpha.size()) != spec.num_goods)
    throw std::invalid_argument("allocate: probe dimension mismatch");
  for (double a : alpha)
    if (!(a > 0.0) || !std::isfinite(a))
      throw std::invalid_argument("allocate: probe components must be > 0");

  const int M = spec.num_agents();
  const int N = spec.num_goods;
  const double C = spec.budget;

  Candidate best;

  // Share-space candidates: every single-agent vertex and the uniform split,
  // each polished by pairwise spend transfers.
  std::vector<Vec> share_starts;
  for (int i = 0; i < M; ++i) {
    Vec shares(M, 0.0);
    shares[i] = C;
    share_starts.push_back(std::move(shares));
  }
  share_starts.emplace_back(M, C / M);
  for (Vec& shares : share_starts) {
    consider(from_shares(spec, alpha, shares), best);
    polish_shares(spec, alpha, shares);
    consider(from_shares(spec, alpha, shares), best);
  }

  // Projected-gradient ascent from fixed random interior points, each
  // followed by the exact within-agent re-split and the share polish.
  std::vector<double> cost(static_cast<std::size_t>(M) * N);
  for (int i = 0; i < M; ++i)
    for (int k = 0; k < N; ++k) cost[static_cast<std::size_t>(i) * N + k] = alpha[k];
  for (int start = 0; start < kMultiStarts; ++start) {
    const std::vector<double> z =
        gradient_ascend(spec, alpha, cost, mix_seed(kMultiStartSeed, start));
    Candidate raw;
    raw.bundles.resize(M);
    for (int i = 0; i < M; ++i)
      raw.bundles[i] =
          Vec(z.begin() + static_cast<std::ptrdiff_t>(i) * N,
              z.begin() + static_cast<std::ptrdiff_t>(i + 1) * N);
    raw.value = weighted_objective(spec, raw.bundles);
    Vec shares(M, 0.0);
    for (int i = 0; i < M; ++i) shares[i] = core::dot(alpha, raw.bundles[i]);
    consider(std::move(raw), best);
    polish_shares(spec, alpha, shares);
    consider(from_shares(spec, alpha, shares), best);
  }

  if (!(best.value >= 0.0) || !std::isfinite(best.value))
    throw AllocationError("allocate: no candidate converged");

  // Exhaust the budget exactly: scaling all bundles never decreases any of
  // the nondecreasing utilities.
  double spend = 0.0;
  for (int i = 0; i < M; ++i) spend += core::dot(alpha, best.bundles[i]);
  if (!(spend > 0.0))
    throw AllocationError("allocate: solver returned a degenerate point");
  const double scale = C / spend;
  for (Vec& bundle : best.bundles)
    for (double& b : bundle) b *= scale;

  spend = 0.0;
  for (int i = 0; i < M; ++i) spend += core::dot(alpha, best.bundles[i]);
  if (std::abs(spend - C) > core::kFeasTol * (1.0 + C))
    throw AllocationError("allocate: budget rescale failed to converge");
  return best.bundles;
}

core::Observation observe_with_factors(const core::Probe& probe,
                                       const std::vector<core::Vec>& bundles,
                                       std::span<const double> factors) {
  if (factors.size() != bundles.size())
    throw std::invalid_argument("observe: one factor per agent required");
  core::Observation ob;
  ob.probe = probe;
  const std::size_t N = bundles.empty() ? 0 : bundles.front().size();
  ob.aggregate.assign(N, 0.0);
  for (const core::Vec& bundle : bundles) {
    if (bundle.size() != N)
      throw std::invalid_argument("observe: ragged bundle list");
    for (std::size_t k = 0; k < N; ++k) ob.aggregate[k] += bundle[k];
  }
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    core::Vec hat(N);
    for (std::size_t k = 0; k < N; ++k) hat[k] = factors[i] * bundles[i][k];
    ob.assignable.push_back(std::move(hat));
  }
  return ob;
}

core::Observation observe(const core::Probe& probe,
                          const std::vector<core::Vec>& bundles, Rng& rng) {
  std::vector<double> factors(bundles.size());
  for (double& s : factors) s = rng.uniform(0.1, 1.0);
  return observe_with_factors(probe, bundles, factors);
}

SimulationResult simulate(const NetworkSpec& spec, int horizon,
                          std::uint64_t seed) {
  {
    const std::vector<std::string> problems = validate_network(spec);
    if (!problems.empty())
      throw std::invalid_argument("simulate: " + problems.front());
  }
  if (horizon < 1) throw std::invalid_argument("simulate: horizon must be >= 1");

  Rng probe_rng(mix_seed(seed, 0));
  Rng measure_rng(mix_seed(seed, 1));

  SimulationResult out;
  out.dataset.num_agents = spec.num_agents();
  out.dataset.num_goods = spec.num_goods;
  out.truth.horizon = horizon;
  out.truth.num_agents = spec.num_agents();
  out.truth.num_goods = spec.num_goods;
  out.truth.q.assign(static_cast<std::size_t>(horizon) * spec.num_agents() *
                         spec.num_goods,
                     0.0);
  for (int t = 0; t < horizon; ++t) {
    const core::Probe probe = sample_probe(probe_rng, spec.num_goods);
    const std::vector<Vec> bundles = allocate(spec, probe);
    out.dataset.observations.push_back(observe(probe, bundles, measure_rng));
    for (int i = 0; i < spec.num_agents(); ++i)
      for (int k = 0; k < spec.num_goods; ++k)
        out.truth.at(t, i, k) = bundles[i][k];
  }
  return out;
}

SimulationResult simulate_independent(int num_agents, int horizon,
                                      std::uint64_t seed, int num_goods) {
  if (num_agents < 1)
    throw std::invalid_argument("simulate_independent: num_agents must be >= 1");
  if (horizon < 1)
    throw std::invalid_argument("simulate_independent: horizon must be >= 1");
  if (num_goods < 1)
    throw std::invalid_argument("simulate_independent: num_goods must be >= 1");

  Rng probe_rng(mix_seed(seed, 0));
  Rng behaviour_rng(mix_seed(seed, 2));

  SimulationResult out;
  out.dataset.num_agents = num_agents;
  out.dataset.num_goods = num_goods;
  out.truth.horizon = horizon;
  out.truth.num_agents = num_agents;
  out.truth.num_goods = num_goods;
  out.truth.q.assign(
      static_cast<std::size_t>(horizon) * num_agents * num_goods, 0.0);
  const std::vector<double> full_visibility(num_agents, 1.0);
  for (int t = 0; t < horizon; ++t) {
    const core::Probe probe = sample_probe(probe_rng, num_goods);
    std::vector<Vec> bundles(num_agents, Vec(num_goods));
    for (int i = 0; i < num_agents; ++i)
      for (int k = 0; k < num_goods; ++k) {
        bundles[i][k] = behaviour_rng.uniform(0.0, 1.0);
        out.truth.at(t, i, k) = bundles[i][k];
      }
    out.dataset.observations.push_back(
        observe_with_factors(probe, bundles, full_visibility));
  }
  return out;
}

}  // namespace coordrp::sim
