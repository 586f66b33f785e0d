#include "coordrp/afriat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "coordrp/lp.hpp"
#include "coordrp/milp.hpp"
#include "coordrp/rng.hpp"

namespace coordrp::afriat {

namespace {

using core::dot;
using ordered_json = nlohmann::ordered_json;

// Residual tolerance accepted when re-checking the inequalities after the
// polish; generous against LP roundoff, far below any decision threshold.
constexpr double kResidualTol = 1e-7;

void check_witness(const core::Dataset& data,
                   const core::PersonalizedAllocation& witness, int agent) {
  if (agent < 0 || agent >= data.num_agents)
    throw std::invalid_argument("agent index out of range");
  const auto violations = core::validate_allocation(data, witness);
  if (!violations.empty())
    throw std::invalid_argument("witness does not fit the dataset: " +
                                core::to_string(violations.front()));
}

// Accepts a candidate certificate only if the reconstructed utility attains
// exactly u_t at its own anchor (the min over pieces, evaluated in the same
// order evaluate() uses, reproduces the intercept bit for bit) and every
// pairwise inequality holds within the residual tolerance.
bool certificate_holds(const core::Dataset& data,
                       const core::PersonalizedAllocation& witness, int agent,
                       const AfriatCertificate& cert,
                       const std::vector<double>& gap) {
  const int T = data.horizon();
  const PiecewiseLinearUtility utility(data, witness, agent, cert);
  for (int t = 0; t < T; ++t) {
    const std::span<const double> beta = utility.anchor(t);
    double fresh = utility.piece_value(0, beta);
    for (int s = 1; s < T; ++s)
      fresh = std::min(fresh, utility.piece_value(s, beta));
    if (fresh != cert.u[t]) return false;
  }
  for (int s = 0; s < T; ++s)
    for (int t = 0; t < T; ++t)
      if (s != t && cert.u[s] - cert.u[t] >
                        cert.lambda[t] * gap[s * T + t] + kResidualTol)
        return false;
  return true;
}

}  // namespace

PiecewiseLinearUtility::PiecewiseLinearUtility(
    const core::Dataset& data, const core::PersonalizedAllocation& witness,
    int agent, const AfriatCertificate& certificate) {
  check_witness(data, witness, agent);
  const int T = data.horizon();
  const int N = data.num_goods;
  if (static_cast<int>(certificate.u.size()) != T ||
      static_cast<int>(certificate.lambda.size()) != T)
    throw std::invalid_argument("certificate length does not match horizon");
  num_goods_ = N;
  u_ = certificate.u;
  lambda_ = certificate.lambda;
  alpha_.resize(static_cast<std::size_t>(T) * N);
  anchor_.resize(static_cast<std::size_t>(T) * N);
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < N; ++k) {
      alpha_[static_cast<std::size_t>(t) * N + k] =
          data.observations[t].probe.alpha[k];
      anchor_[static_cast<std::size_t>(t) * N + k] = witness.at(t, agent, k);
    }
  }
}

std::span<const double> PiecewiseLinearUtility::anchor(int t) const {
  if (t < 0 || t >= num_pieces())
    throw std::out_of_range("piece index out of range");
  return {anchor_.data() + static_cast<std::size_t>(t) * num_goods_,
          static_cast<std::size_t>(num_goods_)};
}

double PiecewiseLinearUtility::piece_value(int t,
                                           std::span<const double> beta) const {
  if (t < 0 || t >= num_pieces())
    throw std::out_of_range("piece index out of range");
  if (static_cast<int>(beta.size()) != num_goods_)
    throw std::invalid_argument("bundle dimension mismatch");
  // The difference is formed first so the anchor evaluates to exactly u_t.
  const std::size_t base = static_cast<std::size_t>(t) * num_goods_;
  double inner = 0.0;
  for (int k = 0; k < num_goods_; ++k)
    inner += alpha_[base + k] * (beta[k] - anchor_[base + k]);
  return u_[t] + lambda_[t] * inner;
}

double PiecewiseLinearUtility::evaluate(std::span<const double> beta) const {
  if (static_cast<int>(beta.size()) != num_goods_)
    throw std::invalid_argument("bundle dimension mismatch");
  for (double b : beta)
    if (!(b >= -core::kFeasTol))
      throw std::invalid_argument("bundle must be componentwise nonnegative");
  double value = piece_value(0, beta);
  for (int t = 1; t < num_pieces(); ++t)
    value = std::min(value, piece_value(t, beta));
  return value;
}

AfriatCertificate solve_certificate(const core::Dataset& data,
                                    const core::PersonalizedAllocation& witness,
                                    int agent) {
  check_witness(data, witness, agent);
  const int T = data.horizon();

  // gap[s][t] = alpha_t' (q_s - q_t): the slope side of the pairwise
  // inequality u_s - u_t <= lambda_t * gap[s][t], evaluated with the same
  // priced-difference arithmetic the reconstructed utility's pieces use.
  std::vector<double> gap(static_cast<std::size_t>(T) * T, 0.0);
  for (int s = 0; s < T; ++s)
    for (int t = 0; t < T; ++t)
      if (s != t)
        gap[s * T + t] =
            core::pair_gap(data.observations[t].probe.alpha,
                           witness.bundle(s, agent), witness.bundle(t, agent));

  // Existence is decided combinatorially: close the "affordable when chosen"
  // relation transitively and reject any strict reversal.  The linear
  // programs below only pick numbers for a system already known solvable.
  {
    std::vector<std::uint8_t> r(static_cast<std::size_t>(T) * T, 0);
    for (int s = 0; s < T; ++s)
      for (int t = 0; t < T; ++t)
        if (s != t && gap[t * T + s] <= 0.0) r[s * T + t] = 1;
    for (int u = 0; u < T; ++u)
      for (int s = 0; s < T; ++s)
        if (r[s * T + u])
          for (int t = 0; t < T; ++t)
            if (r[u * T + t]) r[s * T + t] = 1;
    for (int s = 0; s < T; ++s)
      for (int t = 0; t < T; ++t)
        if (s != t && r[s * T + t] && gap[s * T + t] < 0.0)
          throw CertificateError(
              "no certificate exists: the witness's revealed preferences "
              "admit no positive utility numbers");
  }

  // Margined construction.  Observations whose preferences close onto each
  // other within the strictness margin share one utility intercept, so their
  // mutual pieces dominate that intercept exactly (every in-class slope term
  // is nonnegative); across classes the values are assigned directly, walking
  // the closure's condensation from the most preferred class down, with a
  // margin that absorbs evaluation roundoff at any magnitude.  The result is
  // tight at every anchor with no post-processing and involves no linear
  // program; inputs outside this regime fall back to the program below.
  double ymax = 0.0;
  for (int t = 0; t < T; ++t)
    ymax = std::max(ymax, core::group_expenditure(data, t));
  const double eps = milp::kEpsilonScale * ymax;

  std::vector<std::uint8_t> closed(static_cast<std::size_t>(T) * T, 0);
  for (int s = 0; s < T; ++s)
    for (int t = 0; t < T; ++t)
      if (s != t && gap[t * T + s] < eps) closed[s * T + t] = 1;
  for (int u = 0; u < T; ++u)
    for (int s = 0; s < T; ++s)
      if (closed[s * T + u])
        for (int t = 0; t < T; ++t)
          if (closed[u * T + t]) closed[s * T + t] = 1;
  bool margins_valid = true;
  for (int s = 0; s < T && margins_valid; ++s)
    for (int t = 0; t < T; ++t)
      if (s != t && closed[s * T + t] && gap[s * T + t] < 0.0) {
        margins_valid = false;
        break;
      }

  if (margins_valid) {
    std::vector<int> cls(T, -1);
    int ncls = 0;
    for (int t = 0; t < T; ++t) {
      if (cls[t] >= 0) continue;
      cls[t] = ncls;
      for (int s = t + 1; s < T; ++s)
        if (cls[s] < 0 && closed[s * T + t] && closed[t * T + s]) cls[s] = ncls;
      ++ncls;
    }
    std::vector<std::vector<int>> members(ncls);
    for (int t = 0; t < T; ++t) members[cls[t]].push_back(t);

    // Cross-class closure is a strict partial order (mutually closed
    // observations were merged above), so the classes admit a topological
    // order from the most preferred class down.
    std::vector<int> order;
    std::vector<char> placed(ncls, 0);
    for (int step = 0; step < ncls; ++step) {
      int pick = -1;
      for (int a = 0; a < ncls && pick < 0; ++a) {
        if (placed[a]) continue;
        bool topmost = true;
        for (int b = 0; b < ncls && topmost; ++b) {
          if (b == a || placed[b]) continue;
          for (int s : members[b]) {
            bool above = false;
            for (int t : members[a])
              if (closed[s * T + t]) {
                above = true;
                break;
              }
            if (above) {
              topmost = false;
              break;
            }
          }
        }
        if (topmost) pick = a;
      }
      if (pick < 0) break;
      placed[pick] = 1;
      order.push_back(pick);
    }

    // Walk the order assigning one intercept per class and one multiplier
    // per observation.  Each new intercept sits below every already-assigned
    // piece evaluated at the new anchors; each multiplier is the largest
    // ratio forced by the already-assigned intercepts, and the closure
    // structure guarantees those slopes are at least eps, so no ratio
    // divides by a vanishing gap.  Strict drops between comparable classes
    // can force spreads of many orders of magnitude, so every margin carries
    // a term proportional to the magnitudes of the quantities it separates;
    // that keeps the margins above the roundoff of the utility's own
    // evaluation arithmetic at every scale, which is what makes the
    // certificate tight at its anchors bitwise.
    const double delta = 0.5 * eps;
    const double kRel = 1e-9;
    bool constructed = static_cast<int>(order.size()) == ncls;
    std::vector<double> uval(ncls, 0.0);
    std::vector<double> lam(T, kPositivityFloor);

    const auto attempt = [&](double top) {
      std::fill(lam.begin(), lam.end(), kPositivityFloor);
      std::vector<int> processed;
      double umin = top;
      for (std::size_t j = 0; j < order.size(); ++j) {
        const int c = order[j];
        double uc = top;
        if (j > 0) {
          double bound = umin - delta;
          for (int x : members[c])
            for (int p : processed) {
              const double up = uval[cls[p]];
              const double prod = lam[p] * gap[x * T + p];
              const double safety =
                  delta + kRel * (std::abs(up) + std::abs(prod));
              bound = std::min(bound, up + prod - safety);
            }
          uc = bound;
        }
        uval[c] = uc;
        umin = std::min(umin, uc);
        for (int x : members[c]) {
          double l = kPositivityFloor;
          for (int p : processed) {
            const double g = gap[p * T + x];
            if (!(g >= eps)) return std::numeric_limits<double>::quiet_NaN();
            const double up = uval[cls[p]];
            const double safety = delta + kRel * (std::abs(up) + std::abs(uc));
            l = std::max(l, (up - uc + safety) / g);
          }
          lam[x] = l;
        }
        for (int x : members[c]) processed.push_back(x);
      }
      return umin;
    };

    // An exploratory pass measures how far the intercepts spread; the
    // construction is then re-run from a start value high enough that the
    // least intercept lands at or above the positivity floor.  Re-running
    // (rather than shifting the finished values) keeps every margin
    // consistent with the magnitudes actually stored in the certificate.
    if (constructed) {
      double top = 0.0;
      bool placed_above_floor = false;
      for (int pass = 0; pass < 8; ++pass) {
        const double umin = attempt(top);
        if (std::isnan(umin)) {
          constructed = false;
          break;
        }
        if (umin >= kPositivityFloor) {
          placed_above_floor = true;
          break;
        }
        top = kPositivityFloor + (top - umin) * 1.001;
      }
      if (constructed && placed_above_floor) {
        AfriatCertificate cert;
        cert.u.resize(T);
        for (int t = 0; t < T; ++t) cert.u[t] = uval[cls[t]];
        cert.lambda = lam;
        if (certificate_holds(data, witness, agent, cert, gap)) return cert;
      }
    }
  }

  // Fallback: the unmargined program over per-observation intercepts,
  // followed by a polish of the intercepts to the exact fixpoint of the
  // min-of-pieces recursion.  Each sweep applies u_t <- min_s piece(s, q_t)
  // with the same arithmetic and fold order evaluate() uses; values only
  // decrease, by at most the solver roundoff, and reach the fixpoint within
  // a bounded number of sweeps unless the system is numerically degenerate.
  lp::LinearProgram prog(2 * T);
  for (int t = 0; t < 2 * T; ++t)
    prog.set_bounds(t, kPositivityFloor, lp::kInf);
  std::vector<double> objective(2 * T, 0.0);
  for (int t = 0; t < T; ++t) objective[T + t] = 1.0;
  prog.set_objective(objective, lp::Sense::Minimize);
  std::vector<double> row(2 * T);
  for (int s = 0; s < T; ++s) {
    for (int t = 0; t < T; ++t) {
      if (s == t) continue;
      std::fill(row.begin(), row.end(), 0.0);
      row[s] += 1.0;
      row[t] -= 1.0;
      row[T + t] = -gap[s * T + t];
      prog.add_constraint(row, lp::Relation::LessEqual, 0.0);
    }
  }
  const lp::LpSolution sol = lp::solve(prog);
  if (sol.status != lp::SolveStatus::Optimal)
    throw CertificateError(
        "certificate construction failed: the solver could not realize a "
        "system that is feasible combinatorially");

  AfriatCertificate cert;
  cert.u.assign(sol.primal.begin(), sol.primal.begin() + T);
  cert.lambda.assign(sol.primal.begin() + T, sol.primal.end());

  PiecewiseLinearUtility utility(data, witness, agent, cert);
  const int max_sweeps = 4 * T + 8;
  bool settled = false;
  for (int sweep = 0; sweep < max_sweeps && !settled; ++sweep) {
    settled = true;
    for (int t = 0; t < T; ++t) {
      const std::span<const double> beta = utility.anchor(t);
      double fresh = utility.piece_value(0, beta);
      for (int s = 1; s < T; ++s)
        fresh = std::min(fresh, utility.piece_value(s, beta));
      if (fresh != utility.u_[t]) {
        utility.u_[t] = fresh;
        settled = false;
      }
    }
  }
  if (!settled)
    throw CertificateError("certificate polish did not stabilize");
  cert.u = utility.u_;
  if (!certificate_holds(data, witness, agent, cert, gap))
    throw CertificateError("polished certificate failed re-verification");
  return cert;
}

RationalizationReport rationalization_check(
    const core::Dataset& data, const core::PersonalizedAllocation& witness,
    std::span<const AfriatCertificate> certificates, int samples_per_obs,
    std::uint64_t seed) {
  const int T = data.horizon();
  const int M = data.num_agents;
  const int N = data.num_goods;
  if (static_cast<int>(certificates.size()) != M)
    throw std::invalid_argument("need one certificate per agent");
  std::vector<PiecewiseLinearUtility> utils;
  utils.reserve(M);
  for (int i = 0; i < M; ++i)
    utils.emplace_back(data, witness, i, certificates[i]);

  RationalizationReport report;
  std::vector<double> zeta(static_cast<std::size_t>(M) * N);
  const auto profile_value = [&](int t) {
    double value = 0.0;
    for (int i = 0; i < M; ++i)
      value += utils[i].evaluate(std::span<const double>(
                   zeta.data() + static_cast<std::size_t>(i) * N,
                   static_cast<std::size_t>(N))) /
               certificates[i].lambda[t];
    return value;
  };

  for (int t = 0; t < T; ++t) {
    const auto& obs = data.observations[t];
    const double budget = core::group_expenditure(data, t);

    // Group value the witness attains at observation t, with each agent
    // weighted by its certificate's marginal utility of expenditure.
    for (int i = 0; i < M; ++i)
      for (int k = 0; k < N; ++k)
        zeta[static_cast<std::size_t>(i) * N + k] = witness.at(t, i, k);
    const double witness_value = profile_value(t);

    const auto consider = [&]() {
      const double value = profile_value(t);
      ++report.samples;
      const double violation = value - witness_value;
      if (violation > report.max_violation) {
        report.max_violation = violation;
        report.worst_observation = t;
      }
    };

    // The witness itself: must be exactly neutral.
    consider();

    // Full budget on a single good for a single agent.
    for (int i = 0; i < M; ++i) {
      for (int k = 0; k < N; ++k) {
        std::fill(zeta.begin(), zeta.end(), 0.0);
        zeta[static_cast<std::size_t>(i) * N + k] =
            budget / obs.probe.alpha[k];
        consider();
      }
    }

    // Random feasible profiles: direction uniform in the box, then scaled to
    // a uniformly drawn fraction of the budget.
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
    for (int rep = 0; rep < samples_per_obs; ++rep) {
      double cost = 0.0;
      for (int i = 0; i < M; ++i)
        for (int k = 0; k < N; ++k) {
          const double v = rng.uniform();
          zeta[static_cast<std::size_t>(i) * N + k] = v;
          cost += obs.probe.alpha[k] * v;
        }
      const double scale = cost > 0.0 ? rng.uniform() * budget / cost : 0.0;
      for (double& v : zeta) v *= scale;
      consider();
    }
  }
  return report;
}

GridSpec default_grid(const PiecewiseLinearUtility& utility) {
  if (utility.num_goods() != 2)
    throw std::invalid_argument("contour grids require exactly two goods");
  GridSpec grid;
  double lo1 = utility.anchor(0)[0], hi1 = lo1;
  double lo2 = utility.anchor(0)[1], hi2 = lo2;
  for (int t = 1; t < utility.num_pieces(); ++t) {
    lo1 = std::min(lo1, utility.anchor(t)[0]);
    hi1 = std::max(hi1, utility.anchor(t)[0]);
    lo2 = std::min(lo2, utility.anchor(t)[1]);
    hi2 = std::max(hi2, utility.anchor(t)[1]);
  }
  const auto pad = [](double lo, double hi) {
    const double span = hi > lo ? hi - lo : std::max(1.0, std::abs(hi));
    return std::pair<double, double>(std::max(0.0, lo - 0.1 * span),
                                     hi + 0.1 * span);
  };
  std::tie(grid.b1_min, grid.b1_max) = pad(lo1, hi1);
  std::tie(grid.b2_min, grid.b2_max) = pad(lo2, hi2);
  grid.n1 = 100;
  grid.n2 = 100;
  return grid;
}

void export_contour(const PiecewiseLinearUtility& utility, const GridSpec& grid,
                    std::ostream& out) {
  if (utility.num_goods() != 2)
    throw std::invalid_argument("contour export requires exactly two goods");
  if (grid.n1 < 2 || grid.n2 < 2 || !(grid.b1_max >= grid.b1_min) ||
      !(grid.b2_max >= grid.b2_min) || grid.b1_min < 0.0 || grid.b2_min < 0.0)
    throw std::invalid_argument("degenerate contour grid");
  out << "beta1,beta2,utility\n";
  double beta[2];
  for (int r = 0; r < grid.n1; ++r) {
    beta[0] = grid.b1_min +
              (grid.b1_max - grid.b1_min) * r / (grid.n1 - 1);
    for (int c = 0; c < grid.n2; ++c) {
      beta[1] = grid.b2_min +
                (grid.b2_max - grid.b2_min) * c / (grid.n2 - 1);
      out << core::format_double(beta[0]) << ','
          << core::format_double(beta[1]) << ','
          << core::format_double(
                 utility.evaluate(std::span<const double>(beta, 2)))
          << '\n';
    }
  }
}

void write_contour_csv(const PiecewiseLinearUtility& utility,
                       const GridSpec& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw core::IoError("cannot write " + path);
  export_contour(utility, grid, out);
  if (!out) throw core::IoError("short write to " + path);
}

std::string certificate_to_json(const AfriatCertificate& certificate,
                                int display_agent) {
  ordered_json root;
  root["agent"] = display_agent;
  root["u"] = certificate.u;
  root["lambda"] = certificate.lambda;
  return root.dump(2) + "\n";
}

AfriatCertificate certificate_from_json(const std::string& text) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& err) {
    throw core::ParseError(std::string("certificate: ") + err.what());
  }
  if (!root.is_object() || !root.contains("u") || !root.contains("lambda"))
    throw core::SchemaError("certificate: expected object with u and lambda");
  AfriatCertificate cert;
  for (const auto& v : root["u"]) cert.u.push_back(v.get<double>());
  for (const auto& v : root["lambda"]) cert.lambda.push_back(v.get<double>());
  if (cert.u.size() != cert.lambda.size() || cert.u.empty())
    throw core::SchemaError("certificate: u and lambda must match and be nonempty");
  return cert;
}

void write_certificate_json(const AfriatCertificate& certificate,
                            int display_agent, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw core::IoError("cannot write " + path);
  out << certificate_to_json(certificate, display_agent);
  if (!out) throw core::IoError("short write to " + path);
}

}  // namespace coordrp::afriat
