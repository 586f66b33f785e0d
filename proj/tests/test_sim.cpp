#include "coordrp/sim.hpp"

#include <cmath>
#include <vector>

#include <doctest.h>

#include "coordrp/milp.hpp"
#include "coordrp/rng.hpp"
#include "coordrp/tracker.hpp"
#include "grid_oracle.hpp"

using namespace coordrp;
using core::Vec;

namespace {

sim::NetworkSpec single_agent(sim::UtilityKind kind,
                              std::vector<double> exponents = {}) {
  sim::NetworkSpec spec;
  spec.agents = {{kind, std::move(exponents), 1.0}};
  return spec;
}

double budget_spend(const core::Probe& probe,
                    const std::vector<Vec>& bundles) {
  double spend = 0.0;
  for (const Vec& b : bundles) spend += core::dot(probe.alpha, b);
  return spend;
}

}  // namespace

TEST_CASE("probe samples stay inside the stated support and reproduce") {
  Rng rng(11);
  double sum = 0.0;
  const int draws = 100000;
  for (int d = 0; d < draws; ++d) {
    const core::Probe p = sim::sample_probe(rng, 2);
    for (double a : p.alpha) {
      CHECK(a > 0.1);
      CHECK(a < 1.1);
      sum += a;
    }
  }
  CHECK(std::abs(sum / (2.0 * draws) - 0.6) < 0.01);

  Rng r1(42), r2(42);
  for (int d = 0; d < 100; ++d) {
    const core::Probe a = sim::sample_probe(r1, 3);
    const core::Probe b = sim::sample_probe(r2, 3);
    CHECK(a.alpha == b.alpha);
  }
}

TEST_CASE("linear utility takes the corner on the cheapest good") {
  const sim::NetworkSpec spec = single_agent(sim::UtilityKind::Sum);
  const core::Probe probe{{1.0, 2.0}};
  const std::vector<Vec> bundles = sim::allocate(spec, probe);
  REQUIRE(bundles.size() == 1);
  CHECK(bundles[0][0] == 1.0);
  CHECK(bundles[0][1] == 0.0);
}

TEST_CASE("product utility matches the Cobb-Douglas closed form") {
  const sim::NetworkSpec spec = single_agent(sim::UtilityKind::Product);
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const core::Probe probe = sim::sample_probe(rng, 2);
    const std::vector<Vec> bundles = sim::allocate(spec, probe);
    for (int k = 0; k < 2; ++k) {
      const double closed_form = 1.0 / (2.0 * probe.alpha[k]);
      CHECK(std::abs(bundles[0][k] - closed_form) < 1e-9);
    }
  }
}

TEST_CASE("allocation matches the independent grid oracle on the demo network") {
  const sim::NetworkSpec spec = sim::demo_network();
  Rng rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    const core::Probe probe = sim::sample_probe(rng, 2);
    const std::vector<Vec> bundles = sim::allocate(spec, probe);

    for (const Vec& b : bundles)
      for (double v : b) CHECK(v >= 0.0);
    CHECK(std::abs(budget_spend(probe, bundles) - spec.budget) <=
          core::kFeasTol * (1.0 + spec.budget));

    const double objective = sim::weighted_objective(spec, bundles);
    const double oracle = gridoracle::grid_best(spec, probe);
    CHECK(objective >= oracle - sim::kOptTol);
  }
}

TEST_CASE("allocation is deterministic") {
  const sim::NetworkSpec spec = sim::demo_network();
  Rng rng(5);
  const core::Probe probe = sim::sample_probe(rng, 2);
  const std::vector<Vec> a = sim::allocate(spec, probe);
  const std::vector<Vec> b = sim::allocate(spec, probe);
  CHECK(a == b);
}

TEST_CASE("allocate rejects malformed specs and probes") {
  sim::NetworkSpec bad = sim::demo_network();
  bad.agents[0].weight = -1.0;
  CHECK_THROWS_AS(sim::allocate(bad, core::Probe{{0.5, 0.5}}),
                  std::invalid_argument);

  const sim::NetworkSpec spec = sim::demo_network();
  CHECK_THROWS_AS(sim::allocate(spec, core::Probe{{0.5}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(sim::allocate(spec, core::Probe{{0.5, -0.1}}),
                  std::invalid_argument);
}

TEST_CASE("observation factors bound the truth from below") {
  const core::Probe probe{{0.4, 0.7}};
  const std::vector<Vec> bundles = {{0.3, 0.6}, {0.2, 0.1}};

  const core::Observation full =
      sim::observe_with_factors(probe, bundles, std::vector<double>{1.0, 1.0});
  CHECK(full.assignable[0] == bundles[0]);
  CHECK(full.assignable[1] == bundles[1]);
  CHECK(full.aggregate[0] == 0.3 + 0.2);
  CHECK(full.aggregate[1] == 0.6 + 0.1);

  const core::Observation dim =
      sim::observe_with_factors(probe, bundles, std::vector<double>{0.1, 0.1});
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k)
      CHECK(dim.assignable[i][k] == 0.1 * bundles[i][k]);

  Rng rng(23);
  for (int draw = 0; draw < 10000; ++draw) {
    std::vector<Vec> random_bundles(2, Vec(2));
    for (Vec& b : random_bundles)
      for (double& v : b) v = rng.uniform(0.0, 2.0);
    const core::Observation ob = sim::observe(probe, random_bundles, rng);
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 2; ++k)
        CHECK(ob.assignable[i][k] <= random_bundles[i][k]);
  }
}

TEST_CASE("coordinated simulations validate, reproduce, and pass the detector") {
  const sim::NetworkSpec spec = sim::demo_network();
  for (std::uint64_t seed : {1ULL, 2ULL}) {
    const sim::SimulationResult run = sim::simulate(spec, 10, seed);
    CHECK(run.dataset.horizon() == 10);
    CHECK(core::validate(run.dataset).empty());
    CHECK(core::validate_allocation(run.dataset, run.truth).empty());

    const sim::SimulationResult again = sim::simulate(spec, 10, seed);
    CHECK(core::dataset_to_json(run.dataset) ==
          core::dataset_to_json(again.dataset));
    CHECK(run.truth.q == again.truth.q);

    const milp::MilpVerdict verdict =
        milp::decide(milp::build_problem(run.dataset));
    CHECK(verdict.decision == milp::Decision::Coordinating);
  }

  const sim::SimulationResult single = sim::simulate(spec, 1, 9);
  CHECK(single.dataset.horizon() == 1);
  CHECK_THROWS_AS(sim::simulate(spec, 0, 1), std::invalid_argument);
}

TEST_CASE("independent simulations fill the unit box and are mostly rejected") {
  int rejected = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const sim::SimulationResult run = sim::simulate_independent(3, 10, seed);
    CHECK(core::validate(run.dataset).empty());
    for (double q : run.truth.q) {
      CHECK(q >= 0.0);
      CHECK(q < 1.0);
    }
    const sim::SimulationResult again = sim::simulate_independent(3, 10, seed);
    CHECK(core::dataset_to_json(run.dataset) ==
          core::dataset_to_json(again.dataset));

    if (milp::decide(milp::build_problem(run.dataset)).decision ==
        milp::Decision::NotCoordinating)
      ++rejected;
  }
  // The detector should reject the overwhelming majority of independent
  // behaviour; 15/20 is a loose floor for a nominal acceptance rate of ~5%.
  CHECK(rejected >= 15);
}

TEST_CASE("network specs round-trip through JSON and reject malformed input") {
  const sim::NetworkSpec spec = sim::demo_network();
  const std::string text = sim::network_to_json(spec);
  const sim::NetworkSpec parsed = sim::network_from_json(text);
  CHECK(sim::network_to_json(parsed) == text);
  CHECK(parsed.num_agents() == 3);
  CHECK(parsed.budget == 1.0);

  const sim::NetworkSpec wrapped = sim::network_from_json(
      R"({"budget": 2.5, "goods": 2,
          "agents": [{"utility": "sum", "weight": 1.0}]})");
  CHECK(wrapped.budget == 2.5);
  CHECK(wrapped.agents[0].utility == sim::UtilityKind::Sum);

  CHECK_THROWS_AS(sim::network_from_json(R"([{"utility": "max", "weight": 1}])"),
                  core::SchemaError);
  CHECK_THROWS_AS(
      sim::network_from_json(R"([{"utility": "sum", "weight": 0.5}])"),
      core::SchemaError);
  CHECK_THROWS_AS(
      sim::network_from_json(R"([{"utility": "powerprod", "weight": 1}])"),
      core::SchemaError);
  CHECK_THROWS_AS(sim::network_from_json(
                      R"([{"utility": "powerprod", "exponents": [2, 1],
                           "weight": 1}])"),
                  core::SchemaError);
  CHECK_THROWS_AS(sim::network_from_json("[{"), core::ParseError);
}

TEST_CASE("huge allocations drive the posterior onto the measurement") {
  const sim::TargetModel model = sim::default_target_model(2);
  std::vector<core::Probe> probes(5, core::Probe{{0.5, 0.5}});
  core::PersonalizedAllocation alloc;
  alloc.horizon = 5;
  alloc.num_agents = 1;
  alloc.num_goods = 2;
  alloc.q.assign(10, 1e12);
  const sim::TrackResult result = sim::track(model, probes, alloc, 31);
  REQUIRE(result.states.size() == 6);
  REQUIRE(result.radars.size() == 1);
  for (int n = 0; n < 5; ++n) {
    const Eigen::VectorXd diff = result.radars[0].posterior_mean[n] -
                                 result.radars[0].measurements[n];
    CHECK(diff.norm() < 1e-6);
  }
}

TEST_CASE("zero process noise with identity dynamics shrinks the covariance") {
  const sim::TargetModel model = sim::default_target_model(2);
  std::vector<core::Probe> probes(20, core::Probe{{0.0, 0.0}});
  core::PersonalizedAllocation alloc;
  alloc.horizon = 20;
  alloc.num_agents = 1;
  alloc.num_goods = 2;
  alloc.q.assign(40, 1.0);
  const sim::TrackResult result = sim::track(model, probes, alloc, 12);
  double last = result.radars[0].posterior_cov[0].trace();
  for (int n = 1; n < 20; ++n) {
    const double trace = result.radars[0].posterior_cov[n].trace();
    CHECK(trace <= last + 1e-12);
    last = trace;
  }
}

TEST_CASE("posterior covariance satisfies the Riccati recursion") {
  const sim::TargetModel model = sim::default_target_model(2);
  Rng rng(44);
  const int T = 10;
  std::vector<core::Probe> probes;
  core::PersonalizedAllocation alloc;
  alloc.horizon = T;
  alloc.num_agents = 2;
  alloc.num_goods = 2;
  alloc.q.resize(T * 2 * 2);
  for (int t = 0; t < T; ++t) {
    probes.push_back(sim::sample_probe(rng, 2));
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 2; ++k) alloc.at(t, i, k) = rng.uniform(0.2, 2.0);
  }
  const sim::TrackResult result = sim::track(model, probes, alloc, 77);

  for (int i = 0; i < 2; ++i) {
    Eigen::MatrixXd p_ref = model.Sigma0;
    for (int n = 0; n < T; ++n) {
      Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2, 2);
      Eigen::MatrixXd r = Eigen::MatrixXd::Zero(2, 2);
      for (int k = 0; k < 2; ++k) {
        q(k, k) = probes[n].alpha[k];
        r(k, k) = 1.0 / alloc.at(n, i, k);
      }
      const Eigen::MatrixXd p_pred =
          model.A * p_ref * model.A.transpose() + q;
      const Eigen::MatrixXd s =
          model.C_obs * p_pred * model.C_obs.transpose() + r;
      p_ref = p_pred - p_pred * model.C_obs.transpose() * s.inverse() *
                           model.C_obs * p_pred;
      CHECK((result.radars[i].posterior_cov[n] - p_ref).norm() < 1e-9);
    }
  }
}

TEST_CASE("innovation sequences are empirically white at scale") {
  const sim::TargetModel model = sim::default_target_model(2);
  const int T = 1000;
  std::vector<core::Probe> probes(T, core::Probe{{0.3, 0.8}});
  core::PersonalizedAllocation alloc;
  alloc.horizon = T;
  alloc.num_agents = 1;
  alloc.num_goods = 2;
  alloc.q.assign(static_cast<std::size_t>(T) * 2, 1.5);
  const sim::TrackResult result = sim::track(model, probes, alloc, 7);

  // Innovations are independent N(0, S_n); the empirical mean of each
  // component is then N(0, sum_n S_n(kk) / T^2).  Recompute S_n through the
  // Riccati recursion.
  Eigen::MatrixXd p = model.Sigma0;
  Eigen::Vector2d var_sum = Eigen::Vector2d::Zero();
  Eigen::Matrix2d q = Eigen::Vector2d(0.3, 0.8).asDiagonal();
  Eigen::Matrix2d r = Eigen::Vector2d(1 / 1.5, 1 / 1.5).asDiagonal();
  for (int n = 0; n < T; ++n) {
    const Eigen::MatrixXd p_pred = p + q;
    const Eigen::MatrixXd s = p_pred + r;
    var_sum += s.diagonal();
    p = p_pred - p_pred * s.inverse() * p_pred;
  }
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (int n = 0; n < T; ++n) mean += result.radars[0].innovations[n];
  mean /= T;
  for (int k = 0; k < 2; ++k)
    CHECK(std::abs(mean(k)) <= 3.0 * std::sqrt(var_sum(k)) / T);
}

TEST_CASE("tracker rejects malformed and non-positive-definite input") {
  const sim::TargetModel model = sim::default_target_model(2);
  std::vector<core::Probe> probes(3, core::Probe{{0.5, 0.5}});
  core::PersonalizedAllocation alloc;
  alloc.horizon = 3;
  alloc.num_agents = 1;
  alloc.num_goods = 2;
  alloc.q.assign(6, 1.0);

  std::vector<core::Probe> negative = probes;
  negative[1].alpha[0] = -0.1;
  CHECK_THROWS_AS(sim::track(model, negative, alloc, 1), std::invalid_argument);

  core::PersonalizedAllocation zeroed = alloc;
  zeroed.q[3] = 0.0;
  CHECK_THROWS_AS(sim::track(model, probes, zeroed, 1), std::invalid_argument);

  sim::TargetModel indefinite = model;
  indefinite.Sigma0 = -Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(sim::track(indefinite, probes, alloc, 1),
                  std::invalid_argument);

  core::PersonalizedAllocation short_alloc = alloc;
  short_alloc.horizon = 2;
  short_alloc.q.resize(4);
  CHECK_THROWS_AS(sim::track(model, probes, short_alloc, 1),
                  std::invalid_argument);
}
