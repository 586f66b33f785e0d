// Acceptance suite: one PASS/FAIL line per criterion, exit code 0 iff all
// pass.  Every check is pinned to an explicit tolerance or count and backed
// by an oracle that is independent of the implementation under test
// (transitive-closure acyclicity, exhaustive enumeration + LP, grid search,
// closed forms, byte comparison).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "coordrp/afriat.hpp"
#include "coordrp/dataset.hpp"
#include "coordrp/harness.hpp"
#include "coordrp/milp.hpp"
#include "coordrp/rng.hpp"
#include "coordrp/sim.hpp"
#include "exhaustive_oracle.hpp"
#include "grid_oracle.hpp"

using namespace coordrp;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int index, const char* name, bool pass, const std::string& detail) {
  std::printf("%s  criterion %d  %-34s %s\n", pass ? "PASS" : "FAIL", index,
              name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string fmt(const char* format, ...) {
  va_list args;
  va_start(args, format);
  char buf[512];
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

// A coordinating verdict kept for the certificate and rationalization
// criteria.
struct CoordinatingCase {
  core::Dataset data;
  core::PersonalizedAllocation witness;
};

// Single fully observed agent: floors equal the aggregates.
core::Dataset fully_observed_single(int T, std::uint64_t seed) {
  Rng rng(seed);
  core::Dataset d;
  d.num_agents = 1;
  d.num_goods = 2;
  for (int t = 0; t < T; ++t) {
    core::Observation ob;
    for (int k = 0; k < 2; ++k) ob.probe.alpha.push_back(rng.uniform(0.1, 1.1));
    for (int k = 0; k < 2; ++k) ob.aggregate.push_back(rng.uniform(0.2, 1.0));
    ob.assignable.push_back(ob.aggregate);
    d.observations.push_back(std::move(ob));
  }
  return d;
}

// Partially observed multi-agent data: floors at a random fraction of a
// hidden independent truth.
core::Dataset partial_random(int M, int N, int T, std::uint64_t seed) {
  Rng rng(seed);
  core::Dataset d;
  d.num_agents = M;
  d.num_goods = N;
  for (int t = 0; t < T; ++t) {
    core::Observation ob;
    for (int k = 0; k < N; ++k) ob.probe.alpha.push_back(rng.uniform(0.1, 1.1));
    ob.aggregate.assign(N, 0.0);
    std::vector<core::Vec> truth(M, core::Vec(N));
    for (int i = 0; i < M; ++i)
      for (int k = 0; k < N; ++k) {
        truth[i][k] = rng.uniform(0.05, 1.0);
        ob.aggregate[k] += truth[i][k];
      }
    for (int i = 0; i < M; ++i) {
      const double s = rng.uniform(0.1, 1.0);
      core::Vec hat(N);
      for (int k = 0; k < N; ++k) hat[k] = s * truth[i][k];
      ob.assignable.push_back(std::move(hat));
    }
    d.observations.push_back(std::move(ob));
  }
  return d;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_ms_column(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line))
    out << line.substr(0, line.rfind(',')) << '\n';
  return out.str();
}

std::string erase_ms_keys(const std::string& json_text) {
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(json_text);
  std::vector<std::string> doomed;
  for (const auto& [key, value] : j.items())
    if (key.size() >= 3 && key.compare(key.size() - 3, 3, "_ms") == 0)
      doomed.push_back(key);
  for (const std::string& key : doomed) j.erase(key);
  return j.dump(2);
}

bool datasets_identical(const core::Dataset& a, const core::Dataset& b) {
  if (a.num_agents != b.num_agents || a.num_goods != b.num_goods ||
      a.horizon() != b.horizon())
    return false;
  for (int t = 0; t < a.horizon(); ++t) {
    const core::Observation& oa = a.observations[t];
    const core::Observation& ob = b.observations[t];
    if (oa.probe.alpha != ob.probe.alpha || oa.aggregate != ob.aggregate ||
        oa.assignable != ob.assignable)
      return false;
  }
  return true;
}

}  // namespace

int main() {
  std::vector<CoordinatingCase> coordinating_cases;
  std::size_t reproduction_cases = 0;  // prefix of coordinating_cases

  // 1. Coordinated reproduction: 20 simulated coordinating networks, all
  //    detected, under 60 s.
  {
    Timer timer;
    const sim::NetworkSpec spec = sim::demo_network();
    int detected = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const core::Dataset data = sim::simulate(spec, 10, seed).dataset;
      const milp::MilpVerdict verdict = milp::decide(milp::build_problem(data));
      if (verdict.decision == milp::Decision::Coordinating) {
        ++detected;
        coordinating_cases.push_back({data, *verdict.witness});
      }
    }
    reproduction_cases = coordinating_cases.size();
    const double s = timer.seconds();
    report(1, "coordinated reproduction", detected == 20 && s < 60.0,
           fmt("%d/20 coordinating in %.2f s (need 20/20 under 60 s)",
               detected, s));
  }

  // 2. Independent-behaviour rejection: at least 90 of 100 independent
  //    datasets rejected, under 600 s.
  {
    Timer timer;
    int rejected = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const core::Dataset data = sim::simulate_independent(3, 10, seed).dataset;
      const milp::MilpVerdict verdict = milp::decide(milp::build_problem(data));
      if (verdict.decision == milp::Decision::NotCoordinating)
        ++rejected;
      else
        coordinating_cases.push_back({data, *verdict.witness});
    }
    const double s = timer.seconds();
    report(2, "independent-behaviour rejection",
           rejected >= 90 && s < 600.0,
           fmt("%d/100 rejected in %.2f s (need >= 90 under 600 s)", rejected,
               s));
  }

  // 3. Single-agent oracle equivalence: the detector matches the
  //    transitive-closure acyclicity oracle on 100 fully observed datasets.
  {
    Timer timer;
    int agree = 0, accepted = 0;
    for (std::uint64_t j = 0; j < 100; ++j) {
      Rng shape(mix_seed(0xC3, j));
      const int T = 1 + static_cast<int>(shape.uniform() * 6.0);  // 1..6
      const core::Dataset data = fully_observed_single(T, mix_seed(0xC3F0, j));
      const bool oracle = milp::garp_oracle(data);
      const milp::MilpVerdict verdict = milp::decide(milp::build_problem(data));
      const bool coordinating =
          verdict.decision == milp::Decision::Coordinating;
      if (coordinating == oracle) ++agree;
      if (coordinating) {
        ++accepted;
        coordinating_cases.push_back({data, *verdict.witness});
      }
    }
    const double s = timer.seconds();
    report(3, "single-agent oracle equivalence",
           agree == 100 && s < 60.0,
           fmt("%d/100 agree (%d coordinating) in %.2f s (need 100/100 under "
               "60 s)",
               agree, accepted, s));
  }

  // 4. Small-instance exactness: the detector matches exhaustive indicator
  //    enumeration + LP feasibility on 50 tiny partially observed instances.
  {
    int agree = 0, accepted = 0;
    for (std::uint64_t j = 0; j < 50; ++j) {
      Rng shape(mix_seed(0xC4, j));
      const int M = 1 + static_cast<int>(shape.uniform() * 2.0);  // 1..2
      const int T = 2 + static_cast<int>(shape.uniform() * 2.0);  // 2..3
      const core::Dataset data = partial_random(M, 2, T, mix_seed(0xC4F0, j));
      const milp::MilpProblem problem = milp::build_problem(data);
      const bool oracle = exhoracle::coordinating(problem);
      const milp::MilpVerdict verdict = milp::decide(problem);
      const bool coordinating =
          verdict.decision == milp::Decision::Coordinating;
      if (coordinating == oracle) ++agree;
      if (coordinating) {
        ++accepted;
        coordinating_cases.push_back({data, *verdict.witness});
      }
    }
    report(4, "small-instance exactness", agree == 50,
           fmt("%d/50 agree with exhaustive enumeration (%d coordinating)",
               agree, accepted));
  }

  // 5. Certificate suite: for every coordinating verdict above, pairwise
  //    inequality residuals within 1e-7, concavity over 1000 random triples,
  //    monotonicity over 1000 random pairs, and bitwise-tight intercepts.
  {
    double worst_residual = 0.0;
    long concavity_failures = 0, monotonicity_failures = 0,
         tightness_failures = 0, agents_checked = 0;
    bool solve_failed = false;
    for (std::size_t idx = 0; idx < coordinating_cases.size(); ++idx) {
      const CoordinatingCase& c = coordinating_cases[idx];
      const int T = c.data.horizon();
      for (int i = 0; i < c.data.num_agents; ++i) {
        afriat::AfriatCertificate cert;
        try {
          cert = afriat::solve_certificate(c.data, c.witness, i);
        } catch (const afriat::CertificateError&) {
          solve_failed = true;
          continue;
        }
        ++agents_checked;
        for (int s = 0; s < T; ++s)
          for (int t = 0; t < T; ++t) {
            if (s == t) continue;
            const double gap =
                core::pair_gap(c.data.observations[t].probe.alpha,
                               c.witness.bundle(s, i), c.witness.bundle(t, i));
            worst_residual = std::max(
                worst_residual, cert.u[s] - cert.u[t] - cert.lambda[t] * gap);
          }
        const afriat::PiecewiseLinearUtility utility(c.data, c.witness, i,
                                                     cert);
        Rng rng(mix_seed(0xC5, idx * 131 + static_cast<std::uint64_t>(i)));
        for (int rep = 0; rep < 1000; ++rep) {
          const std::vector<double> a{rng.uniform(0.0, 2.0),
                                      rng.uniform(0.0, 2.0)};
          const std::vector<double> b{rng.uniform(0.0, 2.0),
                                      rng.uniform(0.0, 2.0)};
          const double theta = rng.uniform();
          const std::vector<double> mix{theta * a[0] + (1 - theta) * b[0],
                                        theta * a[1] + (1 - theta) * b[1]};
          if (utility.evaluate(mix) < theta * utility.evaluate(a) +
                                          (1 - theta) * utility.evaluate(b) -
                                          1e-7)
            ++concavity_failures;
        }
        for (int rep = 0; rep < 1000; ++rep) {
          const std::vector<double> a{rng.uniform(0.0, 2.0),
                                      rng.uniform(0.0, 2.0)};
          const std::vector<double> b{a[0] + rng.uniform(0.0, 1.0),
                                      a[1] + rng.uniform(0.0, 1.0)};
          if (utility.evaluate(a) > utility.evaluate(b) + 1e-7)
            ++monotonicity_failures;
        }
        for (int t = 0; t < utility.num_pieces(); ++t)
          if (utility.evaluate(utility.anchor(t)) != cert.u[t])
            ++tightness_failures;
      }
    }
    const bool pass = !solve_failed && worst_residual <= 1e-7 &&
                      concavity_failures == 0 && monotonicity_failures == 0 &&
                      tightness_failures == 0;
    report(5, "certificate suite", pass,
           fmt("%ld agents over %zu verdicts: max residual %.3g (tol 1e-7), "
               "%ld concavity / %ld monotonicity / %ld tightness failures%s",
               agents_checked, coordinating_cases.size(), worst_residual,
               concavity_failures, monotonicity_failures, tightness_failures,
               solve_failed ? ", certificate solve FAILED" : ""));
  }

  // 6. Rationalization: on the reproduction datasets, no sampled feasible
  //    alternative improves the reconstructed group objective by more than
  //    1e-7 (K = 1000 samples per observation).
  {
    double worst = 0.0;
    std::size_t checked = 0;
    bool solve_failed = false;
    for (std::size_t idx = 0; idx < reproduction_cases; ++idx) {
      const CoordinatingCase& c = coordinating_cases[idx];
      std::vector<afriat::AfriatCertificate> certs;
      try {
        for (int i = 0; i < c.data.num_agents; ++i)
          certs.push_back(afriat::solve_certificate(c.data, c.witness, i));
      } catch (const afriat::CertificateError&) {
        solve_failed = true;
        continue;
      }
      const afriat::RationalizationReport rep = afriat::rationalization_check(
          c.data, c.witness, certs, 1000, mix_seed(0xC6, idx));
      worst = std::max(worst, rep.max_violation);
      ++checked;
    }
    report(6, "rationalization spot-check",
           !solve_failed && checked == reproduction_cases && worst <= 1e-7,
           fmt("%zu/%zu datasets, K=1000: max improvement %.3g (tol 1e-7)",
               checked, reproduction_cases, worst));
  }

  // 7. Forward-solver optimality: within 1e-6 of the grid-search oracle on
  //    100 random probes, and on the Cobb-Douglas closed form within 1e-9.
  {
    Timer timer;
    const sim::NetworkSpec spec = sim::demo_network();
    Rng rng(0xC7);
    int within = 0;
    double worst_gap = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      const core::Probe probe = sim::sample_probe(rng, 2);
      const std::vector<core::Vec> bundles = sim::allocate(spec, probe);
      const double objective = sim::weighted_objective(spec, bundles);
      const double oracle = gridoracle::grid_best(spec, probe, 200);
      worst_gap = std::max(worst_gap, oracle - objective);
      if (objective >= oracle - 1e-6) ++within;
    }

    sim::NetworkSpec cobb;
    cobb.agents.push_back({sim::UtilityKind::Product, {}, 1.0});
    Rng crng(0xC0BB);
    double worst_cobb = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      const core::Probe probe = sim::sample_probe(crng, 2);
      const std::vector<core::Vec> bundles = sim::allocate(cobb, probe);
      for (int k = 0; k < 2; ++k)
        worst_cobb = std::max(
            worst_cobb,
            std::abs(bundles[0][k] - 1.0 / (2.0 * probe.alpha[k])));
      const double analytic =
          1.0 / (4.0 * probe.alpha[0] * probe.alpha[1]);
      worst_cobb = std::max(
          worst_cobb,
          std::abs(sim::weighted_objective(cobb, bundles) - analytic));
    }
    const double s = timer.seconds();
    report(7, "forward-solver optimality",
           within == 100 && worst_cobb <= 1e-9,
           fmt("%d/100 probes within 1e-6 of the grid oracle (worst gap "
               "%.3g); Cobb-Douglas worst error %.3g (tol 1e-9); %.2f s",
               within, worst_gap, worst_cobb, s));
  }

  // 8. Determinism & round-trip: fixed seeds give byte-identical datasets
  //    and study outputs (wall time excluded), and dataset JSON round-trips
  //    to the identical text and values.
  {
    bool dataset_bytes_ok = true;
    const sim::NetworkSpec spec = sim::demo_network();
    for (std::uint64_t seed : {3u, 14u}) {
      dataset_bytes_ok &=
          core::dataset_to_json(sim::simulate(spec, 10, seed).dataset) ==
          core::dataset_to_json(sim::simulate(spec, 10, seed).dataset);
      dataset_bytes_ok &=
          core::dataset_to_json(sim::simulate_independent(3, 10, seed).dataset) ==
          core::dataset_to_json(sim::simulate_independent(3, 10, seed).dataset);
    }

    const fs::path base = fs::temp_directory_path() / "coordrp_acceptance";
    fs::remove_all(base);
    harness::ExperimentConfig config;
    config.mode = harness::ExperimentMode::Coordinated;
    config.horizon = 10;
    config.trials = 3;
    config.seed = 55;
    config.out_dir = base / "run_a";
    harness::run_experiment(config);
    config.out_dir = base / "run_b";
    harness::run_experiment(config);
    bool study_ok =
        strip_ms_column(read_text(base / "run_a/summary.csv")) ==
            strip_ms_column(read_text(base / "run_b/summary.csv")) &&
        erase_ms_keys(read_text(base / "run_a/summary.json")) ==
            erase_ms_keys(read_text(base / "run_b/summary.json"));
    for (int trial = 0; trial < 3 && study_ok; ++trial) {
      const std::string dir = "trials/trial_00" + std::to_string(trial);
      study_ok &= read_text(base / "run_a" / dir / "witness.json") ==
                  read_text(base / "run_b" / dir / "witness.json");
      for (int i = 1; i <= 3; ++i) {
        const std::string cert = "certificate_agent" + std::to_string(i) + ".json";
        study_ok &= read_text(base / "run_a" / dir / cert) ==
                    read_text(base / "run_b" / dir / cert);
      }
    }
    fs::remove_all(base);

    bool round_trip_ok = true;
    const std::vector<core::Dataset> specimens = {
        sim::simulate(spec, 10, 21).dataset,
        sim::simulate_independent(3, 10, 22).dataset,
        partial_random(2, 2, 5, 23),
    };
    for (const core::Dataset& d : specimens) {
      const std::string text = core::dataset_to_json(d);
      const core::Dataset back = core::dataset_from_json(text);
      round_trip_ok &= datasets_identical(d, back);
      round_trip_ok &= core::dataset_to_json(back) == text;
    }

    report(8, "determinism and round-trip",
           dataset_bytes_ok && study_ok && round_trip_ok,
           fmt("datasets byte-identical: %s; studies byte-identical (timing "
               "stripped): %s; JSON round-trip identity: %s",
               dataset_bytes_ok ? "yes" : "NO", study_ok ? "yes" : "NO",
               round_trip_ok ? "yes" : "NO"));
  }

  std::printf("acceptance: %d/8 criteria passed\n", 8 - failures);
  return failures == 0 ? 0 : 1;
}
