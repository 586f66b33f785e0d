// Command-line front end: simulate networks, test datasets for coordination,
// reconstruct utilities from a witness, run Monte Carlo studies, and drive the
// full detection pipeline.
//
// Exit codes: 0 success (for detection: coordinating / no undecided trials),
// 1 not coordinating, 2 undecided (node budget exhausted), 3 usage or input
// errors.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coordrp/afriat.hpp"
#include "coordrp/dataset.hpp"
#include "coordrp/harness.hpp"
#include "coordrp/milp.hpp"
#include "coordrp/sim.hpp"

namespace fs = std::filesystem;
using namespace coordrp;

namespace {

constexpr int kExitCoordinating = 0;
constexpr int kExitNotCoordinating = 1;
constexpr int kExitUndecided = 2;
constexpr int kExitError = 3;

struct SimulateArgs {
  std::string network;
  int horizon = 10;
  std::uint64_t seed = 0;
  std::string out;
  bool independent = false;
  int agents = 0;  // 0: take the agent count from the network spec
  bool emit_truth = false;
};

int run_simulate(const SimulateArgs& args) {
  const sim::NetworkSpec spec = args.network.empty()
                                    ? sim::demo_network()
                                    : sim::read_network(args.network);
  const int agents = args.agents > 0 ? args.agents : spec.num_agents();
  const sim::SimulationResult result =
      args.independent
          ? sim::simulate_independent(agents, args.horizon, args.seed,
                                      spec.num_goods)
          : sim::simulate(spec, args.horizon, args.seed);

  harness::StagedDir stage(args.out);
  std::vector<std::string> files;
  core::write_dataset(result.dataset, stage.path() / "dataset.json");
  files.push_back("dataset.json");
  core::write_dataset_csv(result.dataset, stage.path() / "dataset.csv");
  files.push_back("dataset.csv");
  if (!args.independent) {
    sim::write_network(spec, stage.path() / "network.json");
    files.push_back("network.json");
  }
  if (args.emit_truth) {
    core::write_allocation(result.truth, stage.path() / "truth.json");
    files.push_back("truth.json");
  }
  harness::write_manifest(stage.path(), files);
  stage.commit();

  std::cout << "wrote " << args.out << " (mode="
            << (args.independent ? "independent" : "coordinated")
            << ", M=" << result.dataset.num_agents
            << ", N=" << result.dataset.num_goods
            << ", T=" << result.dataset.horizon() << ", seed=" << args.seed
            << ")\n";
  return 0;
}

struct TestArgs {
  std::string dataset;
  double epsilon_strict = 0.0;
  long node_budget = milp::DecideOptions{}.node_budget;
  std::string emit_witness;
};

int run_test(const TestArgs& args) {
  const core::Dataset data = core::read_dataset(args.dataset);
  const milp::MilpProblem problem =
      milp::build_problem(data, args.epsilon_strict);
  const milp::MilpVerdict verdict =
      milp::decide(problem, {.node_budget = args.node_budget});
  const bool coordinating =
      verdict.decision == milp::Decision::Coordinating;
  std::cout << (coordinating ? "coordinating" : "not-coordinating")
            << " (nodes=" << verdict.node_count
            << ", ms=" << core::format_double(verdict.wall_time_ms) << ")\n";
  if (!args.emit_witness.empty()) {
    if (coordinating) {
      core::write_allocation(*verdict.witness, args.emit_witness);
      std::cout << "wrote witness " << args.emit_witness << "\n";
    } else {
      std::cerr << "coordrp: no witness to write: dataset is not coordinating\n";
    }
  }
  return coordinating ? kExitCoordinating : kExitNotCoordinating;
}

struct ReconstructArgs {
  std::string dataset;
  std::string witness;
  std::string out;
  int grid = 0;  // 0: default resolution
};

int run_reconstruct(const ReconstructArgs& args) {
  const core::Dataset data = core::read_dataset(args.dataset);
  const core::PersonalizedAllocation witness =
      core::read_allocation(args.witness);
  const std::vector<core::Violation> violations =
      core::validate_allocation(data, witness);
  if (!violations.empty()) {
    for (const core::Violation& v : violations)
      std::cerr << "coordrp: witness does not fit the dataset: "
                << core::to_string(v) << "\n";
    return kExitError;
  }

  harness::StagedDir stage(args.out);
  std::vector<std::string> files;
  int contours = 0;
  for (int i = 0; i < data.num_agents; ++i) {
    const afriat::AfriatCertificate certificate =
        afriat::solve_certificate(data, witness, i);
    const std::string tag = std::to_string(i + 1);
    const std::string cert_rel = "certificate_agent" + tag + ".json";
    afriat::write_certificate_json(certificate, i + 1,
                                   (stage.path() / cert_rel).string());
    files.push_back(cert_rel);
    if (data.num_goods == 2) {
      const afriat::PiecewiseLinearUtility utility(data, witness, i,
                                                   certificate);
      afriat::GridSpec grid = afriat::default_grid(utility);
      if (args.grid > 0) grid.n1 = grid.n2 = args.grid;
      const std::string contour_rel = "contour_agent" + tag + ".csv";
      afriat::write_contour_csv(utility, grid,
                                (stage.path() / contour_rel).string());
      files.push_back(contour_rel);
      ++contours;
    }
  }
  harness::write_manifest(stage.path(), files);
  stage.commit();
  std::cout << "wrote " << data.num_agents << " certificates and " << contours
            << " contours to " << args.out << "\n";
  if (data.num_goods != 2)
    std::cerr << "coordrp: contours skipped: dataset has " << data.num_goods
              << " goods (contours need exactly 2)\n";
  return 0;
}

struct MonteCarloArgs {
  std::string config;
  std::string out;
};

int run_montecarlo(const MonteCarloArgs& args) {
  harness::ExperimentConfig config = harness::read_config(args.config);
  if (!args.out.empty()) config.out_dir = args.out;
  const harness::ExperimentSummary summary = harness::run_experiment(config);
  const int trials = static_cast<int>(summary.trials.size());
  std::cout << "trials=" << trials << " coordinating=" << summary.coordinating
            << " not-coordinating=" << summary.not_coordinating
            << " undecided=" << summary.undecided << " rejection_rate="
            << core::format_double(
                   static_cast<double>(summary.not_coordinating) / trials)
            << "\n";
  std::cout << "wrote " << config.out_dir.string() << "\n";
  if (summary.undecided > 0) {
    std::cerr << "coordrp: " << summary.undecided
              << " trial(s) exhausted the node budget and are undecided\n";
    return kExitUndecided;
  }
  return 0;
}

struct PipelineArgs {
  std::string dataset;
  std::string out;
  double epsilon_strict = 0.0;
  long node_budget = milp::DecideOptions{}.node_budget;
};

int run_pipeline_cmd(const PipelineArgs& args) {
  const harness::PipelineResult result = harness::run_pipeline(
      args.dataset, args.out, args.epsilon_strict, args.node_budget);
  const bool coordinating =
      result.decision == milp::Decision::Coordinating;
  std::cout << (coordinating ? "coordinating" : "not-coordinating")
            << " (nodes=" << result.node_count
            << ", ms=" << core::format_double(result.wall_time_ms) << "); "
            << result.artifacts.size() << " artifacts in " << args.out << "\n";
  return coordinating ? kExitCoordinating : kExitNotCoordinating;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "coordrp: detect coordination in multi-agent resource allocation and "
      "reconstruct the agents' utilities"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  CLI::App* sc_sim = app.add_subcommand(
      "simulate", "generate a dataset from a simulated network");
  sc_sim->add_option("--network", sim_args.network,
                     "network spec JSON (default: built-in 3-agent demo)")
      ->check(CLI::ExistingFile);
  sc_sim->add_option("--horizon,-T", sim_args.horizon,
                     "number of observations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sc_sim->add_option("--seed", sim_args.seed, "RNG seed")->required();
  sc_sim->add_option("--out", sim_args.out, "output directory")->required();
  CLI::Option* indep = sc_sim->add_flag(
      "--independent", sim_args.independent,
      "agents respond independently instead of coordinating");
  sc_sim->add_option("--agents", sim_args.agents,
                     "agent count for --independent (default: network shape)")
      ->check(CLI::PositiveNumber)
      ->needs(indep);
  sc_sim->add_flag("--emit-truth", sim_args.emit_truth,
                   "also write the hidden per-agent bundles");

  TestArgs test_args;
  CLI::App* sc_test = app.add_subcommand(
      "test", "decide whether a dataset is consistent with coordination");
  sc_test->add_option("--dataset", test_args.dataset, "dataset JSON")
      ->required()
      ->check(CLI::ExistingFile);
  sc_test->add_option("--epsilon-strict", test_args.epsilon_strict,
                      "strict-preference margin (0: relative default)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sc_test->add_option("--node-budget", test_args.node_budget,
                      "search node budget before giving up as undecided")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sc_test->add_option("--emit-witness", test_args.emit_witness,
                      "write the coordinating split to this file");

  ReconstructArgs rec_args;
  CLI::App* sc_rec = app.add_subcommand(
      "reconstruct", "rebuild per-agent utilities from a coordination witness");
  sc_rec->add_option("--dataset", rec_args.dataset, "dataset JSON")
      ->required()
      ->check(CLI::ExistingFile);
  sc_rec->add_option("--witness", rec_args.witness,
                     "personalized allocation JSON (from test --emit-witness)")
      ->required()
      ->check(CLI::ExistingFile);
  sc_rec->add_option("--out", rec_args.out, "output directory")->required();
  sc_rec->add_option("--grid", rec_args.grid,
                     "contour grid resolution per axis (default 100)")
      ->check(CLI::Range(2, 5000));

  MonteCarloArgs mc_args;
  CLI::App* sc_mc = app.add_subcommand(
      "montecarlo", "run a seeded multi-trial detection study");
  sc_mc->add_option("--config", mc_args.config, "experiment config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  sc_mc->add_option("--out", mc_args.out,
                    "override the config's output directory");

  PipelineArgs pipe_args;
  CLI::App* sc_pipe = app.add_subcommand(
      "pipeline", "dataset -> verdict -> reconstruction in one step");
  sc_pipe->add_option("--dataset", pipe_args.dataset, "dataset JSON")
      ->required()
      ->check(CLI::ExistingFile);
  sc_pipe->add_option("--out", pipe_args.out, "output directory")->required();
  sc_pipe->add_option("--epsilon-strict", pipe_args.epsilon_strict,
                      "strict-preference margin (0: relative default)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sc_pipe->add_option("--node-budget", pipe_args.node_budget,
                      "search node budget before giving up as undecided")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    if (sc_sim->parsed()) return run_simulate(sim_args);
    if (sc_test->parsed()) return run_test(test_args);
    if (sc_rec->parsed()) return run_reconstruct(rec_args);
    if (sc_mc->parsed()) return run_montecarlo(mc_args);
    if (sc_pipe->parsed()) return run_pipeline_cmd(pipe_args);
  } catch (const milp::NodeBudgetExceeded& e) {
    std::cerr << "coordrp: undecided: " << e.what() << "\n";
    return kExitUndecided;
  } catch (const std::exception& e) {
    std::cerr << "coordrp: error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
