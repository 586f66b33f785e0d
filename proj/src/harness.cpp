#include "coordrp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coordrp/afriat.hpp"
#include "coordrp/rng.hpp"
#include "coordrp/sim.hpp"
#include "json_util.hpp"

namespace coordrp::harness {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using detail::read_file;
using detail::require;
using detail::write_file;

namespace {

constexpr const char* kSchemaVersion = "1";

const char* mode_name(ExperimentMode mode) {
  return mode == ExperimentMode::Coordinated ? "coordinated" : "independent";
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

// trial_000, trial_001, ... padded so the directory listing sorts.
std::string trial_dir_name(int trial, int trials) {
  int width = 1;
  for (int v = trials - 1; v >= 10; v /= 10) ++width;
  width = std::max(width, 3);
  std::string digits = std::to_string(trial);
  if (static_cast<int>(digits.size()) < width)
    digits.insert(0, width - digits.size(), '0');
  return "trial_" + digits;
}

// Reads an integer field with an explicit range so oversized JSON numbers
// fail loudly instead of wrapping in the narrowing cast.
std::int64_t get_integer(const ordered_json& j, const std::string& origin,
                         const std::string& name, std::int64_t lo,
                         std::int64_t hi) {
  require(j.is_number_integer() || j.is_number_unsigned(), origin,
          "'" + name + "' must be an integer");
  require(!j.is_number_unsigned() ||
              j.get<std::uint64_t>() <=
                  static_cast<std::uint64_t>(
                      std::numeric_limits<std::int64_t>::max()),
          origin, "'" + name + "' is out of range");
  const std::int64_t v = j.get<std::int64_t>();
  require(v >= lo && v <= hi, origin,
          "'" + name + "' must be in [" + std::to_string(lo) + ", " +
              std::to_string(hi) + "]");
  return v;
}

}  // namespace

std::vector<std::string> validate_config(const ExperimentConfig& config) {
  std::vector<std::string> errors;
  if (config.trials < 1) errors.push_back("trials must be >= 1");
  if (config.horizon < 1) errors.push_back("horizon must be >= 1");
  if (config.node_budget < 0) errors.push_back("node_budget must be >= 0");
  if (!std::isfinite(config.epsilon_strict) || config.epsilon_strict < 0.0)
    errors.push_back("epsilon_strict must be finite and >= 0");
  if (config.out_dir.empty()) errors.push_back("output directory must be set");
  return errors;
}

std::string config_to_json(const ExperimentConfig& config) {
  ordered_json root;
  root["version"] = kSchemaVersion;
  root["mode"] = mode_name(config.mode);
  root["network"] = config.network.generic_string();
  root["horizon"] = config.horizon;
  root["trials"] = config.trials;
  root["seed"] = config.seed;
  root["epsilon_strict"] = config.epsilon_strict;
  root["node_budget"] = config.node_budget;
  root["out"] = config.out_dir.generic_string();
  return root.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text,
                                  const std::string& origin) {
  const ordered_json root = detail::parse_checked(text, origin);
  require(root.is_object(), origin, "top level must be an object");
  require(root.contains("version") && root["version"].is_string() &&
              root["version"].get<std::string>() == kSchemaVersion,
          origin, "missing or unsupported 'version'");
  for (const char* field : {"mode", "trials", "seed", "out"}) {
    require(root.contains(field), origin,
            std::string("missing field '") + field + "'");
  }
  for (const auto& [key, value] : root.items()) {
    static constexpr const char* kKnown[] = {
        "version", "mode",          "network",     "horizon", "trials",
        "seed",    "epsilon_strict", "node_budget", "out"};
    require(std::find(std::begin(kKnown), std::end(kKnown), key) !=
                std::end(kKnown),
            origin, "unknown field '" + key + "'");
  }

  ExperimentConfig config;
  require(root["mode"].is_string(), origin, "'mode' must be a string");
  const std::string mode = root["mode"].get<std::string>();
  if (mode == "coordinated") {
    config.mode = ExperimentMode::Coordinated;
  } else if (mode == "independent") {
    config.mode = ExperimentMode::Independent;
  } else {
    require(false, origin,
            "'mode' must be \"coordinated\" or \"independent\", got \"" + mode +
                "\"");
  }
  if (root.contains("network")) {
    require(root["network"].is_string(), origin, "'network' must be a string");
    config.network = root["network"].get<std::string>();
  }
  if (root.contains("horizon"))
    config.horizon = static_cast<int>(
        get_integer(root["horizon"], origin, "horizon", 1, 1'000'000));
  config.trials = static_cast<int>(
      get_integer(root["trials"], origin, "trials", 1, 1'000'000'000));
  require(root["seed"].is_number_unsigned() ||
              (root["seed"].is_number_integer() &&
               root["seed"].get<std::int64_t>() >= 0),
          origin, "'seed' must be a nonnegative integer");
  config.seed = root["seed"].get<std::uint64_t>();
  if (root.contains("epsilon_strict")) {
    require(root["epsilon_strict"].is_number(), origin,
            "'epsilon_strict' must be a number");
    config.epsilon_strict = root["epsilon_strict"].get<double>();
  }
  if (root.contains("node_budget"))
    config.node_budget =
        get_integer(root["node_budget"], origin, "node_budget", 0,
                    std::numeric_limits<std::int64_t>::max() / 2);
  require(root["out"].is_string(), origin, "'out' must be a string");
  config.out_dir = root["out"].get<std::string>();

  if (std::vector<std::string> errors = validate_config(config);
      !errors.empty()) {
    std::string what = "invalid experiment config";
    for (const std::string& e : errors) what += "; " + e;
    require(false, origin, what);
  }
  return config;
}

ExperimentConfig read_config(const fs::path& path) {
  return config_from_json(read_file(path), path.string());
}

std::string to_string(TrialVerdict verdict) {
  switch (verdict) {
    case TrialVerdict::Coordinating:
      return "coordinating";
    case TrialVerdict::NotCoordinating:
      return "not-coordinating";
    case TrialVerdict::Undecided:
      return "undecided";
  }
  return "undecided";
}

// ---- staged directory commit ------------------------------------------------

namespace {

fs::path normalized_target(const fs::path& target) {
  fs::path p = target.lexically_normal();
  // Strip trailing separators and "." components; stop at pure roots, whose
  // parent_path() is themselves.
  while (p.has_relative_path() && (p.filename().empty() || p.filename() == "."))
    p = p.parent_path();
  if (p.empty() || !p.has_relative_path() || p.filename() == "..")
    throw std::invalid_argument("output directory '" + target.string() +
                                "' is not a replaceable directory");
  return p;
}

}  // namespace

StagedDir::StagedDir(const fs::path& target) : target_(normalized_target(target)) {
  staging_ = target_;
  staging_ += ".staging";
  std::error_code ec;
  fs::remove_all(staging_, ec);  // stale staging from an interrupted run
  if (target_.has_parent_path())
    fs::create_directories(target_.parent_path());
  fs::create_directories(staging_);
}

void StagedDir::commit() {
  fs::remove_all(target_);
  fs::rename(staging_, target_);
  committed_ = true;
}

StagedDir::~StagedDir() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

// ---- manifest -----------------------------------------------------------------

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_manifest(const fs::path& dir, std::vector<std::string> artifact_paths) {
  std::sort(artifact_paths.begin(), artifact_paths.end());
  ordered_json items = ordered_json::array();
  for (const std::string& rel : artifact_paths) {
    ordered_json item;
    item["path"] = rel;
    item["fnv1a64"] = fnv1a64_hex(read_file(dir / rel));
    items.push_back(std::move(item));
  }
  ordered_json root;
  root["version"] = kSchemaVersion;
  root["artifacts"] = std::move(items);
  write_file(dir / "manifest.json", root.dump(2) + "\n");
}

// ---- experiments --------------------------------------------------------------

ExperimentSummary run_experiment(const ExperimentConfig& config) {
  if (std::vector<std::string> errors = validate_config(config);
      !errors.empty()) {
    std::string what = "run_experiment: invalid config";
    for (const std::string& e : errors) what += "; " + e;
    throw std::invalid_argument(what);
  }
  const sim::NetworkSpec spec = config.network.empty()
                                    ? sim::demo_network()
                                    : sim::read_network(config.network);

  StagedDir stage(config.out_dir);
  std::vector<std::string> files;
  ExperimentSummary summary;

  for (int trial = 0; trial < config.trials; ++trial) {
    const std::uint64_t trial_seed =
        mix_seed(config.seed, static_cast<std::uint64_t>(trial));
    const core::Dataset data =
        config.mode == ExperimentMode::Coordinated
            ? sim::simulate(spec, config.horizon, trial_seed).dataset
            : sim::simulate_independent(spec.num_agents(), config.horizon,
                                        trial_seed, spec.num_goods)
                  .dataset;
    const milp::MilpProblem problem =
        milp::build_problem(data, config.epsilon_strict);

    TrialResult result;
    result.trial = trial;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const milp::MilpVerdict verdict =
          milp::decide(problem, {.node_budget = config.node_budget});
      result.node_count = verdict.node_count;
      result.wall_time_ms = verdict.wall_time_ms;
      if (verdict.decision == milp::Decision::Coordinating) {
        result.verdict = TrialVerdict::Coordinating;
        const std::string dir =
            "trials/" + trial_dir_name(trial, config.trials);
        fs::create_directories(stage.path() / dir);
        result.witness_path = dir + "/witness.json";
        core::write_allocation(*verdict.witness,
                               stage.path() / result.witness_path);
        files.push_back(result.witness_path);
        for (int i = 0; i < data.num_agents; ++i) {
          const afriat::AfriatCertificate certificate =
              afriat::solve_certificate(data, *verdict.witness, i);
          const std::string rel =
              dir + "/certificate_agent" + std::to_string(i + 1) + ".json";
          afriat::write_certificate_json(certificate, i + 1,
                                         (stage.path() / rel).string());
          result.certificate_paths.push_back(rel);
          files.push_back(rel);
        }
      } else {
        result.verdict = TrialVerdict::NotCoordinating;
      }
    } catch (const milp::NodeBudgetExceeded& e) {
      result.verdict = TrialVerdict::Undecided;
      result.node_count = e.node_count;
      result.wall_time_ms = elapsed_ms(t0);
    }
    switch (result.verdict) {
      case TrialVerdict::Coordinating: ++summary.coordinating; break;
      case TrialVerdict::NotCoordinating: ++summary.not_coordinating; break;
      case TrialVerdict::Undecided: ++summary.undecided; break;
    }
    summary.trials.push_back(std::move(result));
  }

  std::ostringstream csv;
  csv << "trial,verdict,nodes,ms\n";
  long total_nodes = 0;
  double total_ms = 0.0;
  for (const TrialResult& r : summary.trials) {
    csv << r.trial << ',' << to_string(r.verdict) << ',' << r.node_count << ','
        << core::format_double(r.wall_time_ms) << '\n';
    total_nodes += r.node_count;
    total_ms += r.wall_time_ms;
  }
  write_file(stage.path() / "summary.csv", csv.str());
  files.push_back("summary.csv");

  ordered_json rollup;
  rollup["version"] = kSchemaVersion;
  rollup["mode"] = mode_name(config.mode);
  rollup["network"] = config.network.generic_string();
  rollup["horizon"] = config.horizon;
  rollup["trials"] = config.trials;
  rollup["seed"] = config.seed;
  rollup["epsilon_strict"] = config.epsilon_strict;
  rollup["node_budget"] = config.node_budget;
  rollup["coordinating"] = summary.coordinating;
  rollup["not_coordinating"] = summary.not_coordinating;
  rollup["undecided"] = summary.undecided;
  rollup["acceptance_rate"] =
      static_cast<double>(summary.coordinating) / config.trials;
  rollup["rejection_rate"] =
      static_cast<double>(summary.not_coordinating) / config.trials;
  rollup["total_nodes"] = total_nodes;
  rollup["total_wall_time_ms"] = total_ms;
  write_file(stage.path() / "summary.json", rollup.dump(2) + "\n");
  files.push_back("summary.json");

  write_manifest(stage.path(), files);
  stage.commit();
  return summary;
}

PipelineResult run_pipeline(const fs::path& dataset_path, const fs::path& out_dir,
                            double epsilon_strict, long node_budget) {
  const core::Dataset data = core::read_dataset(dataset_path);
  const milp::MilpProblem problem = milp::build_problem(data, epsilon_strict);

  StagedDir stage(out_dir);
  const milp::MilpVerdict verdict =
      milp::decide(problem, {.node_budget = node_budget});

  PipelineResult result;
  result.decision = verdict.decision;
  result.node_count = verdict.node_count;
  result.wall_time_ms = verdict.wall_time_ms;

  const bool coordinating = verdict.decision == milp::Decision::Coordinating;
  ordered_json vj;
  vj["version"] = kSchemaVersion;
  vj["verdict"] = coordinating ? "coordinating" : "not-coordinating";
  vj["agents"] = data.num_agents;
  vj["goods"] = data.num_goods;
  vj["horizon"] = data.horizon();
  vj["epsilon_strict"] = problem.epsilon_strict;
  vj["nodes"] = verdict.node_count;
  vj["wall_time_ms"] = verdict.wall_time_ms;
  write_file(stage.path() / "verdict.json", vj.dump(2) + "\n");
  result.artifacts.push_back("verdict.json");

  if (coordinating) {
    core::write_allocation(*verdict.witness, stage.path() / "witness.json");
    result.artifacts.push_back("witness.json");
    for (int i = 0; i < data.num_agents; ++i) {
      const afriat::AfriatCertificate certificate =
          afriat::solve_certificate(data, *verdict.witness, i);
      const std::string cert_rel =
          "certificate_agent" + std::to_string(i + 1) + ".json";
      afriat::write_certificate_json(certificate, i + 1,
                                     (stage.path() / cert_rel).string());
      result.artifacts.push_back(cert_rel);
      if (data.num_goods == 2) {
        const afriat::PiecewiseLinearUtility utility(data, *verdict.witness, i,
                                                     certificate);
        const std::string contour_rel =
            "contour_agent" + std::to_string(i + 1) + ".csv";
        afriat::write_contour_csv(utility, afriat::default_grid(utility),
                                  (stage.path() / contour_rel).string());
        result.artifacts.push_back(contour_rel);
      }
    }
  }

  write_manifest(stage.path(), result.artifacts);
  result.artifacts.push_back("manifest.json");
  stage.commit();
  return result;
}

}  // namespace coordrp::harness
