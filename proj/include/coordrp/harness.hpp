#pragma once

// Experiment orchestration: seeded Monte Carlo detection studies over
// simulated networks (coordinated and independent modes) and the end-to-end
// dataset -> verdict -> reconstruction pipeline.  All outputs are plain
// CSV/JSON files under a caller-chosen directory, listed in a manifest with
// content hashes.  Wall-clock time is measured and reported, but every
// timing value lives in a CSV column or JSON key named "ms" /
// "*_wall_time_ms" so reproducibility comparisons can strip it; everything
// else is byte-deterministic under a fixed seed.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "coordrp/dataset.hpp"
#include "coordrp/milp.hpp"

namespace coordrp::harness {

enum class ExperimentMode { Coordinated, Independent };

// One Monte Carlo study.  Trial tau draws its data from the decorrelated
// stream mix_seed(seed, tau), so per-trial results do not depend on the
// trial count and trials could run in any order (or in parallel) without
// changing the summary.
struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::Coordinated;
  // Network spec file; empty selects the built-in demo network.  Independent
  // mode uses only its shape (agent and good counts): the agents' utilities
  // and weights are irrelevant when each responds on its own.
  std::filesystem::path network;
  int horizon = 10;  // observations per trial (T)
  int trials = 1;
  std::uint64_t seed = 0;  // must be given explicitly; never wall-clock
  // Strict-preference margin for the detector; <= 0 selects the default
  // relative margin.
  double epsilon_strict = 0.0;
  // Branch-and-bound node budget per trial; exhausting it marks the trial
  // undecided (reported distinctly, never counted as a rejection).
  long node_budget = milp::DecideOptions{}.node_budget;
  std::filesystem::path out_dir;
};

// Empty iff the config is runnable.  Checked structurally on JSON load and
// again by run_experiment (for configs built in code).
std::vector<std::string> validate_config(const ExperimentConfig& config);

std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const std::string& text,
                                  const std::string& origin = "");
ExperimentConfig read_config(const std::filesystem::path& path);

enum class TrialVerdict { Coordinating, NotCoordinating, Undecided };

// "coordinating" / "not-coordinating" / "undecided" (summary CSV spelling).
std::string to_string(TrialVerdict verdict);

struct TrialResult {
  int trial = 0;
  TrialVerdict verdict = TrialVerdict::Undecided;
  long node_count = 0;
  double wall_time_ms = 0.0;
  // Set for coordinating trials only; paths relative to the output root.
  std::string witness_path;
  std::vector<std::string> certificate_paths;
};

struct ExperimentSummary {
  std::vector<TrialResult> trials;
  int coordinating = 0;
  int not_coordinating = 0;
  int undecided = 0;
};

// Runs the study and fills the output directory:
//
//   summary.csv                          trial,verdict,nodes,ms
//   summary.json                         counts, rates, study parameters
//   trials/trial_<tau>/witness.json      coordinating trials only
//   trials/trial_<tau>/certificate_agent<i>.json
//   manifest.json                        hashes of everything above
//
// Outputs are staged in a sibling directory and moved into place only on
// success (replacing out_dir if it exists); a failure leaves the target
// untouched.  Throws std::invalid_argument on an invalid config and
// propagates I/O errors.  Undecided trials do not throw; callers decide the
// exit semantics (the CLI exits nonzero iff any trial was undecided).
ExperimentSummary run_experiment(const ExperimentConfig& config);

struct PipelineResult {
  milp::Decision decision = milp::Decision::NotCoordinating;
  long node_count = 0;
  double wall_time_ms = 0.0;
  // Files written under out_dir (relative paths, manifest last).
  std::vector<std::string> artifacts;
};

// Dataset file -> detection -> (when coordinating) reconstruction:
//
//   verdict.json                         decision, instance shape, nodes
//   witness.json                         coordinating only
//   certificate_agent<i>.json            coordinating only, i = 1..M
//   contour_agent<i>.csv                 coordinating, two-good data only
//   manifest.json
//
// Same staging discipline as run_experiment.  Errors (unreadable or
// malformed dataset, exhausted node budget) propagate after the staging
// directory is removed; nothing is written at the target on failure.
PipelineResult run_pipeline(const std::filesystem::path& dataset_path,
                            const std::filesystem::path& out_dir,
                            double epsilon_strict = 0.0,
                            long node_budget = milp::DecideOptions{}.node_budget);

// FNV-1a 64-bit hash, 16 lowercase hex digits; the manifest's hash function.
std::string fnv1a64_hex(std::string_view bytes);

// Writes dir/manifest.json listing the given files (paths relative to dir,
// sorted) with the hash of each file's bytes.  The manifest never lists
// itself, so it is written last and excluded from its own digest.
void write_manifest(const std::filesystem::path& dir,
                    std::vector<std::string> artifact_paths);

// Stage-then-rename directory commit.  The constructor creates an empty
// staging directory next to the target (removing any stale one); commit()
// atomically replaces the target with the staged tree; the destructor
// removes the staging directory if commit() was never reached.  Refuses
// targets that normalize to the filesystem root, ".", "..", or an empty
// path, since committing would delete them.
class StagedDir {
 public:
  explicit StagedDir(const std::filesystem::path& target);
  ~StagedDir();
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;

  // Staging root; write artifacts under here.
  const std::filesystem::path& path() const { return staging_; }
  void commit();

 private:
  std::filesystem::path target_;
  std::filesystem::path staging_;
  bool committed_ = false;
};

}  // namespace coordrp::harness
