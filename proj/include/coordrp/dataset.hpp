#pragma once

// Core data model: probes (price vectors), observations (aggregate bundle +
// per-agent assignable floors), datasets, and personalized allocations.
// Includes JSON/CSV serialization with strict schema checking.

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coordrp::core {

// Feasibility tolerance for re-substitution checks (adding-up, dominance of
// solver-produced allocations, rationalization residuals).
inline constexpr double kFeasTol = 1e-7;

using Vec = std::vector<double>;

// Sequential dot product.  Every module computes inner products through this
// one function so identical inputs give bit-identical results everywhere.
double dot(std::span<const double> a, std::span<const double> b);

// Sequential priced difference sum(alpha[k] * (a[k] - b[k])).  Preference
// tests and utility reconstruction both reduce to the sign of this quantity;
// routing them through one function makes their verdicts bit-consistent (the
// difference is formed before the product, so pair_gap(alpha, x, x) is exactly
// zero and swapping a with b negates the result exactly).
double pair_gap(std::span<const double> alpha, std::span<const double> a,
                std::span<const double> b);

struct Probe {
  Vec alpha;  // per-unit resource prices, all components > 0
};

struct Observation {
  Probe probe;
  Vec aggregate;                // total consumption bundle observed
  std::vector<Vec> assignable;  // per-agent attributable floors, one per agent
};

struct Dataset {
  int num_agents = 0;  // M
  int num_goods = 0;   // N
  std::vector<Observation> observations;

  int horizon() const { return static_cast<int>(observations.size()); }  // T
};

// A candidate split of each observed aggregate bundle among the agents,
// flattened [t][i][k] with t the observation, i the agent, k the good.
struct PersonalizedAllocation {
  int horizon = 0;
  int num_agents = 0;
  int num_goods = 0;
  std::vector<double> q;

  double& at(int t, int i, int k) {
    return q[(static_cast<std::size_t>(t) * num_agents + i) * num_goods + k];
  }
  double at(int t, int i, int k) const {
    return q[(static_cast<std::size_t>(t) * num_agents + i) * num_goods + k];
  }
  std::span<const double> bundle(int t, int i) const {
    return {q.data() + (static_cast<std::size_t>(t) * num_agents + i) * num_goods,
            static_cast<std::size_t>(num_goods)};
  }
};

struct Violation {
  int t = -1;          // observation index (0-based; -1 if dataset-level)
  int agent = -1;      // agent index (0-based; -1 if not agent-specific)
  int component = -1;  // good index (0-based; -1 if not component-specific)
  std::string rule;    // short machine-readable rule name
};

std::string to_string(const Violation& v);

// Structural and arithmetic checks.  Total: never throws on finite input;
// returns an empty vector iff the dataset is well-formed.
std::vector<Violation> validate(const Dataset& data);

// Checks an allocation against a dataset: shape, adding-up within kFeasTol,
// dominance over the assignable floors, nonnegativity.
std::vector<Violation> validate_allocation(const Dataset& data,
                                           const PersonalizedAllocation& alloc);

// alpha_t' aggregate_t for observation t (0-based).  Throws std::out_of_range.
double group_expenditure(const Dataset& data, int t);

// Shortest decimal string that round-trips to the same double.
std::string format_double(double x);

// ---- serialization ----------------------------------------------------------

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed JSON text; message carries origin plus 1-based line:column.
class ParseError : public IoError {
 public:
  using IoError::IoError;
};

// Well-formed JSON that does not match the expected schema or version.
class SchemaError : public IoError {
 public:
  using IoError::IoError;
};

std::string dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const std::string& text, const std::string& origin = "");
Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& data, const std::filesystem::path& path);

// CSV mirror (one row per observation; lossless shortest-round-trip numbers).
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);

std::string allocation_to_json(const PersonalizedAllocation& alloc);
PersonalizedAllocation allocation_from_json(const std::string& text,
                                            const std::string& origin = "");
PersonalizedAllocation read_allocation(const std::filesystem::path& path);
void write_allocation(const PersonalizedAllocation& alloc,
                      const std::filesystem::path& path);

}  // namespace coordrp::core
