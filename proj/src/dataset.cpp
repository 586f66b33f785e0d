#include "coordrp/dataset.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "json_util.hpp"

namespace coordrp::core {

using ordered_json = nlohmann::ordered_json;
using detail::parse_checked;
using detail::read_file;
using detail::require;
using detail::write_file;

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

double pair_gap(std::span<const double> alpha, std::span<const double> a,
                std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k)
    acc += alpha[k] * (a[k] - b[k]);
  return acc;
}

std::string to_string(const Violation& v) {
  std::ostringstream os;
  os << v.rule;
  if (v.t >= 0) os << " at observation " << (v.t + 1);
  if (v.agent >= 0) os << ", agent " << (v.agent + 1);
  if (v.component >= 0) os << ", component " << (v.component + 1);
  return os.str();
}

namespace {

bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

std::vector<Violation> validate(const Dataset& data) {
  std::vector<Violation> out;
  const int M = data.num_agents;
  const int N = data.num_goods;
  if (M < 1) out.push_back({-1, -1, -1, "agent-count"});
  if (N < 1) out.push_back({-1, -1, -1, "goods-dimension"});
  if (data.observations.empty()) out.push_back({-1, -1, -1, "empty-horizon"});
  if (!out.empty()) return out;

  for (int t = 0; t < data.horizon(); ++t) {
    const Observation& ob = data.observations[t];
    if (static_cast<int>(ob.probe.alpha.size()) != N) {
      out.push_back({t, -1, -1, "alpha-size"});
      continue;
    }
    if (static_cast<int>(ob.aggregate.size()) != N) {
      out.push_back({t, -1, -1, "aggregate-size"});
      continue;
    }
    if (static_cast<int>(ob.assignable.size()) != M) {
      out.push_back({t, -1, -1, "assignable-count"});
      continue;
    }
    bool sized = true;
    for (int i = 0; i < M; ++i) {
      if (static_cast<int>(ob.assignable[i].size()) != N) {
        out.push_back({t, i, -1, "assignable-size"});
        sized = false;
      }
    }
    if (!sized) continue;

    if (!all_finite(ob.probe.alpha) || !all_finite(ob.aggregate)) {
      out.push_back({t, -1, -1, "non-finite"});
      continue;
    }
    for (int i = 0; i < M; ++i) {
      if (!all_finite(ob.assignable[i])) {
        out.push_back({t, i, -1, "non-finite"});
        sized = false;
      }
    }
    if (!sized) continue;

    for (int k = 0; k < N; ++k) {
      if (!(ob.probe.alpha[k] > 0.0)) out.push_back({t, -1, k, "alpha-positive"});
      if (ob.aggregate[k] < 0.0) out.push_back({t, -1, k, "aggregate-negative"});
    }
    for (int i = 0; i < M; ++i) {
      for (int k = 0; k < N; ++k) {
        const double floor_ik = ob.assignable[i][k];
        if (floor_ik < 0.0) out.push_back({t, i, k, "assignable-negative"});
        if (floor_ik > ob.aggregate[k]) out.push_back({t, i, k, "dominance"});
      }
    }
    for (int k = 0; k < N; ++k) {
      double sum = 0.0;
      for (int i = 0; i < M; ++i) sum += ob.assignable[i][k];
      if (sum > ob.aggregate[k] + kFeasTol * (1.0 + std::abs(ob.aggregate[k]))) {
        out.push_back({t, -1, k, "assignable-sum"});
      }
    }
  }
  return out;
}

std::vector<Violation> validate_allocation(const Dataset& data,
                                           const PersonalizedAllocation& alloc) {
  std::vector<Violation> out;
  const int M = data.num_agents;
  const int N = data.num_goods;
  const int T = data.horizon();
  if (alloc.horizon != T || alloc.num_agents != M || alloc.num_goods != N ||
      alloc.q.size() != static_cast<std::size_t>(T) * M * N) {
    out.push_back({-1, -1, -1, "allocation-shape"});
    return out;
  }
  for (int t = 0; t < T; ++t) {
    const Observation& ob = data.observations[t];
    for (int k = 0; k < N; ++k) {
      double sum = 0.0;
      for (int i = 0; i < M; ++i) sum += alloc.at(t, i, k);
      if (std::abs(sum - ob.aggregate[k]) >
          kFeasTol * (1.0 + std::abs(ob.aggregate[k]))) {
        out.push_back({t, -1, k, "adding-up"});
      }
    }
    for (int i = 0; i < M; ++i) {
      for (int k = 0; k < N; ++k) {
        const double v = alloc.at(t, i, k);
        if (!std::isfinite(v)) {
          out.push_back({t, i, k, "non-finite"});
          continue;
        }
        if (v < -kFeasTol) out.push_back({t, i, k, "negative-quantity"});
        if (v < ob.assignable[i][k] - kFeasTol * (1.0 + ob.assignable[i][k])) {
          out.push_back({t, i, k, "floor-dominance"});
        }
      }
    }
  }
  return out;
}

double group_expenditure(const Dataset& data, int t) {
  if (t < 0 || t >= data.horizon())
    throw std::out_of_range("group_expenditure: observation index out of range");
  const Observation& ob = data.observations[t];
  return dot(ob.probe.alpha, ob.aggregate);
}

// ---- serialization ----------------------------------------------------------

namespace {

constexpr const char* kSchemaVersion = "1";

Vec as_vector(const ordered_json& j, int n, const std::string& origin,
              const std::string& what) {
  require(j.is_array() && static_cast<int>(j.size()) == n, origin,
          what + " must be an array of " + std::to_string(n) + " numbers");
  Vec v(n);
  for (int k = 0; k < n; ++k) {
    require(j[k].is_number(), origin, what + " must contain only numbers");
    v[k] = j[k].get<double>();
  }
  return v;
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  (void)ec;
  return std::string(buf, ptr);
}

std::string dataset_to_json(const Dataset& data) {
  ordered_json root;
  root["version"] = kSchemaVersion;
  root["N"] = data.num_goods;
  root["M"] = data.num_agents;
  root["T"] = data.horizon();
  ordered_json obs = ordered_json::array();
  for (const Observation& ob : data.observations) {
    ordered_json o;
    o["alpha"] = ob.probe.alpha;
    o["beta"] = ob.aggregate;
    ordered_json hats = ordered_json::array();
    for (const Vec& h : ob.assignable) hats.push_back(h);
    o["beta_hat"] = hats;
    obs.push_back(std::move(o));
  }
  root["observations"] = std::move(obs);
  return root.dump(2) + "\n";
}

Dataset dataset_from_json(const std::string& text, const std::string& origin) {
  const ordered_json root = parse_checked(text, origin);
  require(root.is_object(), origin, "top level must be an object");
  require(root.contains("version") && root["version"].is_string(), origin,
          "missing string field 'version'");
  require(root["version"].get<std::string>() == kSchemaVersion, origin,
          "unsupported schema version '" + root["version"].get<std::string>() +
              "' (expected '" + kSchemaVersion + "')");
  for (const char* field : {"N", "M", "T", "observations"}) {
    require(root.contains(field), origin, std::string("missing field '") + field + "'");
  }
  require(root["N"].is_number_integer() && root["M"].is_number_integer() &&
              root["T"].is_number_integer(),
          origin, "N, M, T must be integers");

  Dataset data;
  data.num_goods = root["N"].get<int>();
  data.num_agents = root["M"].get<int>();
  const int T = root["T"].get<int>();
  const ordered_json& obs = root["observations"];
  require(obs.is_array(), origin, "'observations' must be an array");
  require(static_cast<int>(obs.size()) == T, origin,
          "'observations' length disagrees with T");
  require(data.num_goods >= 1 && data.num_agents >= 1 && T >= 1, origin,
          "N, M, T must all be >= 1");

  for (int t = 0; t < T; ++t) {
    const ordered_json& o = obs[t];
    const std::string where = "observation " + std::to_string(t + 1);
    require(o.is_object(), origin, where + " must be an object");
    for (const char* field : {"alpha", "beta", "beta_hat"}) {
      require(o.contains(field), origin,
              where + " missing field '" + std::string(field) + "'");
    }
    Observation ob;
    ob.probe.alpha = as_vector(o["alpha"], data.num_goods, origin, where + " alpha");
    ob.aggregate = as_vector(o["beta"], data.num_goods, origin, where + " beta");
    const ordered_json& hats = o["beta_hat"];
    require(hats.is_array() && static_cast<int>(hats.size()) == data.num_agents,
            origin, where + " beta_hat must list one vector per agent");
    for (int i = 0; i < data.num_agents; ++i) {
      ob.assignable.push_back(as_vector(hats[i], data.num_goods, origin,
                                        where + " beta_hat[" + std::to_string(i + 1) +
                                            "]"));
    }
    data.observations.push_back(std::move(ob));
  }
  return data;
}

Dataset read_dataset(const std::filesystem::path& path) {
  return dataset_from_json(read_file(path), path.string());
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  write_file(path, dataset_to_json(data));
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "t";
  for (int k = 0; k < data.num_goods; ++k) os << ",alpha_" << (k + 1);
  for (int k = 0; k < data.num_goods; ++k) os << ",beta_" << (k + 1);
  for (int i = 0; i < data.num_agents; ++i)
    for (int k = 0; k < data.num_goods; ++k)
      os << ",beta_hat_" << (i + 1) << "_" << (k + 1);
  os << "\n";
  for (int t = 0; t < data.horizon(); ++t) {
    const Observation& ob = data.observations[t];
    os << (t + 1);
    for (double x : ob.probe.alpha) os << "," << format_double(x);
    for (double x : ob.aggregate) os << "," << format_double(x);
    for (const Vec& h : ob.assignable)
      for (double x : h) os << "," << format_double(x);
    os << "\n";
  }
  write_file(path, os.str());
}

std::string allocation_to_json(const PersonalizedAllocation& alloc) {
  ordered_json root;
  root["version"] = kSchemaVersion;
  root["T"] = alloc.horizon;
  root["M"] = alloc.num_agents;
  root["N"] = alloc.num_goods;
  ordered_json q = ordered_json::array();
  for (int t = 0; t < alloc.horizon; ++t) {
    ordered_json per_agent = ordered_json::array();
    for (int i = 0; i < alloc.num_agents; ++i) {
      ordered_json bundle = ordered_json::array();
      for (int k = 0; k < alloc.num_goods; ++k) bundle.push_back(alloc.at(t, i, k));
      per_agent.push_back(std::move(bundle));
    }
    q.push_back(std::move(per_agent));
  }
  root["q"] = std::move(q);
  return root.dump(2) + "\n";
}

PersonalizedAllocation allocation_from_json(const std::string& text,
                                            const std::string& origin) {
  const ordered_json root = parse_checked(text, origin);
  require(root.is_object(), origin, "top level must be an object");
  require(root.contains("version") && root["version"].is_string() &&
              root["version"].get<std::string>() == kSchemaVersion,
          origin, "missing or unsupported 'version'");
  for (const char* field : {"T", "M", "N", "q"}) {
    require(root.contains(field), origin, std::string("missing field '") + field + "'");
  }
  PersonalizedAllocation alloc;
  alloc.horizon = root["T"].get<int>();
  alloc.num_agents = root["M"].get<int>();
  alloc.num_goods = root["N"].get<int>();
  require(alloc.horizon >= 1 && alloc.num_agents >= 1 && alloc.num_goods >= 1,
          origin, "T, M, N must all be >= 1");
  const ordered_json& q = root["q"];
  require(q.is_array() && static_cast<int>(q.size()) == alloc.horizon, origin,
          "'q' must be a T-long array");
  alloc.q.resize(static_cast<std::size_t>(alloc.horizon) * alloc.num_agents *
                 alloc.num_goods);
  for (int t = 0; t < alloc.horizon; ++t) {
    const ordered_json& per_agent = q[t];
    require(per_agent.is_array() &&
                static_cast<int>(per_agent.size()) == alloc.num_agents,
            origin, "'q' rows must list one bundle per agent");
    for (int i = 0; i < alloc.num_agents; ++i) {
      Vec b = as_vector(per_agent[i], alloc.num_goods, origin, "allocation bundle");
      for (int k = 0; k < alloc.num_goods; ++k) alloc.at(t, i, k) = b[k];
    }
  }
  return alloc;
}

PersonalizedAllocation read_allocation(const std::filesystem::path& path) {
  return allocation_from_json(read_file(path), path.string());
}

void write_allocation(const PersonalizedAllocation& alloc,
                      const std::filesystem::path& path) {
  write_file(path, allocation_to_json(alloc));
}

}  // namespace coordrp::core
