#include "coordrp/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "coordrp/rng.hpp"

using namespace coordrp;
using core::Dataset;
using core::Observation;
using core::PersonalizedAllocation;
using core::Vec;

namespace {

Dataset make_dataset(int M, int N, int T, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.num_agents = M;
  d.num_goods = N;
  for (int t = 0; t < T; ++t) {
    Observation ob;
    for (int k = 0; k < N; ++k) ob.probe.alpha.push_back(rng.uniform(0.1, 1.1));
    std::vector<Vec> truth(M, Vec(N));
    ob.aggregate.assign(N, 0.0);
    for (int i = 0; i < M; ++i) {
      for (int k = 0; k < N; ++k) {
        truth[i][k] = rng.uniform();
        ob.aggregate[k] += truth[i][k];
      }
    }
    for (int i = 0; i < M; ++i) {
      const double s = rng.uniform(0.1, 1.0);
      Vec hat(N);
      for (int k = 0; k < N; ++k) hat[k] = s * truth[i][k];
      ob.assignable.push_back(std::move(hat));
    }
    d.observations.push_back(std::move(ob));
  }
  return d;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("well-formed random datasets validate cleanly") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Dataset d = make_dataset(3, 2, 10, seed);
    CHECK(core::validate(d).empty());
  }
}

TEST_CASE("an assignable floor above the aggregate is flagged as dominance") {
  Dataset d = make_dataset(3, 2, 5, 11u);
  d.observations[2].assignable[0][0] = d.observations[2].aggregate[0] + 1.0;
  const auto violations = core::validate(d);
  // The oversized floor breaks both the per-agent cap and the per-good sum.
  REQUIRE(violations.size() == 2);
  CHECK(violations[0].rule == "dominance");
  CHECK(violations[0].t == 2);
  CHECK(violations[0].agent == 0);
  CHECK(violations[0].component == 0);
  CHECK(violations[1].rule == "assignable-sum");
}

TEST_CASE("structural defects are reported without throwing") {
  Dataset d = make_dataset(2, 2, 3, 5u);
  d.observations[1].probe.alpha = {0.5};  // wrong length
  auto v1 = core::validate(d);
  REQUIRE(v1.size() == 1);
  CHECK(v1[0].rule == "alpha-size");

  Dataset d2 = make_dataset(2, 2, 3, 6u);
  d2.observations[0].probe.alpha[1] = 0.0;  // prices must be positive
  auto v2 = core::validate(d2);
  REQUIRE(v2.size() == 1);
  CHECK(v2[0].rule == "alpha-positive");

  Dataset d3;
  CHECK(!core::validate(d3).empty());
}

TEST_CASE("group expenditure is the probe-aggregate inner product") {
  Dataset d;
  d.num_agents = 1;
  d.num_goods = 2;
  Observation ob;
  ob.probe.alpha = {0.5, 2.0};
  ob.aggregate = {4.0, 1.0};
  ob.assignable = {{0.0, 0.0}};
  d.observations.push_back(ob);
  CHECK(core::group_expenditure(d, 0) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK_THROWS_AS(core::group_expenditure(d, 1), std::out_of_range);
  CHECK_THROWS_AS(core::group_expenditure(d, -1), std::out_of_range);
}

TEST_CASE("JSON round trip reproduces the dataset bit for bit") {
  const Dataset d = make_dataset(3, 2, 10, 42u);
  const std::string text = core::dataset_to_json(d);
  const Dataset back = core::dataset_from_json(text);
  REQUIRE(back.num_agents == d.num_agents);
  REQUIRE(back.num_goods == d.num_goods);
  REQUIRE(back.horizon() == d.horizon());
  for (int t = 0; t < d.horizon(); ++t) {
    for (int k = 0; k < d.num_goods; ++k) {
      CHECK(back.observations[t].probe.alpha[k] == d.observations[t].probe.alpha[k]);
      CHECK(back.observations[t].aggregate[k] == d.observations[t].aggregate[k]);
    }
    for (int i = 0; i < d.num_agents; ++i) {
      for (int k = 0; k < d.num_goods; ++k) {
        CHECK(back.observations[t].assignable[i][k] ==
              d.observations[t].assignable[i][k]);
      }
    }
  }
  // Serializing the reparsed dataset must give the identical byte stream.
  CHECK(core::dataset_to_json(back) == text);
}

TEST_CASE("file IO round trip and CSV mirror") {
  const Dataset d = make_dataset(2, 2, 4, 77u);
  const auto jpath = temp_file("coordrp_ds_test.json");
  const auto cpath = temp_file("coordrp_ds_test.csv");
  core::write_dataset(d, jpath);
  const Dataset back = core::read_dataset(jpath);
  CHECK(core::dataset_to_json(back) == core::dataset_to_json(d));

  core::write_dataset_csv(d, cpath);
  std::ifstream csv(cpath);
  std::string header;
  std::getline(csv, header);
  CHECK(header ==
        "t,alpha_1,alpha_2,beta_1,beta_2,beta_hat_1_1,beta_hat_1_2,"
        "beta_hat_2_1,beta_hat_2_2");
  int rows = 0;
  for (std::string line; std::getline(csv, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == 4);
  std::filesystem::remove(jpath);
  std::filesystem::remove(cpath);
}

TEST_CASE("parse errors carry origin and line:column context") {
  const std::string bad = "{\n  \"version\": \"1\",\n  broken\n}";
  try {
    core::dataset_from_json(bad, "input.json");
    FAIL("expected ParseError");
  } catch (const core::ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("input.json:3:") != std::string::npos);
  }
}

TEST_CASE("schema version and shape mismatches are rejected") {
  const Dataset d = make_dataset(2, 2, 3, 9u);
  std::string text = core::dataset_to_json(d);

  std::string wrong_version = text;
  wrong_version.replace(wrong_version.find("\"1\""), 3, "\"9\"");
  CHECK_THROWS_AS(core::dataset_from_json(wrong_version), core::SchemaError);

  std::string wrong_T = text;
  wrong_T.replace(wrong_T.find("\"T\": 3"), 6, "\"T\": 4");
  CHECK_THROWS_AS(core::dataset_from_json(wrong_T), core::SchemaError);

  CHECK_THROWS_AS(core::dataset_from_json("[]"), core::SchemaError);
  CHECK_THROWS_AS(core::dataset_from_json("{\"version\":\"1\"}"), core::SchemaError);
}

TEST_CASE("allocation shape and floor checks") {
  const Dataset d = make_dataset(2, 2, 3, 13u);
  PersonalizedAllocation alloc;
  alloc.horizon = 3;
  alloc.num_agents = 2;
  alloc.num_goods = 2;
  alloc.q.assign(12, 0.0);
  // Split every aggregate exactly in half: adding-up holds, but halves can
  // undercut the assignable floors.
  for (int t = 0; t < 3; ++t)
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 2; ++k)
        alloc.at(t, i, k) = 0.5 * d.observations[t].aggregate[k];
  for (const auto& v : core::validate_allocation(d, alloc)) {
    CHECK(v.rule == "floor-dominance");
  }

  PersonalizedAllocation bad = alloc;
  bad.q[0] += 0.25;  // breaks adding-up in observation 0, good 0
  bool saw_adding_up = false;
  for (const auto& v : core::validate_allocation(d, bad)) {
    if (v.rule == "adding-up") {
      saw_adding_up = true;
      CHECK(v.t == 0);
      CHECK(v.component == 0);
    }
  }
  CHECK(saw_adding_up);

  PersonalizedAllocation misshapen = alloc;
  misshapen.horizon = 2;
  const auto vs = core::validate_allocation(d, misshapen);
  REQUIRE(vs.size() == 1);
  CHECK(vs[0].rule == "allocation-shape");
}

TEST_CASE("allocation JSON round trip is exact") {
  Rng rng(3u);
  PersonalizedAllocation alloc;
  alloc.horizon = 4;
  alloc.num_agents = 3;
  alloc.num_goods = 2;
  alloc.q.resize(24);
  for (double& x : alloc.q) x = rng.uniform();
  const std::string text = core::allocation_to_json(alloc);
  const PersonalizedAllocation back = core::allocation_from_json(text);
  REQUIRE(back.q.size() == alloc.q.size());
  for (std::size_t j = 0; j < alloc.q.size(); ++j) CHECK(back.q[j] == alloc.q[j]);
  CHECK(core::allocation_to_json(back) == text);
}

TEST_CASE("violation rendering is 1-based for humans") {
  core::Violation v{1, 0, 1, "dominance"};
  CHECK(core::to_string(v) == "dominance at observation 2, agent 1, component 2");
}
