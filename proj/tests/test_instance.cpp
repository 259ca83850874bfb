#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "helpers.hpp"
#include "mpfl/io.hpp"

using namespace mpfl;
using mpfl::test::make_instance;

TEST(EvaluateCost, SingleNodeServesItself) {
  auto inst = make_instance({{0.5, 0.5}}, {{1.0}}, {1});
  EXPECT_EQ(evaluate_cost(inst, {{0}}), 0.0);
}

TEST(EvaluateCost, TwoNodesUnitDistance) {
  auto inst = make_instance({{0, 0}, {1, 0}}, {{1, 1}}, {1});
  EXPECT_DOUBLE_EQ(evaluate_cost(inst, {{0}}), 1.0);
}

TEST(EvaluateCost, ThreeNodeTriangle) {
  auto inst = make_instance({{0, 0}, {1, 0}, {0, 1}}, {{1, 1, 1}}, {1});
  EXPECT_NEAR(evaluate_cost(inst, {{1}}), 1.0 + std::sqrt(2.0), 1e-12);
  double best = 1e9;
  int arg = -1;
  for (int j = 0; j < 3; ++j) {
    const double c = evaluate_cost(inst, {{j}});
    if (c < best) best = c, arg = j;
  }
  EXPECT_DOUBLE_EQ(best, 2.0);
  EXPECT_EQ(arg, 0);
}

TEST(EvaluateCost, Errors) {
  auto inst = make_instance({{0, 0}, {1, 0}}, {{1, 1}, {1, 1}}, {1, 1});
  try {
    evaluate_cost(inst, {{0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Shape);
  }
  try {
    evaluate_cost(inst, {{0}, {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Validation);
  }
  try {
    evaluate_cost(inst, {{0}, {2}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Validation);
  }
}

TEST(EvaluateCost, MatchesNaiveLoop) {
  const auto inst = generate_instance("Small", 3);
  Rng rng(9);
  for (int r = 0; r < 20; ++r) {
    FacilitySets f;
    for (int p : inst.p_schedule) {
      std::vector<int> all(inst.node_count());
      std::iota(all.begin(), all.end(), 0);
      std::shuffle(all.begin(), all.end(), rng);
      f.emplace_back(all.begin(), all.begin() + p);
    }
    EXPECT_NEAR(evaluate_cost(inst, f), test::naive_cost(inst, f), 1e-12);
  }
}

TEST(EvaluateCost, PermutationInvariant) {
  const auto inst = generate_instance("Small", 11);
  Rng rng(4);
  for (int r = 0; r < 10; ++r) {
    FacilitySets f;
    for (int p : inst.p_schedule) {
      std::vector<int> all(inst.node_count());
      std::iota(all.begin(), all.end(), 0);
      std::shuffle(all.begin(), all.end(), rng);
      f.emplace_back(all.begin(), all.begin() + p);
    }
    std::vector<int> perm(inst.node_count());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ProblemInstance moved = inst;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      moved.nodes[perm[i]] = inst.nodes[i];
      for (std::size_t t = 0; t < inst.period_count(); ++t) moved.weights[t][perm[i]] = inst.weights[t][i];
    }
    FacilitySets g = f;
    for (auto& set : g) {
      for (int& j : set) j = perm[j];
    }
    EXPECT_NEAR(evaluate_cost(inst, f), evaluate_cost(moved, g), 1e-12);
  }
}

TEST(EvaluateCost, DecomposesAcrossPeriods) {
  const auto inst = generate_instance("Medium", 5);
  Rng rng(1);
  FacilitySets f;
  for (int p : inst.p_schedule) {
    std::vector<int> all(inst.node_count());
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    f.emplace_back(all.begin(), all.begin() + p);
  }
  double sum = 0.0;
  for (std::size_t t = 0; t < inst.period_count(); ++t) {
    sum += evaluate_cost(period_slice(inst, t), {f[t]});
  }
  EXPECT_NEAR(evaluate_cost(inst, f), sum, 1e-12);
}

TEST(EvaluateCost, AddingFacilityNeverIncreasesCost) {
  const auto inst = generate_instance("Small", 2);
  std::vector<int> open;
  double last = 1e300;
  for (int j = 0; j < static_cast<int>(inst.node_count()); ++j) {
    open.push_back((j * 7) % static_cast<int>(inst.node_count()));
    const double c = period_cost(inst, 0, open);
    EXPECT_LE(c, last);
    last = c;
  }
  EXPECT_EQ(last, 0.0);
}

TEST(Validate, ReportsEachViolation) {
  auto inst = make_instance({{0, 0}, {1, 0}, {0, 1}}, {{1, 1, 1}, {1, 1, 1}}, {2, 1});
  EXPECT_TRUE(validate(inst, {{{0, 1}, {2}}, 0.0}).empty());

  auto v = validate(inst, {{{0}, {2}}, 0.0});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::Cardinality);
  EXPECT_EQ(v[0].period, 0);

  v = validate(inst, {{{1, 1}, {2}}, 0.0});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::Duplicate);
  EXPECT_EQ(v[0].index, 1);

  v = validate(inst, {{{0, 5}, {-1}}, 0.0});
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].kind, ViolationKind::OutOfRange);
  EXPECT_EQ(v[1].period, 1);

  v = validate(inst, {{{0, 1}}, 0.0});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::PeriodCount);
}

TEST(Generate, ScenarioShapes) {
  const auto small = generate_instance("Small", 1);
  EXPECT_EQ(small.node_count(), 20u);
  EXPECT_EQ(small.period_count(), 3u);
  for (int p : small.p_schedule) EXPECT_TRUE(p >= 2 && p <= 4);
  const auto medium = generate_instance("Medium", 1);
  EXPECT_EQ(medium.node_count(), 50u);
  EXPECT_EQ(medium.period_count(), 5u);
  const std::vector<int> allowed{2, 3, 4, 6, 8};
  for (int p : medium.p_schedule) {
    EXPECT_NE(std::find(allowed.begin(), allowed.end(), p), allowed.end());
  }
  EXPECT_EQ(small.id, "Small-1");
  for (const auto& row : medium.weights) {
    for (double w : row) EXPECT_TRUE(w >= 0.5 && w <= 1.5);
  }
}

TEST(Generate, Deterministic) {
  const auto a = generate_instance("Large", 42);
  const auto b = generate_instance("Large", 42);
  EXPECT_EQ(a, b);
  EXPECT_EQ(instance_to_json(a).dump(), instance_to_json(b).dump());
  EXPECT_NE(generate_instance("Large", 43).nodes, a.nodes);
}

TEST(Generate, Errors) {
  try {
    generate_instance("Tiny", 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Usage);
  }
  EXPECT_THROW(generate_instance(custom_scenario(3, 1, {4}), 1), Error);
  EXPECT_THROW(generate_instance(custom_scenario(3, 0, {1}), 1), Error);
}

TEST(Knn, CollinearNodes) {
  std::vector<Point> pts{{0, 0}, {0.25, 0}, {0.5, 0}, {0.75, 0}};
  const auto nb = knn_neighbors(pts, 1);
  EXPECT_EQ(nb, (std::vector<std::vector<int>>{{1}, {0}, {1}, {2}}));
}

TEST(Knn, SaturatesAtNMinusOne) {
  const auto inst = generate_instance("Small", 8);
  const auto nb = knn_neighbors(inst, 50);
  for (std::size_t i = 0; i < nb.size(); ++i) {
    EXPECT_EQ(nb[i].size(), inst.node_count() - 1);
    EXPECT_EQ(std::count(nb[i].begin(), nb[i].end(), static_cast<int>(i)), 0);
  }
}

TEST(Knn, TiesToLowerIndex) {
  std::vector<Point> pts{{0.5, 0.5}, {0.75, 0.5}, {0.25, 0.5}, {0.5, 0.75}};
  const auto nb = knn_neighbors(pts, 2);
  EXPECT_EQ(nb[0], (std::vector<int>{1, 2}));
}

TEST(Knn, SortedAndExact) {
  const auto inst = generate_instance("Large", 5);
  const std::size_t k = 12;
  const auto nb = knn_neighbors(inst, k);
  for (std::size_t i = 0; i < inst.node_count(); ++i) {
    std::vector<std::pair<double, int>> all;
    for (std::size_t j = 0; j < inst.node_count(); ++j) {
      if (j != i) all.push_back({inst.dist(i, j), static_cast<int>(j)});
    }
    std::sort(all.begin(), all.end());
    ASSERT_EQ(nb[i].size(), k);
    for (std::size_t r = 0; r < k; ++r) EXPECT_EQ(nb[i][r], all[r].second);
  }
}

TEST(Knn, GridMatchesBruteForce) {
  Rng rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point> pts(3000);
  for (auto& p : pts) p = {u(rng), u(rng)};
  // Exact duplicates and a lattice row exercise tie handling.
  pts[10] = pts[20];
  for (int i = 0; i < 50; ++i) pts[100 + i] = {0.02 * i, 0.5};
  const auto grid = knn_neighbors(pts, 16);
  const auto brute = detail::knn_brute(pts, 16);
  EXPECT_EQ(grid, brute);
}

TEST(Io, InstanceRoundTrip) {
  const auto dir = test::temp_dir("io");
  auto inst = generate_instance("Small", 19);
  save_instance(inst, dir / "a.json");
  EXPECT_EQ(load_instance(dir / "a.json"), inst);
  inst.service_radius.reset();
  inst.discount_rate.reset();
  save_instance(inst, dir / "b.json");
  EXPECT_EQ(load_instance(dir / "b.json"), inst);
}

TEST(Io, SolutionRoundTrip) {
  const auto dir = test::temp_dir("io-sol");
  const SolutionRecord rec{"Small-1", {{1, 2}, {0, 3, 5}}, 3.25, "teitz-bart", 0.5};
  save_solution(rec, dir / "s.json");
  const auto back = load_solution(dir / "s.json");
  EXPECT_EQ(back.instance_id, rec.instance_id);
  EXPECT_EQ(back.facilities, rec.facilities);
  EXPECT_EQ(back.cost, rec.cost);
  EXPECT_EQ(back.solver, rec.solver);
  EXPECT_EQ(back.runtime_s, rec.runtime_s);
}

TEST(Io, MissingFieldNamesIt) {
  auto j = instance_to_json(generate_instance("Small", 1));
  j.erase("p_schedule");
  try {
    instance_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Schema);
    EXPECT_NE(std::string(e.what()).find("p_schedule"), std::string::npos);
  }
}

TEST(Io, NegativeWeightIsValidationError) {
  auto j = instance_to_json(generate_instance("Small", 1));
  j["weights"][0][3] = -0.5;
  try {
    instance_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Validation);
  }
}

TEST(Io, MissingFileIsIoError) {
  try {
    load_instance("/nonexistent/instance.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
}
