#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpfl/error.hpp"
#include "mpfl/rng.hpp"

namespace mpfl {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

// Multi-period p-median instance. Every node is both a customer and a
// facility candidate. weights[t][i] is the demand of node i in period t.
struct ProblemInstance {
  std::string id;
  std::uint64_t seed = 0;
  std::vector<Point> nodes;
  std::vector<std::vector<double>> weights;
  std::vector<int> p_schedule;
  // Metadata only; cost evaluation ignores both.
  std::optional<double> service_radius;
  std::optional<double> discount_rate;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t period_count() const { return p_schedule.size(); }
  double dist(std::size_t i, std::size_t j) const {
    return distance(nodes[i], nodes[j]);
  }

  friend bool operator==(const ProblemInstance&,
                         const ProblemInstance&) = default;
};

using FacilitySets = std::vector<std::vector<int>>;

struct Solution {
  FacilitySets facilities;
  double cost = 0.0;
};

// Throws Error(Validation) naming the first broken invariant.
inline void check_instance(const ProblemInstance& inst) {
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorKind::Validation, "instance '" + inst.id + "': " + msg);
  };
  const std::size_t n = inst.node_count();
  if (n == 0) fail("no nodes");
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = inst.nodes[i];
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
      fail("node " + std::to_string(i) + " outside the unit square");
    }
  }
  if (inst.p_schedule.empty()) fail("p_schedule is empty");
  if (inst.weights.size() != inst.p_schedule.size()) {
    fail("weights has " + std::to_string(inst.weights.size()) +
         " periods but p_schedule has " +
         std::to_string(inst.p_schedule.size()));
  }
  for (std::size_t t = 0; t < inst.weights.size(); ++t) {
    const auto& row = inst.weights[t];
    if (row.size() != n) {
      fail("weights[" + std::to_string(t) + "] has length " +
           std::to_string(row.size()) + ", expected " + std::to_string(n));
    }
    bool any_positive = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(row[i] >= 0.0) || !std::isfinite(row[i])) {
        fail("negative or non-finite weight at period " + std::to_string(t) +
             ", node " + std::to_string(i));
      }
      any_positive = any_positive || row[i] > 0.0;
    }
    if (!any_positive) fail("period " + std::to_string(t) + " has no demand");
    const int p = inst.p_schedule[t];
    if (p < 1 || static_cast<std::size_t>(p) > n) {
      fail("p_schedule[" + std::to_string(t) + "] = " + std::to_string(p) +
           " outside [1, N]");
    }
  }
  if (inst.service_radius && *inst.service_radius < 0.0) {
    fail("negative service_radius");
  }
}

// Cost of one period given its open facilities: each customer goes to its
// nearest open facility.
inline double period_cost(const ProblemInstance& inst, std::size_t t,
                          std::span<const int> open) {
  const std::size_t n = inst.node_count();
  const auto& w = inst.weights[t];
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j : open) best = std::min(best, inst.dist(i, static_cast<std::size_t>(j)));
    total += w[i] * best;
  }
  return total;
}

inline double evaluate_cost(const ProblemInstance& inst,
                            const FacilitySets& facilities) {
  if (facilities.size() != inst.period_count()) {
    throw Error(ErrorKind::Shape,
                "facility sets cover " + std::to_string(facilities.size()) +
                    " periods, instance has " +
                    std::to_string(inst.period_count()));
  }
  const int n = static_cast<int>(inst.node_count());
  double total = 0.0;
  for (std::size_t t = 0; t < facilities.size(); ++t) {
    if (facilities[t].empty()) {
      throw Error(ErrorKind::Validation,
                  "empty facility set in period " + std::to_string(t));
    }
    for (int j : facilities[t]) {
      if (j < 0 || j >= n) {
        throw Error(ErrorKind::Validation,
                    "facility index " + std::to_string(j) +
                        " out of range in period " + std::to_string(t));
      }
    }
    total += period_cost(inst, t, facilities[t]);
  }
  return total;
}

enum class ViolationKind { PeriodCount, Cardinality, OutOfRange, Duplicate };

struct Violation {
  ViolationKind kind;
  int period = -1;
  int index = -1;
  std::string message;
};

inline std::vector<Violation> validate(const ProblemInstance& inst,
                                       const Solution& sol) {
  std::vector<Violation> out;
  if (sol.facilities.size() != inst.period_count()) {
    out.push_back({ViolationKind::PeriodCount, -1, -1,
                   "solution has " + std::to_string(sol.facilities.size()) +
                       " periods, instance has " +
                       std::to_string(inst.period_count())});
  }
  const int n = static_cast<int>(inst.node_count());
  const std::size_t periods = std::min(sol.facilities.size(), inst.period_count());
  for (std::size_t t = 0; t < periods; ++t) {
    const auto& open = sol.facilities[t];
    const int period = static_cast<int>(t);
    if (static_cast<int>(open.size()) != inst.p_schedule[t]) {
      out.push_back({ViolationKind::Cardinality, period, -1,
                     "period " + std::to_string(t) + " opens " +
                         std::to_string(open.size()) + " facilities, expected " +
                         std::to_string(inst.p_schedule[t])});
    }
    std::vector<char> seen(static_cast<std::size_t>(std::max(n, 0)), 0);
    for (int j : open) {
      if (j < 0 || j >= n) {
        out.push_back({ViolationKind::OutOfRange, period, j,
                       "index " + std::to_string(j) + " out of range in period " +
                           std::to_string(t)});
        continue;
      }
      if (seen[static_cast<std::size_t>(j)]) {
        out.push_back({ViolationKind::Duplicate, period, j,
                       "index " + std::to_string(j) + " repeated in period " +
                           std::to_string(t)});
      }
      seen[static_cast<std::size_t>(j)] = 1;
    }
  }
  return out;
}

// Scenario presets. N, T, median lists and radii follow the benchmark table;
// the discount rate is drawn from [0.12, 0.2] and stored as metadata.
struct ScenarioSpec {
  std::string name;
  int nodes = 0;
  int periods = 0;
  std::vector<int> medians;
  std::optional<double> service_radius;
};

inline const std::vector<ScenarioSpec>& scenario_table() {
  static const std::vector<ScenarioSpec> table = {
      {"Small", 20, 3, {2, 3, 4}, 0.32},
      {"Medium", 50, 5, {2, 3, 4, 6, 8}, 0.24},
      {"Large", 100, 7, {2, 4, 7, 9, 10, 13, 15}, 0.16},
      {"X-Large", 500, 9, {9, 10, 13, 15, 17, 19}, 0.08},
      {"XX-Large", 1000, 11, {9, 10, 13, 15, 17, 19, 21, 25}, 0.05},
  };
  return table;
}

inline ScenarioSpec scenario(const std::string& name) {
  for (const auto& s : scenario_table()) {
    if (s.name == name) return s;
  }
  throw Error(ErrorKind::Usage, "unknown scenario '" + name + "'");
}

inline ScenarioSpec custom_scenario(int nodes, int periods, std::vector<int> medians) {
  return {"custom-N" + std::to_string(nodes) + "-T" + std::to_string(periods),
          nodes, periods, std::move(medians), std::nullopt};
}

inline ProblemInstance generate_instance(const ScenarioSpec& spec,
                                         std::uint64_t seed) {
  if (spec.periods < 1) throw Error(ErrorKind::Config, "scenario needs T >= 1");
  if (spec.medians.empty()) throw Error(ErrorKind::Config, "scenario has no median choices");
  for (int p : spec.medians) {
    if (p < 1 || p > spec.nodes) {
      throw Error(ErrorKind::Config, "median choice " + std::to_string(p) +
                                         " exceeds N = " + std::to_string(spec.nodes));
    }
  }
  Rng rng(derive_seed(seed, "instance"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> demand(0.5, 1.5);
  std::uniform_int_distribution<std::size_t> pick(0, spec.medians.size() - 1);
  std::uniform_real_distribution<double> discount(0.12, 0.2);

  ProblemInstance inst;
  inst.id = spec.name + "-" + std::to_string(seed);
  inst.seed = seed;
  inst.nodes.resize(static_cast<std::size_t>(spec.nodes));
  for (auto& p : inst.nodes) {
    p.x = unit(rng);
    p.y = unit(rng);
  }
  inst.weights.assign(static_cast<std::size_t>(spec.periods),
                      std::vector<double>(static_cast<std::size_t>(spec.nodes)));
  for (auto& row : inst.weights) {
    for (auto& w : row) w = demand(rng);
  }
  inst.p_schedule.resize(static_cast<std::size_t>(spec.periods));
  for (auto& p : inst.p_schedule) p = spec.medians[pick(rng)];
  inst.service_radius = spec.service_radius;
  inst.discount_rate = discount(rng);
  return inst;
}

inline ProblemInstance generate_instance(const std::string& scenario_name,
                                         std::uint64_t seed) {
  return generate_instance(scenario(scenario_name), seed);
}

// Single-period view, used by tests of cost decomposition.
inline ProblemInstance period_slice(const ProblemInstance& inst, std::size_t t) {
  ProblemInstance out = inst;
  out.weights = {inst.weights.at(t)};
  out.p_schedule = {inst.p_schedule.at(t)};
  return out;
}

namespace detail {

struct Candidate {
  double d;
  int j;
  bool operator<(const Candidate& o) const {
    return d < o.d || (d == o.d && j < o.j);
  }
};

inline std::vector<std::vector<int>> knn_brute(std::span<const Point> pts,
                                               std::size_t k) {
  const std::size_t n = pts.size();
  std::vector<std::vector<int>> out(n);
  std::vector<Candidate> cand;
  cand.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) cand.push_back({distance(pts[i], pts[j]), static_cast<int>(j)});
    }
    const std::size_t take = std::min(k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take),
                      cand.end());
    out[i].reserve(take);
    for (std::size_t c = 0; c < take; ++c) out[i].push_back(cand[c].j);
  }
  return out;
}

// Uniform grid over the unit square with ring-by-ring search. Exact: a ring is
// only skipped once the k-th candidate is closer than anything it could hold.
inline std::vector<std::vector<int>> knn_grid(std::span<const Point> pts,
                                              std::size_t k) {
  const std::size_t n = pts.size();
  const int side = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(n) / 2.0)));
  const double cell = 1.0 / side;
  auto cell_of = [&](double v) {
    return std::clamp(static_cast<int>(v / cell), 0, side - 1);
  };
  std::vector<std::vector<int>> buckets(static_cast<std::size_t>(side * side));
  for (std::size_t i = 0; i < n; ++i) {
    buckets[static_cast<std::size_t>(cell_of(pts[i].y) * side + cell_of(pts[i].x))]
        .push_back(static_cast<int>(i));
  }
  const std::size_t want = std::min(k, n - 1);
  std::vector<std::vector<int>> out(n);
  std::vector<Candidate> cand;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    const int cx = cell_of(pts[i].x);
    const int cy = cell_of(pts[i].y);
    for (int ring = 0;; ++ring) {
      for (int gy = cy - ring; gy <= cy + ring; ++gy) {
        for (int gx = cx - ring; gx <= cx + ring; ++gx) {
          if (std::max(std::abs(gx - cx), std::abs(gy - cy)) != ring) continue;
          if (gx < 0 || gy < 0 || gx >= side || gy >= side) continue;
          for (int j : buckets[static_cast<std::size_t>(gy * side + gx)]) {
            if (static_cast<std::size_t>(j) != i) {
              cand.push_back({distance(pts[i], pts[static_cast<std::size_t>(j)]), j});
            }
          }
        }
      }
      const bool covered = ring >= side;
      if (cand.size() >= want || covered) {
        std::sort(cand.begin(), cand.end());
        // Every unvisited point lies at least `ring * cell` away (the point's
        // offset inside its own cell only increases that bound).
        const double reach = ring * cell;
        if (covered || (want > 0 && cand[want - 1].d < reach) || want == 0) break;
      }
    }
    out[i].reserve(want);
    for (std::size_t c = 0; c < want; ++c) out[i].push_back(cand[c].j);
  }
  return out;
}

}  // namespace detail

inline constexpr std::size_t kBruteForceKnnLimit = 2000;

// K nearest other nodes per node, nearest first, ties to the lower index.
inline std::vector<std::vector<int>> knn_neighbors(std::span<const Point> pts,
                                                   std::size_t k) {
  if (pts.size() <= kBruteForceKnnLimit) return detail::knn_brute(pts, k);
  return detail::knn_grid(pts, k);
}

inline std::vector<std::vector<int>> knn_neighbors(const ProblemInstance& inst,
                                                   std::size_t k) {
  return knn_neighbors(std::span<const Point>(inst.nodes), k);
}

// Pairwise distances, materialized only up to kBruteForceKnnLimit nodes.
class DistanceTable {
 public:
  explicit DistanceTable(const ProblemInstance& inst) : inst_(&inst) {
    const std::size_t n = inst.node_count();
    if (n <= kBruteForceKnnLimit) {
      cache_.resize(n * n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) cache_[i * n + j] = inst.dist(i, j);
      }
    }
  }

  double operator()(std::size_t i, std::size_t j) const {
    if (cache_.empty()) return inst_->dist(i, j);
    return cache_[i * inst_->node_count() + j];
  }

 private:
  const ProblemInstance* inst_;
  std::vector<double> cache_;
};

}  // namespace mpfl
