#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "mpfl/instance.hpp"
#include "mpfl/rng.hpp"

namespace mpfl {

inline constexpr std::uint64_t kDefaultEnumerationCap = 2'000'000;

// C(n, k), saturating at UINT64_MAX.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    const std::uint64_t num = n - k + i;
    if (r > UINT64_MAX / num) return UINT64_MAX;
    r = r * num / i;
  }
  return r;
}

namespace detail {

// Nearest-open-facility cost of one period over a distance table.
class PeriodEvaluator {
 public:
  PeriodEvaluator(const ProblemInstance& inst, const DistanceTable& dist, std::size_t t)
      : n_(inst.node_count()), w_(inst.weights[t]), dist_(dist) {}

  double cost(std::span<const int> open) const {
    double total = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j : open) best = std::min(best, dist_(i, static_cast<std::size_t>(j)));
      total += w_[i] * best;
    }
    return total;
  }

  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  const std::vector<double>& w_;
  const DistanceTable& dist_;
};

inline std::vector<int> random_subset(std::size_t n, int p, Rng& rng) {
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  // Partial Fisher-Yates.
  for (int k = 0; k < p; ++k) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), n - 1);
    std::swap(all[static_cast<std::size_t>(k)], all[pick(rng)]);
  }
  all.resize(static_cast<std::size_t>(p));
  return all;
}

}  // namespace detail

// Exact optimum by lexicographic enumeration of each period's C(N, p_t)
// facility sets. The first lexicographic argmin wins ties.
inline Solution brute_force_optimal(const ProblemInstance& inst,
                                    std::uint64_t cap = kDefaultEnumerationCap) {
  const std::size_t n = inst.node_count();
  for (std::size_t t = 0; t < inst.period_count(); ++t) {
    const auto combos = binomial(n, static_cast<std::uint64_t>(inst.p_schedule[t]));
    if (combos > cap) {
      throw Error(ErrorKind::CapExceeded,
                  "period " + std::to_string(t) + " needs C(" + std::to_string(n) + ", " +
                      std::to_string(inst.p_schedule[t]) + ") = " +
                      std::to_string(combos) + " combinations, cap is " +
                      std::to_string(cap));
    }
  }
  DistanceTable dist(inst);
  Solution sol;
  sol.facilities.resize(inst.period_count());
  for (std::size_t t = 0; t < inst.period_count(); ++t) {
    detail::PeriodEvaluator eval(inst, dist, t);
    const int p = inst.p_schedule[t];
    std::vector<int> combo(static_cast<std::size_t>(p));
    std::iota(combo.begin(), combo.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> best_combo;
    while (true) {
      const double c = eval.cost(combo);
      if (c < best) {
        best = c;
        best_combo = combo;
      }
      // Next combination in lexicographic order.
      int k = p - 1;
      while (k >= 0 && combo[static_cast<std::size_t>(k)] ==
                           static_cast<int>(n) - p + k) {
        --k;
      }
      if (k < 0) break;
      ++combo[static_cast<std::size_t>(k)];
      for (int m = k + 1; m < p; ++m) {
        combo[static_cast<std::size_t>(m)] = combo[static_cast<std::size_t>(m - 1)] + 1;
      }
    }
    sol.facilities[t] = best_combo;
    sol.cost += best;
  }
  return sol;
}

inline Solution random_solution(const ProblemInstance& inst, Rng& rng) {
  Solution sol;
  for (std::size_t t = 0; t < inst.period_count(); ++t) {
    sol.facilities.push_back(detail::random_subset(inst.node_count(), inst.p_schedule[t], rng));
  }
  sol.cost = evaluate_cost(inst, sol.facilities);
  return sol;
}

// Vertex substitution with best-improvement swaps, per period, from a random
// start. Terminates at a 1-swap local optimum.
inline Solution teitz_bart(const ProblemInstance& inst, Rng& rng) {
  DistanceTable dist(inst);
  const std::size_t n = inst.node_count();
  Solution sol;
  for (std::size_t t = 0; t < inst.period_count(); ++t) {
    detail::PeriodEvaluator eval(inst, dist, t);
    auto open = detail::random_subset(n, inst.p_schedule[t], rng);
    double current = eval.cost(open);
    while (true) {
      std::vector<char> is_open(n, 0);
      for (int j : open) is_open[static_cast<std::size_t>(j)] = 1;
      double best = current;
      std::size_t best_slot = 0;
      int best_in = -1;
      for (std::size_t slot = 0; slot < open.size(); ++slot) {
        const int out = open[slot];
        for (std::size_t cand = 0; cand < n; ++cand) {
          if (is_open[cand]) continue;
          open[slot] = static_cast<int>(cand);
          const double c = eval.cost(open);
          if (c < best) {
            best = c;
            best_slot = slot;
            best_in = static_cast<int>(cand);
          }
        }
        open[slot] = out;
      }
      if (best_in < 0) break;
      open[best_slot] = best_in;
      current = best;
    }
    std::sort(open.begin(), open.end());
    sol.facilities.push_back(std::move(open));
  }
  sol.cost = evaluate_cost(inst, sol.facilities);
  return sol;
}

struct SAParams {
  double initial_temperature = 1.0;
  double cooling_factor = 0.97;
  std::size_t steps_per_temperature = 1000;
  double min_temperature = 1e-4;
  // Hard cap on proposed moves; unset means run the full cooling schedule.
  std::optional<std::size_t> max_moves;

  void check() const {
    if (!(initial_temperature > 0.0) || !(min_temperature > 0.0) ||
        !(cooling_factor > 0.0 && cooling_factor < 1.0) || steps_per_temperature == 0 ||
        !(min_temperature < initial_temperature)) {
      throw Error(ErrorKind::Config, "invalid simulated annealing parameters");
    }
  }

  // T0 = 10% of a random solution's cost, 100 N moves per level, stop at
  // 1e-4 T0.
  static SAParams defaults_for(const ProblemInstance& inst, double random_cost) {
    SAParams p;
    p.initial_temperature = std::max(0.1 * random_cost, 1e-12);
    p.cooling_factor = 0.97;
    p.steps_per_temperature = 100 * inst.node_count();
    p.min_temperature = 1e-4 * p.initial_temperature;
    return p;
  }
};

// Metropolis search over single swaps in a random period; returns the best
// state visited. The initial state is random_solution(inst, rng).
inline Solution simulated_annealing(const ProblemInstance& inst, const SAParams& params,
                                    Rng& rng) {
  params.check();
  DistanceTable dist(inst);
  const std::size_t n = inst.node_count();
  const std::size_t periods = inst.period_count();
  Solution state = random_solution(inst, rng);
  std::vector<detail::PeriodEvaluator> evals;
  std::vector<double> period_costs;
  for (std::size_t t = 0; t < periods; ++t) {
    evals.emplace_back(inst, dist, t);
    period_costs.push_back(evals.back().cost(state.facilities[t]));
  }
  Solution best = state;
  double current = std::accumulate(period_costs.begin(), period_costs.end(), 0.0);
  double best_cost = current;
  std::uniform_int_distribution<std::size_t> pick_period(0, periods - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t moves = 0;
  std::vector<int> closed;
  for (double temp = params.initial_temperature; temp >= params.min_temperature;
       temp *= params.cooling_factor) {
    for (std::size_t s = 0; s < params.steps_per_temperature; ++s) {
      if (params.max_moves && moves >= *params.max_moves) goto done;
      ++moves;
      const std::size_t t = pick_period(rng);
      auto& open = state.facilities[t];
      if (open.size() == n) continue;  // no closed node to swap in
      closed.clear();
      std::vector<char> is_open(n, 0);
      for (int j : open) is_open[static_cast<std::size_t>(j)] = 1;
      for (std::size_t j = 0; j < n; ++j) {
        if (!is_open[j]) closed.push_back(static_cast<int>(j));
      }
      std::uniform_int_distribution<std::size_t> pick_open(0, open.size() - 1);
      std::uniform_int_distribution<std::size_t> pick_closed(0, closed.size() - 1);
      const std::size_t slot = pick_open(rng);
      const int incoming = closed[pick_closed(rng)];
      const int outgoing = open[slot];
      open[slot] = incoming;
      const double c = evals[t].cost(open);
      const double delta = c - period_costs[t];
      if (delta <= 0.0 || unit(rng) < std::exp(-delta / temp)) {
        period_costs[t] = c;
        current = std::accumulate(period_costs.begin(), period_costs.end(), 0.0);
        if (current < best_cost) {
          best_cost = current;
          best = state;
        }
      } else {
        open[slot] = outgoing;
      }
    }
  }
done:
  for (auto& f : best.facilities) std::sort(f.begin(), f.end());
  best.cost = evaluate_cost(inst, best.facilities);
  return best;
}

inline Solution simulated_annealing(const ProblemInstance& inst, Rng& rng) {
  Rng probe = rng;
  const double reference = random_solution(inst, probe).cost;
  return simulated_annealing(inst, SAParams::defaults_for(inst, reference), rng);
}

}  // namespace mpfl
