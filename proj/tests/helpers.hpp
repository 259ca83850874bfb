#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mpfl/instance.hpp"

namespace mpfl::test {

inline ProblemInstance make_instance(std::vector<Point> nodes,
                                     std::vector<std::vector<double>> weights,
                                     std::vector<int> p) {
  ProblemInstance inst;
  inst.id = "hand";
  inst.nodes = std::move(nodes);
  inst.weights = std::move(weights);
  inst.p_schedule = std::move(p);
  return inst;
}

// Scratch directory under the build tree, emptied on creation.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mpfl-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Reference period cost with no shared code path: plain loops over sqrt.
inline double naive_cost(const ProblemInstance& inst, const FacilitySets& f) {
  double total = 0.0;
  for (std::size_t t = 0; t < f.size(); ++t) {
    for (std::size_t i = 0; i < inst.nodes.size(); ++i) {
      double best = 1e300;
      for (int j : f[t]) {
        const double dx = inst.nodes[i].x - inst.nodes[j].x;
        const double dy = inst.nodes[i].y - inst.nodes[j].y;
        const double d = std::sqrt(dx * dx + dy * dy);
        if (d < best) best = d;
      }
      total += inst.weights[t][i] * best;
    }
  }
  return total;
}

}  // namespace mpfl::test
