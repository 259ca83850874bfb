#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mpfl/error.hpp"
#include "mpfl/instance.hpp"

namespace mpfl {

using json = nlohmann::json;

// On-disk solution record; cost and runtime are whatever the solver reported.
struct SolutionRecord {
  std::string instance_id;
  FacilitySets facilities;
  double cost = 0.0;
  std::string solver;
  double runtime_s = 0.0;
};

namespace detail {

inline const json& require(const json& j, const char* field) {
  if (!j.is_object() || !j.contains(field)) {
    throw Error(ErrorKind::Schema, std::string("missing field \"") + field + "\"");
  }
  return j.at(field);
}

template <typename T>
T read_as(const json& j, const char* field) {
  try {
    return require(j, field).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema,
                std::string("field \"") + field + "\" has the wrong type: " + e.what());
  }
}

inline std::optional<double> read_optional(const json& j, const char* field) {
  if (!j.contains(field) || j.at(field).is_null()) return std::nullopt;
  if (!j.at(field).is_number()) {
    throw Error(ErrorKind::Schema, std::string("field \"") + field + "\" must be a number or null");
  }
  return j.at(field).get<double>();
}

inline json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace detail

inline json instance_to_json(const ProblemInstance& inst) {
  json nodes = json::array();
  for (const auto& p : inst.nodes) nodes.push_back({p.x, p.y});
  return {
      {"id", inst.id},
      {"seed", inst.seed},
      {"nodes", nodes},
      {"weights", inst.weights},
      {"p_schedule", inst.p_schedule},
      {"service_radius", detail::optional_json(inst.service_radius)},
      {"discount_rate", detail::optional_json(inst.discount_rate)},
  };
}

inline ProblemInstance instance_from_json(const json& j) {
  ProblemInstance inst;
  inst.id = detail::read_as<std::string>(j, "id");
  inst.seed = detail::read_as<std::uint64_t>(j, "seed");
  const auto coords = detail::read_as<std::vector<std::vector<double>>>(j, "nodes");
  inst.nodes.reserve(coords.size());
  for (const auto& c : coords) {
    if (c.size() != 2) throw Error(ErrorKind::Schema, "field \"nodes\" entries must be [x, y]");
    inst.nodes.push_back({c[0], c[1]});
  }
  inst.weights = detail::read_as<std::vector<std::vector<double>>>(j, "weights");
  inst.p_schedule = detail::read_as<std::vector<int>>(j, "p_schedule");
  inst.service_radius = detail::read_optional(j, "service_radius");
  inst.discount_rate = detail::read_optional(j, "discount_rate");
  check_instance(inst);
  return inst;
}

inline json solution_to_json(const SolutionRecord& rec) {
  return {
      {"instance_id", rec.instance_id},
      {"facilities", rec.facilities},
      {"cost", rec.cost},
      {"solver", rec.solver},
      {"runtime_s", rec.runtime_s},
  };
}

inline SolutionRecord solution_from_json(const json& j) {
  SolutionRecord rec;
  rec.instance_id = detail::read_as<std::string>(j, "instance_id");
  rec.facilities = detail::read_as<FacilitySets>(j, "facilities");
  rec.cost = detail::read_as<double>(j, "cost");
  rec.solver = detail::read_as<std::string>(j, "solver");
  rec.runtime_s = detail::read_as<double>(j, "runtime_s");
  return rec;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Schema, path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

inline void save_instance(const ProblemInstance& inst, const std::filesystem::path& path) {
  write_text_file(path, instance_to_json(inst).dump() + "\n");
}

inline ProblemInstance load_instance(const std::filesystem::path& path) {
  return instance_from_json(read_json_file(path));
}

inline void save_solution(const SolutionRecord& rec, const std::filesystem::path& path) {
  write_text_file(path, solution_to_json(rec).dump() + "\n");
}

inline SolutionRecord load_solution(const std::filesystem::path& path) {
  return solution_from_json(read_json_file(path));
}

}  // namespace mpfl
