#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpfl/baselines.hpp"
#include "mpfl/decoder.hpp"
#include "mpfl/encoder.hpp"
#include "mpfl/io.hpp"
#include "mpfl/model.hpp"
#include "mpfl/rng.hpp"
#include "mpfl/trainer.hpp"

namespace mpfl {

// One solver run on one instance. Runtime covers solving only.
struct RunResult {
  std::string instance_id;
  std::string solver;
  std::string mode;
  double cost = 0.0;
  double runtime_s = 0.0;
};

struct Reference {
  double cost = 0.0;
  bool optimal = true;  // false: best-known, not proven optimal
};

struct GapRow {
  std::string solver;
  std::string mode;
  std::size_t instances = 0;
  double obj = 0.0;
  double gap_pct = 0.0;
  double time_s = 0.0;
  bool best_known_reference = false;
};

struct GapTable {
  std::vector<GapRow> rows;
  std::vector<std::string> unmatched_ids;
};

inline double gap_percent(double cost, double reference) {
  return 100.0 * (cost - reference) / reference;
}

// Means of objective, gap and time per (solver, mode), in first-seen order.
inline GapTable gap_table(const std::vector<RunResult>& results,
                          const std::map<std::string, Reference>& refs) {
  GapTable table;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  for (const auto& r : results) {
    auto ref = refs.find(r.instance_id);
    if (ref == refs.end()) {
      table.unmatched_ids.push_back(r.instance_id);
      continue;
    }
    const auto key = std::make_pair(r.solver, r.mode);
    auto it = slot.find(key);
    if (it == slot.end()) {
      it = slot.emplace(key, table.rows.size()).first;
      table.rows.push_back({r.solver, r.mode, 0, 0.0, 0.0, 0.0, false});
    }
    GapRow& row = table.rows[it->second];
    ++row.instances;
    row.obj += r.cost;
    row.gap_pct += gap_percent(r.cost, ref->second.cost);
    row.time_s += r.runtime_s;
    row.best_known_reference = row.best_known_reference || !ref->second.optimal;
  }
  for (auto& row : table.rows) {
    const double n = static_cast<double>(row.instances);
    row.obj /= n;
    row.gap_pct /= n;
    row.time_s /= n;
  }
  return table;
}

// Policy runs over a corpus, one row per instance and mode. Mode 0 is greedy,
// S > 0 is best of S samples; sampling seeds depend on the instance only.
inline std::vector<RunResult> evaluate_policy(const ModelParameters& model,
                                              const std::vector<ProblemInstance>& corpus,
                                              const std::vector<std::size_t>& modes,
                                              std::uint64_t seed) {
  std::vector<RunResult> out;
  for (const auto& inst : corpus) {
    for (std::size_t s : modes) {
      Rng rng(derive_seed(seed, "evaluate-policy", fnv1a(inst.id)));
      const auto t0 = std::chrono::steady_clock::now();
      const Solution sol = solve_with_policy(inst, model, s, &rng);
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.push_back({inst.id, "policy", s == 0 ? "greedy" : "sample-" + std::to_string(s), sol.cost, dt});
    }
  }
  return out;
}

inline constexpr const char* kGapCsvHeader = "Algorithm,Mode,Instances,Obj.,Gap(%),Time(s),BestKnownRef";

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Leading '#' lines carry provenance and are ignored by parse_gap_csv.
inline std::string gap_table_csv(const GapTable& table, const std::string& manifest = "") {
  std::ostringstream os;
  if (!manifest.empty()) os << "# manifest: " << manifest << "\n";
  for (const auto& id : table.unmatched_ids) os << "# unmatched: " << id << "\n";
  os << kGapCsvHeader << "\n";
  for (const auto& r : table.rows) {
    os << r.solver << "," << r.mode << "," << r.instances << "," << format_double(r.obj) << ","
       << format_double(r.gap_pct) << "," << format_double(r.time_s) << ","
       << (r.best_known_reference ? 1 : 0) << "\n";
  }
  return os.str();
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline GapTable parse_gap_csv(const std::string& text) {
  GapTable table;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string tag = "# unmatched: ";
      if (line.rfind(tag, 0) == 0) table.unmatched_ids.push_back(line.substr(tag.size()));
      continue;
    }
    if (!header) {
      if (line != kGapCsvHeader) throw Error(ErrorKind::Schema, "unexpected gap table header");
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 7) throw Error(ErrorKind::Schema, "gap table row needs 7 fields");
    table.rows.push_back({f[0], f[1], std::stoul(f[2]), std::stod(f[3]), std::stod(f[4]),
                          std::stod(f[5]), f[6] == "1"});
  }
  return table;
}

struct PowerLawFit {
  double exponent = 0.0;
  double coefficient = 0.0;
  double r_squared = 0.0;
};

// Least squares on log t = log c + b log n.
inline PowerLawFit fit_power_law(const std::vector<double>& n, const std::vector<double>& t) {
  if (n.size() != t.size() || n.size() < 2) {
    throw Error(ErrorKind::Config, "power-law fit needs at least two points");
  }
  const double m = static_cast<double>(n.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double x = std::log(n[i]), y = std::log(t[i]);
    xs.push_back(x);
    ys.push_back(y);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  PowerLawFit fit;
  fit.exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  const double intercept = (sy - fit.exponent * sx) / m;
  fit.coefficient = std::exp(intercept);
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / m;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double pred = intercept + fit.exponent * xs[i];
    ss_res += (ys[i] - pred) * (ys[i] - pred);
    ss_tot += (ys[i] - mean_y) * (ys[i] - mean_y);
  }
  fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

struct ScalingPoint {
  std::size_t n = 0;
  double seconds = 0.0;  // median over repeats
};

// Median wall time of encode + greedy decode per N, single thread, fixed
// random-parameter model.
inline std::vector<ScalingPoint> scaling_sweep(const ModelParameters& model,
                                               const std::vector<std::size_t>& sizes,
                                               std::size_t periods, const std::vector<int>& medians,
                                               std::size_t repeats, std::uint64_t seed) {
  std::vector<ScalingPoint> out;
  for (std::size_t n : sizes) {
    const auto spec = custom_scenario(static_cast<int>(n), static_cast<int>(periods), medians);
    std::vector<double> times;
    for (std::size_t r = 0; r < repeats; ++r) {
      const auto inst = generate_instance(spec, derive_seed(seed, "scale", n * 1000 + r));
      const auto t0 = std::chrono::steady_clock::now();
      const Solution sol = solve_with_policy(inst, model, 0, nullptr);
      const auto t1 = std::chrono::steady_clock::now();
      if (sol.facilities.size() != periods) throw Error(ErrorKind::Validation, "bad scaling decode");
      times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    out.push_back({n, times[times.size() / 2]});
  }
  return out;
}

// Progressive configurations, in table order.
struct AblationRow {
  std::string label;
  ModelConfig model;
  double lambda_orth = 0.0;
  double lambda_ent = 0.0;
};

inline std::vector<AblationRow> ablation_rows(const ModelConfig& base, double lambda_orth,
                                              double lambda_ent) {
  ModelConfig c = base;
  c.plain_path = false;
  c.distance_bias = false;
  c.knn_sparse = false;
  c.memory = false;
  std::vector<AblationRow> rows;
  rows.push_back({"Baseline (plain attention)", c, 0.0, 0.0});
  c.distance_bias = true;
  rows.push_back({"+ Distance bias", c, 0.0, 0.0});
  c.knn_sparse = true;
  rows.push_back({"+ K-NN sparse", c, 0.0, 0.0});
  c.memory = true;
  rows.push_back({"+ Hopfield memory", c, 0.0, 0.0});
  rows.push_back({"+ Memory regularization", c, lambda_orth, lambda_ent});
  return rows;
}

// Provenance for every emitted artifact.
struct RunManifest {
  std::string command_line;
  nlohmann::json config;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::string> artifacts;
  std::string started_utc;
  std::string finished_utc;
  double wall_seconds = 0.0;

  std::string config_hash() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(config.dump());
    return os.str();
  }

  nlohmann::json to_json() const {
    return {{"command_line", command_line}, {"config", config},
            {"config_hash", config_hash()}, {"seeds", seeds},
            {"artifacts", artifacts},       {"started_utc", started_utc},
            {"finished_utc", finished_utc}, {"wall_seconds", wall_seconds}};
  }
};

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Worker count from MPFL_WORKERS, defaulting to 1.
inline std::size_t worker_count_from_env() {
  if (const char* v = std::getenv("MPFL_WORKERS")) {
    const long n = std::strtol(v, nullptr, 10);
    if (n > 0) return static_cast<std::size_t>(n);
  }
  return 1;
}

}  // namespace mpfl
