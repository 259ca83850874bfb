#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mpfl/baselines.hpp"
#include "mpfl/bench.hpp"
#include "mpfl/decoder.hpp"
#include "mpfl/diff/gradcheck.hpp"
#include "mpfl/encoder.hpp"
#include "mpfl/error.hpp"
#include "mpfl/io.hpp"
#include "mpfl/model.hpp"
#include "mpfl/policy_gradcheck.hpp"
#include "mpfl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mpfl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct ScenarioArgs {
  std::string name;
  int n = 0;
  int t = 0;
  std::vector<int> medians;

  void add(CLI::App* app) {
    app->add_option("--scenario", name, "Named scenario (Small, Medium, Large, X-Large, XX-Large)");
    app->add_option("--n", n, "Custom node count");
    app->add_option("--t", t, "Custom period count");
    app->add_option("--medians", medians, "Custom p choices")->delimiter(',');
  }

  ScenarioSpec resolve() const {
    if (!name.empty()) return scenario(name);
    if (n <= 0 || t <= 0 || medians.empty()) {
      throw Error(ErrorKind::Usage, "give --scenario or all of --n, --t, --medians");
    }
    return custom_scenario(n, t, medians);
  }
};

struct ModelArgs {
  ModelConfig cfg;
  bool no_distance_bias = false;
  bool no_knn = false;
  bool no_memory = false;

  void add(CLI::App* app) {
    app->add_option("--d-h", cfg.d_h, "Embedding width");
    app->add_option("--heads", cfg.heads, "Attention heads");
    app->add_option("--layers", cfg.layers, "Encoder layers");
    app->add_option("--knn", cfg.knn, "Neighbours per node");
    app->add_option("--ffn", cfg.ffn_hidden, "Feed-forward width");
    app->add_option("--phi", cfg.phi_hidden, "Distance MLP width");
    app->add_option("--slots", cfg.memory_slots, "Memory slots");
    app->add_option("--beta", cfg.beta, "Read inverse temperature (0: 1/sqrt(d_h))");
    app->add_flag("--learn-beta", cfg.learn_beta, "Train the read temperature");
    app->add_option("--init-seed", cfg.init_seed, "Parameter init seed");
    app->add_flag("--no-distance-bias", no_distance_bias);
    app->add_flag("--no-knn", no_knn);
    app->add_flag("--no-memory", no_memory);
    app->add_flag("--plain", cfg.plain_path, "Plain attention encoder/decoder");
  }

  ModelConfig resolve(const ScenarioSpec& spec) const {
    ModelConfig c = cfg;
    c.periods = static_cast<std::size_t>(spec.periods);
    c.distance_bias = !no_distance_bias;
    c.knn_sparse = !no_knn;
    c.memory = !no_memory;
    return c;
  }
};

struct TrainArgs {
  TrainConfig cfg;
  bool entropy_penalty = false;
  std::size_t workers = 0;

  void add(CLI::App* app) {
    app->add_option("--lr", cfg.lr);
    app->add_option("--batch", cfg.batch_size);
    app->add_option("--epochs", cfg.epochs);
    app->add_option("--steps", cfg.steps_per_epoch, "Steps per epoch");
    app->add_option("--lambda-orth", cfg.lambda_orth);
    app->add_option("--lambda-ent", cfg.lambda_ent);
    app->add_flag("--entropy-penalty", entropy_penalty, "Use +H(alpha) instead of the bonus");
    app->add_option("--validation", cfg.validation_size, "Validation corpus size");
    app->add_option("--seed", cfg.seed);
    app->add_option("--workers", workers, "Worker replicas (default: MPFL_WORKERS or 1)");
    app->add_option("--baseline-warmup", cfg.baseline_warmup_epochs, "Epochs on a moving-average baseline before the rollout baseline");
    app->add_option("--warmup-decay", cfg.warmup_decay, "Moving-average decay during warmup");
  }

  TrainConfig resolve() const {
    TrainConfig c = cfg;
    c.entropy_bonus = !entropy_penalty;
    c.workers = workers ? workers : worker_count_from_env();
    return c;
  }
};

std::string command_line(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

void write_manifest(RunManifest& m, Clock::time_point t0, const fs::path& path) {
  m.finished_utc = utc_now();
  m.wall_seconds = seconds_since(t0);
  write_text_file(path, m.to_json().dump(2) + "\n");
}

fs::path manifest_path_for(const fs::path& artifact) {
  return fs::path(artifact.string() + ".manifest.json");
}

// ---- generate ----

struct GenerateArgs {
  ScenarioArgs scen;
  std::size_t count = 100;
  std::uint64_t seed = 1;
  bool with_oracle = false;
  std::uint64_t cap = kDefaultEnumerationCap;
  std::string out = "corpus";
};

int run_generate(const GenerateArgs& a, RunManifest& manifest) {
  const auto t0 = Clock::now();
  const ScenarioSpec spec = a.scen.resolve();
  const fs::path dir = a.out;
  fs::create_directories(dir / "instances");
  if (a.with_oracle) fs::create_directories(dir / "oracle");
  manifest.config = {{"scenario", spec.name}, {"count", a.count}, {"with_oracle", a.with_oracle},
                     {"cap", a.cap}};
  manifest.seeds["corpus"] = a.seed;
  json index = json::array();
  for (std::size_t i = 0; i < a.count; ++i) {
    const auto inst = generate_instance(spec, derive_seed(a.seed, "corpus", i));
    const fs::path ipath = dir / "instances" / (inst.id + ".json");
    save_instance(inst, ipath);
    json entry = {{"id", inst.id}, {"instance", fs::relative(ipath, dir).string()}};
    if (a.with_oracle) {
      const auto s0 = Clock::now();
      const Solution sol = brute_force_optimal(inst, a.cap);
      const double rt = seconds_since(s0);
      const fs::path opath = dir / "oracle" / (inst.id + ".json");
      save_solution({inst.id, sol.facilities, sol.cost, "oracle", rt}, opath);
      entry["oracle"] = fs::relative(opath, dir).string();
      entry["oracle_cost"] = sol.cost;
    }
    index.push_back(entry);
  }
  write_text_file(dir / "corpus.json", index.dump(2) + "\n");
  manifest.artifacts.push_back((dir / "corpus.json").string());
  write_manifest(manifest, t0, dir / "manifest.json");
  std::cout << "wrote " << a.count << " instances to " << dir.string()
            << (a.with_oracle ? " with oracle solutions" : "") << "\n";
  return 0;
}

// ---- solvers ----

struct SolverRun {
  Solution solution;
  double runtime_s = 0.0;
};

// Timing excludes instance and model loading.
SolverRun run_solver(const std::string& solver, const ProblemInstance& inst,
                     const ModelParameters* model, std::size_t samples, std::uint64_t seed,
                     std::uint64_t cap) {
  Rng rng(derive_seed(seed, "solve-" + solver, fnv1a(inst.id)));
  SolverRun out;
  const auto t0 = Clock::now();
  if (solver == "oracle") {
    out.solution = brute_force_optimal(inst, cap);
  } else if (solver == "teitz-bart") {
    out.solution = teitz_bart(inst, rng);
  } else if (solver == "sa") {
    out.solution = simulated_annealing(inst, rng);
  } else if (solver == "random") {
    out.solution = random_solution(inst, rng);
  } else if (solver == "policy") {
    if (!model) throw Error(ErrorKind::Usage, "solver policy needs --checkpoint");
    out.solution = solve_with_policy(inst, *model, samples, &rng);
  } else {
    throw Error(ErrorKind::Usage, "unknown solver '" + solver + "'");
  }
  out.runtime_s = seconds_since(t0);
  return out;
}

std::string mode_name(const std::string& solver, std::size_t samples) {
  if (solver != "policy") return "-";
  return samples == 0 ? "greedy" : "sample-" + std::to_string(samples);
}

struct SolveArgs {
  std::string instance;
  std::string solver = "teitz-bart";
  std::string checkpoint;
  std::size_t samples = 0;
  std::uint64_t seed = 1;
  std::uint64_t cap = kDefaultEnumerationCap;
  std::string out;
};

int run_solve(const SolveArgs& a) {
  const auto inst = load_instance(a.instance);
  std::optional<ModelParameters> model;
  if (!a.checkpoint.empty()) model = ModelParameters::load(a.checkpoint);
  const auto r = run_solver(a.solver, inst, model ? &*model : nullptr, a.samples, a.seed, a.cap);
  const SolutionRecord rec{inst.id, r.solution.facilities, r.solution.cost,
                           a.solver + ":" + mode_name(a.solver, a.samples), r.runtime_s};
  if (!a.out.empty()) save_solution(rec, a.out);
  std::cout << solution_to_json(rec).dump() << "\n";
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string corpus = "corpus";
  std::vector<std::string> solvers{"teitz-bart", "sa", "random"};
  std::string checkpoint;
  std::vector<std::size_t> samples{0};
  std::string reference = "auto";
  std::uint64_t seed = 1;
  std::uint64_t cap = kDefaultEnumerationCap;
  std::string out = "gap.csv";
};

int run_eval(const EvalArgs& a, RunManifest& manifest) {
  const auto t0 = Clock::now();
  const fs::path dir = a.corpus;
  const json index = read_json_file(dir / "corpus.json");
  std::optional<ModelParameters> model;
  if (!a.checkpoint.empty()) model = ModelParameters::load(a.checkpoint);

  std::vector<RunResult> results;
  std::map<std::string, Reference> refs;
  std::map<std::string, double> best_known;
  bool want_oracle = a.reference == "oracle";
  if (a.reference != "auto" && a.reference != "oracle" && a.reference != "best-known") {
    throw Error(ErrorKind::Usage, "--reference must be auto, oracle or best-known");
  }
  for (const auto& entry : index) {
    const std::string id = entry.at("id").get<std::string>();
    const auto inst = load_instance(dir / entry.at("instance").get<std::string>());
    if (entry.contains("oracle") && a.reference != "best-known") {
      refs[id] = {load_solution(dir / entry.at("oracle").get<std::string>()).cost, true};
      results.push_back({id, "oracle", "-", refs[id].cost, 0.0});
    }
    for (const auto& solver : a.solvers) {
      const std::vector<std::size_t> modes =
          solver == "policy" ? a.samples : std::vector<std::size_t>{0};
      for (std::size_t s : modes) {
        const auto r = run_solver(solver, inst, model ? &*model : nullptr, s, a.seed, a.cap);
        results.push_back({id, solver, mode_name(solver, s), r.solution.cost, r.runtime_s});
        auto it = best_known.find(id);
        if (it == best_known.end() || r.solution.cost < it->second) best_known[id] = r.solution.cost;
      }
    }
  }
  if (!want_oracle) {
    for (const auto& [id, cost] : best_known) {
      if (!refs.count(id)) refs[id] = {cost, false};
    }
  }
  const GapTable table = gap_table(results, refs);
  const fs::path out = a.out;
  const fs::path mpath = manifest_path_for(out);
  manifest.config = {{"corpus", a.corpus},       {"solvers", a.solvers},
                     {"checkpoint", a.checkpoint}, {"samples", a.samples},
                     {"reference", a.reference}};
  manifest.seeds["solve"] = a.seed;
  manifest.artifacts.push_back(out.string());
  write_text_file(out, gap_table_csv(table, mpath.string()));
  write_manifest(manifest, t0, mpath);
  std::cout << gap_table_csv(table);
  for (const auto& id : table.unmatched_ids) std::cerr << "unmatched instance id: " << id << "\n";
  return 0;
}

// ---- train ----

struct TrainCmdArgs {
  ScenarioArgs scen;
  ModelArgs model;
  TrainArgs train;
  std::string out = "run";
};

int run_train(const TrainCmdArgs& a, RunManifest& manifest) {
  const auto t0 = Clock::now();
  const ScenarioSpec spec = a.scen.resolve();
  const ModelConfig mc = a.model.resolve(spec);
  const TrainConfig tc = a.train.resolve();
  const fs::path dir = a.out;
  TrainHooks hooks;
  hooks.out_dir = dir;
  hooks.on_epoch = [](const EpochLog& e) { std::cout << to_json(e).dump() << std::endl; };
  const TrainState state = train(tc, mc, spec, hooks);
  manifest.config = {{"scenario", spec.name}, {"model", to_json(mc)}, {"train", to_json(tc)}};
  manifest.seeds["train"] = tc.seed;
  manifest.seeds["model_init"] = mc.init_seed;
  manifest.artifacts = {(dir / "train_log.jsonl").string(), (dir / "policy.json").string(),
                        (dir / "baseline.json").string()};
  write_manifest(manifest, t0, dir / "manifest.json");
  std::cout << "best validation cost " << state.best_validation_cost << "\n";
  return 0;
}

// ---- ablate ----

struct AblateArgs {
  ScenarioArgs scen;
  ModelArgs model;
  TrainArgs train;
  std::size_t eval_count = 100;
  std::uint64_t eval_seed = 12345;
  std::string out = "ablation.csv";
};

std::vector<double> reference_costs(const std::vector<ProblemInstance>& corpus, bool& optimal) {
  std::vector<double> out;
  optimal = true;
  for (const auto& inst : corpus) {
    try {
      out.push_back(brute_force_optimal(inst).cost);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::CapExceeded) throw;
      Rng rng(derive_seed(inst.seed, "ablate-reference"));
      out.push_back(teitz_bart(inst, rng).cost);
      optimal = false;
    }
  }
  return out;
}

int run_ablate(const AblateArgs& a, RunManifest& manifest) {
  const auto t0 = Clock::now();
  const ScenarioSpec spec = a.scen.resolve();
  const TrainConfig tc = a.train.resolve();
  const auto corpus = make_corpus(spec, a.eval_seed, "ablate-eval", a.eval_count);
  bool optimal = true;
  const auto refs = reference_costs(corpus, optimal);
  const auto rows = ablation_rows(a.model.resolve(spec), tc.lambda_orth, tc.lambda_ent);

  const fs::path out = a.out;
  const fs::path mpath = manifest_path_for(out);
  std::string csv = "# manifest: " + mpath.string() + "\n";
  csv += "Configuration,Obj.,Gap(%),Time(s),BestKnownRef\n";
  for (const auto& row : rows) {
    TrainConfig c = tc;
    c.lambda_orth = row.lambda_orth;
    c.lambda_ent = row.lambda_ent;
    const TrainState state = train(c, row.model, spec);
    double obj = 0.0, gap = 0.0, time = 0.0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto s0 = Clock::now();
      const Solution sol = solve_with_policy(corpus[i], state.policy, 0, nullptr);
      time += seconds_since(s0);
      obj += sol.cost;
      gap += gap_percent(sol.cost, refs[i]);
    }
    const double n = static_cast<double>(corpus.size());
    const std::string line = row.label + "," + format_double(obj / n) + "," +
                             format_double(gap / n) + "," + format_double(time / n) + "," +
                             (optimal ? "0" : "1");
    std::cout << line << std::endl;
    csv += line + "\n";
  }
  manifest.config = {{"scenario", spec.name}, {"model", to_json(a.model.resolve(spec))},
                     {"train", to_json(tc)}, {"eval_count", a.eval_count}};
  manifest.seeds["train"] = tc.seed;
  manifest.seeds["eval_corpus"] = a.eval_seed;
  manifest.artifacts.push_back(out.string());
  write_text_file(out, csv);
  write_manifest(manifest, t0, mpath);
  return 0;
}

// ---- scale ----

struct ScaleArgs {
  std::vector<std::size_t> sizes{100, 200, 400, 800};
  std::size_t k = 16;
  int t = 3;
  std::vector<int> medians{10};
  std::size_t repeats = 3;
  std::uint64_t seed = 1;
  ModelArgs model;
  std::string out = "scaling.csv";
};

int run_scale(const ScaleArgs& a, RunManifest& manifest) {
  const auto t0 = Clock::now();
  ScenarioSpec spec = custom_scenario(static_cast<int>(a.sizes.front()), a.t, a.medians);
  ModelConfig mc = a.model.resolve(spec);
  mc.knn = a.k;
  const ModelParameters model(mc);
  const auto points = scaling_sweep(model, a.sizes, static_cast<std::size_t>(a.t), a.medians,
                                    a.repeats, a.seed);
  std::vector<double> ns, ts;
  for (const auto& p : points) {
    ns.push_back(static_cast<double>(p.n));
    ts.push_back(p.seconds);
  }
  const PowerLawFit fit = fit_power_law(ns, ts);

  const fs::path out = a.out;
  const fs::path mpath = manifest_path_for(out);
  fs::path dat = out;
  dat.replace_extension(".dat");
  std::ostringstream csv, plot;
  csv << "# manifest: " << mpath.string() << "\n";
  csv << "# fitted exponent " << format_double(fit.exponent) << " r2 " << format_double(fit.r_squared)
      << "\n";
  csv << "N,Time(s)\n";
  plot << "# N seconds fit   (t = " << fit.coefficient << " * N^" << fit.exponent << ")\n";
  for (const auto& p : points) {
    csv << p.n << "," << format_double(p.seconds) << "\n";
    plot << p.n << " " << p.seconds << " "
         << fit.coefficient * std::pow(static_cast<double>(p.n), fit.exponent) << "\n";
  }
  manifest.config = {{"sizes", a.sizes}, {"k", a.k},     {"periods", a.t},
                     {"medians", a.medians}, {"repeats", a.repeats}, {"model", to_json(mc)}};
  manifest.seeds["instances"] = a.seed;
  manifest.seeds["model_init"] = mc.init_seed;
  manifest.artifacts = {out.string(), dat.string()};
  write_text_file(out, csv.str());
  write_text_file(dat, plot.str());
  write_manifest(manifest, t0, mpath);
  std::cout << csv.str();
  std::cout << "exponent " << fit.exponent << "\n";
  return 0;
}

// ---- memstats ----

struct MemstatsArgs {
  std::string instance;
  std::string checkpoint;
  ModelArgs model;
  std::string trace_out;
};

int run_memstats(const MemstatsArgs& a) {
  const auto inst = load_instance(a.instance);
  ModelParameters model;
  if (!a.checkpoint.empty()) {
    model = ModelParameters::load(a.checkpoint);
  } else {
    ScenarioSpec spec = custom_scenario(static_cast<int>(inst.node_count()),
                                        static_cast<int>(inst.period_count()), {1});
    model = ModelParameters(a.model.resolve(spec));
  }
  if (model.config().plain_path || !model.config().memory) {
    throw Error(ErrorKind::Config, "model has no memory to inspect");
  }
  diff::NoGradGuard guard;
  DecodeOptions opts;
  opts.capture_trace = true;
  const auto res = decode(inst, encode(inst, model), model, opts);
  const auto diag = memory_diagnostics(res);
  const json report = {{"instance", inst.id},
                       {"cost", res.solution.cost},
                       {"mean_abs_cosine", diag.mean_abs_cosine},
                       {"utilization", diag.utilization}};
  if (!a.trace_out.empty()) {
    write_text_file(a.trace_out, json{{"report", report}, {"trace", trace_to_json(res.trace)}}.dump(2) + "\n");
  }
  std::cout << report.dump() << "\n";
  return 0;
}

// ---- gradcheck ----

int run_gradcheck(std::uint64_t seed) {
  auto results = diff::primitive_gradchecks(seed);
  results.push_back(policy_gradcheck(seed));
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " max_rel_error " << r.max_rel_error
              << " checked " << r.checked << "\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-period p-median solvers, policy training and benchmarks"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate a seeded instance corpus");
  gen.scen.add(generate);
  generate->add_option("--count", gen.count);
  generate->add_option("--seed", gen.seed);
  generate->add_flag("--with-oracle", gen.with_oracle, "Solve every instance exactly");
  generate->add_option("--oracle-cap", gen.cap, "Max subsets per period");
  generate->add_option("--out", gen.out, "Output directory");

  TrainCmdArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a policy with REINFORCE");
  tr.scen.add(train_cmd);
  tr.model.add(train_cmd);
  tr.train.add(train_cmd);
  train_cmd->add_option("--out", tr.out, "Output directory");

  SolveArgs sv;
  auto* solve = app.add_subcommand("solve", "Solve one instance");
  solve->add_option("--instance", sv.instance)->required()->check(CLI::ExistingFile);
  solve->add_option("--solver", sv.solver)
      ->check(CLI::IsMember({"oracle", "teitz-bart", "sa", "random", "policy"}));
  solve->add_option("--checkpoint", sv.checkpoint)->check(CLI::ExistingFile);
  solve->add_option("--samples", sv.samples, "0 = greedy, S = best of S samples");
  solve->add_option("--seed", sv.seed);
  solve->add_option("--oracle-cap", sv.cap);
  solve->add_option("--out", sv.out, "Solution JSON path");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Gap/runtime table over a corpus");
  eval->add_option("--corpus", ev.corpus)->check(CLI::ExistingDirectory);
  eval->add_option("--solvers", ev.solvers)->delimiter(',');
  eval->add_option("--checkpoint", ev.checkpoint)->check(CLI::ExistingFile);
  eval->add_option("--samples", ev.samples, "Policy modes: 0 = greedy, S = best of S")->delimiter(',');
  eval->add_option("--reference", ev.reference, "auto, oracle or best-known");
  eval->add_option("--seed", ev.seed);
  eval->add_option("--oracle-cap", ev.cap);
  eval->add_option("--out", ev.out);

  AblateArgs ab;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the ablation rows");
  ab.scen.add(ablate);
  ab.model.add(ablate);
  ab.train.add(ablate);
  ablate->add_option("--eval-count", ab.eval_count);
  ablate->add_option("--eval-seed", ab.eval_seed);
  ablate->add_option("--out", ab.out);

  ScaleArgs sc;
  auto* scale = app.add_subcommand("scale", "Inference timing sweep over N");
  scale->add_option("--n", sc.sizes)->delimiter(',');
  scale->add_option("--k", sc.k);
  scale->add_option("--t", sc.t);
  scale->add_option("--medians", sc.medians)->delimiter(',');
  scale->add_option("--repeats", sc.repeats);
  scale->add_option("--seed", sc.seed);
  sc.model.add(scale);
  scale->add_option("--out", sc.out);

  MemstatsArgs ms;
  auto* memstats = app.add_subcommand("memstats", "Memory diagnostics for one decode");
  memstats->add_option("--instance", ms.instance)->required()->check(CLI::ExistingFile);
  memstats->add_option("--checkpoint", ms.checkpoint)->check(CLI::ExistingFile);
  ms.model.add(memstats);
  memstats->add_option("--trace-out", ms.trace_out);

  std::uint64_t gc_seed = 7;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck->add_option("--seed", gc_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::Usage);
  }

  RunManifest manifest;
  manifest.command_line = command_line(argc, argv);
  manifest.started_utc = utc_now();
  try {
    if (*generate) return run_generate(gen, manifest);
    if (*train_cmd) return run_train(tr, manifest);
    if (*solve) return run_solve(sv);
    if (*eval) return run_eval(ev, manifest);
    if (*ablate) return run_ablate(ab, manifest);
    if (*scale) return run_scale(sc, manifest);
    if (*memstats) return run_memstats(ms);
    if (*gradcheck) return run_gradcheck(gc_seed);
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
