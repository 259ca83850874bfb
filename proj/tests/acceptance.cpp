// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "dense_reference.hpp"
#include "oracle.hpp"
#include "mpfl/baselines.hpp"
#include "mpfl/bench.hpp"
#include "mpfl/policy_gradcheck.hpp"
#include "mpfl/trainer.hpp"

using namespace mpfl;

namespace {

// Pinned tolerances and thresholds.
constexpr double kOracleTol = 1e-12;
constexpr double kOracleSeconds = 60.0;
constexpr double kSaMeanGapPct = 5.0;
constexpr double kGradTol = 1e-4;
constexpr double kDenseTol = 1e-6;
constexpr double kProbSumTol = 1e-6;
constexpr double kDeskGapPct = 10.0;
constexpr double kDeskRandomFraction = 0.25;
constexpr double kScalingExponent = 1.3;
constexpr double kClosedFormTol = 1e-12;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 200 instances, N in 4..10, T in 1..3.
std::vector<ProblemInstance> small_corpus() {
  std::vector<ProblemInstance> out;
  for (std::size_t i = 0; i < 200; ++i) {
    const int n = 4 + static_cast<int>(i % 7);
    const int t = 1 + static_cast<int>(i / 7 % 3);
    std::vector<int> medians{1, 2, 3};
    if (n >= 8) medians.push_back(4);
    out.push_back(generate_instance(custom_scenario(n, t, medians), derive_seed(2024, "acceptance-small", i)));
  }
  return out;
}

Outcome oracle_correctness(const std::vector<ProblemInstance>& corpus, std::vector<double>& opt) {
  double worst = 0.0, oracle_time = 0.0;
  for (const auto& inst : corpus) {
    const auto t0 = Clock::now();
    const Solution s = brute_force_optimal(inst);
    oracle_time += since(t0);
    const double ref = test::bitmask_optimum(inst);
    worst = std::max(worst, std::abs(s.cost - ref));
    opt.push_back(s.cost);
  }
  return {worst <= kOracleTol && oracle_time < kOracleSeconds,
          fmt("max |oracle - enumerator| %.3g, oracle time %.2fs", worst, oracle_time)};
}

Outcome heuristic_sanity(const std::vector<ProblemInstance>& corpus, const std::vector<double>& opt) {
  std::size_t below = 0, not_local = 0;
  double sa_gap = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    Rng rng(derive_seed(7, "acceptance-heuristics", i));
    const Solution tb = teitz_bart(corpus[i], rng);
    if (tb.cost < opt[i] - kOracleTol) ++below;
    if (!test::is_one_swap_optimal(corpus[i], tb.facilities)) ++not_local;
    sa_gap += gap_percent(simulated_annealing(corpus[i], rng).cost, opt[i]);
  }
  sa_gap /= static_cast<double>(corpus.size());
  return {below == 0 && not_local == 0 && sa_gap <= kSaMeanGapPct,
          fmt("teitz-bart below oracle %zu, not 1-swap optimal %zu, SA mean gap %.4f%%", below,
              not_local, sa_gap)};
}

Outcome gradient_suite() {
  auto results = diff::primitive_gradchecks(5);
  results.push_back(policy_gradcheck(3));
  double worst = 0.0;
  std::string worst_name, failed;
  for (const auto& r : results) {
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
    if (!(r.max_rel_error <= kGradTol) || r.checked == 0) failed += " " + r.name;
  }
  return {failed.empty(), fmt("%zu checks, worst %.3g (%s)%s", results.size(), worst,
                              worst_name.c_str(), failed.empty() ? "" : (" failed:" + failed).c_str())};
}

Outcome sparse_dense() {
  double worst = 0.0;
  const std::size_t head_choices[] = {1, 2, 4};
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(derive_seed(11, "acceptance-dense", s));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t n = 2 + s % 11;
    ModelConfig cfg;
    cfg.d_h = 8;
    cfg.heads = head_choices[s % 3];
    cfg.layers = 1;
    cfg.knn = n - 1 + s % 3;
    cfg.ffn_hidden = 12;
    cfg.phi_hidden = 6;
    cfg.periods = 2;
    cfg.init_seed = s;
    ModelParameters m(cfg);
    for (auto& w : m.encoder().layers[0].head_weights.mutable_values()) w = u(rng);
    const auto inst = generate_instance(custom_scenario(static_cast<int>(n), 2, {1}), s);
    std::vector<double> hv(n * cfg.d_h);
    for (auto& x : hv) x = u(rng);
    const Tensor h = Tensor::from({n, cfg.d_h}, hv);
    const auto g = build_spatial_graph(inst, cfg);
    const Tensor dist = Tensor::from({g.edge_distance.size(), 1}, g.edge_distance);
    const Tensor sparse = sparse_attention_layer(h, g, dist, m.encoder().layers[0], cfg);
    test::Mat pd(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) pd[i][j] = inst.dist(i, j);
    }
    const auto dense = test::dense_layer(test::to_mat(h), pd, m.encoder().layers[0], cfg.heads, true);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < cfg.d_h; ++c) worst = std::max(worst, std::abs(sparse(i, c) - dense[i][c]));
    }
  }
  return {worst <= kDenseTol, fmt("50 inputs, max elementwise difference %.3g", worst)};
}

Outcome decode_validity() {
  const std::vector<ScenarioSpec> specs{custom_scenario(1, 1, {1}), custom_scenario(6, 2, {1, 6}),
                                        custom_scenario(10, 3, {2, 3}), scenario("Small"),
                                        scenario("Medium")};
  std::size_t decodes = 0, invalid = 0, masked_nonzero = 0;
  double worst_sum = 0.0;
  for (std::size_t si = 0; si < specs.size(); ++si) {
    ModelConfig cfg;
    cfg.d_h = 16;
    cfg.heads = 2;
    cfg.layers = 2;
    cfg.knn = 8;
    cfg.ffn_hidden = 16;
    cfg.memory_slots = 4;
    cfg.periods = static_cast<std::size_t>(specs[si].periods);
    cfg.init_seed = si;
    const ModelParameters model(cfg);
    diff::NoGradGuard guard;
    for (std::size_t k = 0; k < 100; ++k) {
      const auto inst = generate_instance(specs[si], derive_seed(13, "acceptance-decode", si * 1000 + k));
      const auto emb = encode(inst, model);
      Rng rng(derive_seed(17, "acceptance-decode-sample", si * 1000 + k));
      for (std::size_t r = 0; r < 20; ++r) {
        DecodeOptions opts;
        opts.mode = DecodeMode::Sample;
        opts.rng = &rng;
        opts.capture_trace = true;
        opts.capture_probabilities = true;
        const auto res = decode(inst, emb, model, opts);
        ++decodes;
        if (!validate(inst, res.solution).empty()) ++invalid;
        std::vector<char> open(inst.node_count(), 0);
        std::size_t period = 0;
        for (const auto& step : res.trace) {
          if (step.period != period || step.step == 0) {
            std::fill(open.begin(), open.end(), 0);
            period = step.period;
          }
          const double sum = std::accumulate(step.probabilities.begin(), step.probabilities.end(), 0.0);
          worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
          for (std::size_t j = 0; j < open.size(); ++j) {
            if (open[j] && step.probabilities[j] != 0.0) ++masked_nonzero;
          }
          open[step.chosen] = 1;
        }
      }
    }
  }
  return {decodes == 10000 && invalid == 0 && masked_nonzero == 0 && worst_sum <= kProbSumTol,
          fmt("%zu decodes, invalid %zu, masked nonzero %zu, max |sum - 1| %.3g", decodes, invalid,
              masked_nonzero, worst_sum)};
}

ModelConfig desk_model() {
  ModelConfig c;
  c.d_h = 32;
  c.heads = 4;
  c.layers = 2;
  c.knn = 9;
  c.ffn_hidden = 64;
  c.memory_slots = 8;
  c.periods = 2;
  return c;
}

TrainConfig desk_train() {
  TrainConfig c;
  c.lr = 1e-3;
  c.batch_size = 64;
  c.epochs = 20;
  c.steps_per_epoch = 100;
  c.validation_size = 100;
  c.lambda_ent = 0.05;
  c.baseline_warmup_epochs = 1;
  c.seed = 1;
  c.workers = worker_count_from_env();
  return c;
}

Outcome desk_training() {
  const auto spec = custom_scenario(10, 2, {2, 3});
  const auto held_out = make_corpus(spec, 12345, "heldout", 100);
  std::vector<double> opt;
  for (const auto& inst : held_out) opt.push_back(brute_force_optimal(inst).cost);

  double random_gap = 0.0;
  Rng rng(5);
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    double mean = 0.0;
    for (int r = 0; r < 30; ++r) mean += random_solution(held_out[i], rng).cost / 30.0;
    random_gap += gap_percent(mean, opt[i]) / static_cast<double>(held_out.size());
  }

  const auto t0 = Clock::now();
  const TrainConfig tc = desk_train();
  const TrainState state = train(tc, desk_model(), spec);
  const double seconds = since(t0);

  auto mean_gap = [&](const ModelParameters& m) {
    diff::NoGradGuard guard;
    double g = 0.0;
    for (std::size_t i = 0; i < held_out.size(); ++i) {
      const auto& inst = held_out[i];
      g += gap_percent(decode(inst, encode(inst, m), m).solution.cost, opt[i]);
    }
    return g / static_cast<double>(held_out.size());
  };
  // The trained policy is theta*, the best greedy policy on the validation set.
  const double gap = mean_gap(state.baseline);
  const double last = mean_gap(state.policy);
  return {gap <= kDeskGapPct && gap <= kDeskRandomFraction * random_gap,
          fmt("%zu steps in %.0fs, greedy gap %.3f%% (last-epoch theta %.3f%%), random gap %.3f%% "
              "(limit %.3f%%)",
              tc.epochs * tc.steps_per_epoch, seconds, gap, last, random_gap,
              std::min(kDeskGapPct, kDeskRandomFraction * random_gap))};
}

Outcome scaling() {
  ModelConfig c;
  c.d_h = 32;
  c.heads = 4;
  c.layers = 2;
  c.knn = 16;
  c.ffn_hidden = 64;
  c.memory_slots = 8;
  c.periods = 3;
  const ModelParameters model(c);
  const auto pts = scaling_sweep(model, {100, 200, 400, 800}, 3, {10}, 3, 1);
  std::vector<double> n, t;
  std::string times;
  for (const auto& p : pts) {
    n.push_back(static_cast<double>(p.n));
    t.push_back(p.seconds);
    times += fmt(" %zu:%.4fs", p.n, p.seconds);
  }
  const auto fit = fit_power_law(n, t);
  return {fit.exponent <= kScalingExponent,
          fmt("exponent %.3f (r2 %.3f),%s", fit.exponent, fit.r_squared, times.c_str())};
}

bool same_solution(const Solution& a, const Solution& b) {
  return a.facilities == b.facilities && a.cost == b.cost;
}

// Count of instances where the two models' greedy outputs differ.
std::size_t greedy_differences(const ModelParameters& a, const ModelParameters& b,
                               const std::vector<ProblemInstance>& corpus) {
  diff::NoGradGuard guard;
  std::size_t diffs = 0;
  for (const auto& inst : corpus) {
    const auto ra = decode(inst, encode(inst, a), a);
    const auto rb = decode(inst, encode(inst, b), b);
    if (!same_solution(ra.solution, rb.solution) || ra.log_prob.item() != rb.log_prob.item()) ++diffs;
  }
  return diffs;
}

Outcome ablation_plumbing() {
  ModelConfig base;
  base.d_h = 16;
  base.heads = 2;
  base.layers = 2;
  base.knn = 4;
  base.ffn_hidden = 16;
  base.memory_slots = 4;
  base.periods = 2;
  base.init_seed = 3;
  const auto spec = custom_scenario(12, 2, {2, 3});
  const auto corpus = make_corpus(spec, 99, "acceptance-ablation", 30);
  const auto rows = ablation_rows(base, 1e-2, 1e-2);

  // Untrained head weights are zero; give the bias-on rows nonzero ones.
  std::vector<ModelParameters> models;
  Rng rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w;
  for (std::size_t i = 0; i < base.layers * base.heads; ++i) w.push_back(u(rng));
  for (std::size_t r = 0; r < 4; ++r) {
    models.emplace_back(rows[r].model);
    if (rows[r].model.distance_bias) {
      std::size_t k = 0;
      for (auto& l : models.back().encoder().layers) {
        for (auto& x : l.head_weights.mutable_values()) x = w[k++];
      }
    }
  }
  std::string detail;
  bool ok = true;
  for (std::size_t r = 1; r < 4; ++r) {
    const std::size_t d = greedy_differences(models[r - 1], models[r], corpus);
    detail += fmt("%s: %zu/30 differ; ", rows[r].label.c_str(), d);
    ok = ok && d > 0;
  }

  // Regularization only changes the loss, so compare two short trainings.
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_size = 8;
  tc.epochs = 1;
  tc.steps_per_epoch = 5;
  tc.validation_size = 10;
  TrainConfig with_reg = tc;
  tc.lambda_orth = rows[3].lambda_orth;
  tc.lambda_ent = rows[3].lambda_ent;
  with_reg.lambda_orth = rows[4].lambda_orth;
  with_reg.lambda_ent = rows[4].lambda_ent;
  const auto plain_mem = train(tc, rows[3].model, spec);
  const auto reg_mem = train(with_reg, rows[4].model, spec);
  const std::size_t d = greedy_differences(plain_mem.policy, reg_mem.policy, corpus);
  detail += fmt("%s: %zu/30 differ; ", rows[4].label.c_str(), d);
  ok = ok && d > 0;

  ModelConfig plain = base;
  plain.plain_path = true;
  const ModelParameters plain_model(plain);
  const ModelParameters all_off(rows[0].model);
  diff::NoGradGuard guard;
  std::size_t mismatched = 0;
  for (const auto& inst : corpus) {
    const auto a = encode(inst, all_off);
    const auto b = encode(inst, plain_model);
    const auto ra = decode(inst, a, all_off);
    const auto rb = decode(inst, b, plain_model);
    const bool same_h = std::equal(a.h.values().begin(), a.h.values().end(), b.h.values().begin());
    if (!same_h || !same_solution(ra.solution, rb.solution) || ra.log_prob.item() != rb.log_prob.item()) {
      ++mismatched;
    }
  }
  detail += fmt("all-off vs plain path: %zu/30 not bit-identical", mismatched);
  return {ok && mismatched == 0, detail};
}

Outcome regularizers() {
  const double s2 = std::sqrt(0.5);
  const double orth_init = orth_loss(Tensor::from({2, 3}, {1, 0, 0, 0, 1, 0})).item();
  const double orth_rot = orth_loss(Tensor::from({2, 2}, {s2, s2, -s2, s2})).item();
  const double orth_dup = orth_loss(Tensor::from({2, 2}, {1, 0, 1, 0})).item();
  const double ent = ent_loss({Tensor::from({1, 2}, {0.5, 0.5})}).item();
  const bool ok = std::abs(orth_init) <= kClosedFormTol && std::abs(orth_rot) <= kClosedFormTol &&
                  std::abs(orth_dup - 2.0) <= kClosedFormTol &&
                  std::abs(ent + std::log(2.0)) <= kClosedFormTol;
  return {ok, fmt("orth(orthonormal) %.3g / %.3g, orth(duplicated) %.15g, ent(uniform) %.15g",
                  orth_init, orth_rot, orth_dup, ent)};
}

Outcome reproducibility() {
  const auto spec = custom_scenario(10, 2, {2, 3});
  const auto a = make_corpus(spec, 77, "repro", 20);
  const auto b = make_corpus(spec, 77, "repro", 20);
  bool corpora = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    corpora = corpora && a[i].id == b[i].id && a[i].p_schedule == b[i].p_schedule &&
              a[i].weights == b[i].weights;
    for (std::size_t j = 0; j < a[i].nodes.size(); ++j) {
      corpora = corpora && a[i].nodes[j].x == b[i].nodes[j].x && a[i].nodes[j].y == b[i].nodes[j].y;
    }
  }

  ModelConfig mc;
  mc.d_h = 16;
  mc.heads = 2;
  mc.layers = 2;
  mc.knn = 5;
  mc.ffn_hidden = 16;
  mc.memory_slots = 4;
  mc.periods = 2;
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_size = 16;
  tc.epochs = 1;
  tc.steps_per_epoch = 5;
  tc.validation_size = 20;
  const auto s1 = train(tc, mc, spec);
  const auto s2 = train(tc, mc, spec);
  const auto& e1 = s1.log.at(0);
  const auto& e2 = s2.log.at(0);
  const bool losses = e1.l_rl == e2.l_rl && e1.l_orth == e2.l_orth && e1.l_ent == e2.l_ent &&
                      e1.mean_cost == e2.mean_cost && e1.val_cost == e2.val_cost;
  const bool greedy = greedy_differences(s1.policy, s2.policy, a) == 0;
  return {corpora && losses && greedy,
          fmt("corpora %s, epoch-0 losses %s (L_RL %.17g), greedy solutions %s",
              corpora ? "identical" : "DIFFER", losses ? "identical" : "DIFFER", e1.l_rl,
              greedy ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& run) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.ok) ++failures;
    std::printf("%s [%d] %s: %s (%.1fs)\n", o.ok ? "PASS" : "FAIL", id, name, o.detail.c_str(), since(t0));
    std::fflush(stdout);
  };

  const auto corpus = small_corpus();
  std::vector<double> opt;
  report(1, "oracle correctness", [&] { return oracle_correctness(corpus, opt); });
  report(2, "heuristic sanity", [&] {
    if (opt.size() != corpus.size()) return Outcome{false, "oracle costs unavailable"};
    return heuristic_sanity(corpus, opt);
  });
  report(3, "gradient suite", gradient_suite);
  report(4, "sparse/dense equivalence", sparse_dense);
  report(5, "decode validity", decode_validity);
  report(6, "desk-scale training", desk_training);
  report(7, "scaling exponent", scaling);
  report(8, "ablation plumbing", ablation_plumbing);
  report(9, "memory regularizers", regularizers);
  report(10, "reproducibility", reproducibility);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
