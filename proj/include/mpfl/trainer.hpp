#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mpfl/decoder.hpp"
#include "mpfl/diff/adam.hpp"
#include "mpfl/encoder.hpp"
#include "mpfl/instance.hpp"
#include "mpfl/model.hpp"

namespace mpfl {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 512;
  std::size_t epochs = 10;
  std::size_t steps_per_epoch = 250;
  double lambda_orth = 1e-3;
  double lambda_ent = 1e-3;
  // When true the entropy term is -E[H(alpha)], so minimizing the total loss
  // raises read entropy. False uses +E[H(alpha)] literally.
  bool entropy_bonus = true;
  std::size_t validation_size = 100;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  // Epochs that use an exponential moving average of sampled cost as b(s)
  // before the greedy rollout baseline takes over; 0 disables.
  std::size_t baseline_warmup_epochs = 0;
  double warmup_decay = 0.8;

  void check() const {
    if (!(lr > 0.0) || batch_size == 0 || epochs == 0 || steps_per_epoch == 0 ||
        validation_size == 0 || workers == 0 || lambda_orth < 0.0 || lambda_ent < 0.0 ||
        !(warmup_decay >= 0.0 && warmup_decay < 1.0)) {
      throw Error(ErrorKind::Config, "invalid training configuration");
    }
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"steps_per_epoch", c.steps_per_epoch},
          {"lambda_orth", c.lambda_orth},
          {"lambda_ent", c.lambda_ent},
          {"entropy_bonus", c.entropy_bonus},
          {"validation_size", c.validation_size},
          {"seed", c.seed},
          {"workers", c.workers},
          {"baseline_warmup_epochs", c.baseline_warmup_epochs},
          {"warmup_decay", c.warmup_decay}};
}

// ||V V^T - I||_F^2 over the memory value rows.
inline Tensor orth_loss(const Tensor& values) {
  const std::size_t s = values.rows();
  std::vector<double> eye(s * s, 0.0);
  for (std::size_t i = 0; i < s; ++i) eye[i * s + i] = 1.0;
  return diff::frobenius_sq(
      diff::sub(diff::matmul_nt(values, values), Tensor::from({s, s}, std::move(eye))));
}

// -mean_k H(alpha_k) over the given read-weight rows (sign flipped when
// `bonus` is false). Empty input gives a constant zero.
inline Tensor ent_loss(const std::vector<Tensor>& alphas, bool bonus = true) {
  if (alphas.empty()) return Tensor::scalar(0.0);
  std::vector<Tensor> rows;
  rows.reserve(alphas.size());
  for (const auto& a : alphas) rows.push_back(diff::entropy_rows(a));
  const Tensor total = diff::sum(diff::concat_cols(rows));
  return diff::scale(total, (bonus ? -1.0 : 1.0) / static_cast<double>(alphas.size()));
}

struct BatchStats {
  double mean_cost = 0.0;
  double mean_baseline = 0.0;
  double mean_advantage = 0.0;
  std::size_t steps = 0;  // decode steps, i.e. entropy terms
};

struct BatchLoss {
  Tensor rl;   // mean (C - b) * log p over the batch, advantage constant
  Tensor ent;  // ent_loss over every sampled read
  BatchStats stats;
};

// Samples each instance with `policy` (seeded per instance) and greedy-decodes
// it with `baseline`. Only the log-probabilities carry gradient.
// Where b(s) comes from: greedy decode of the rollout model, a fixed value,
// or the mean sampled cost of this batch.
enum class BaselineKind { Rollout, Constant, BatchMean };

struct BaselineSource {
  BaselineKind kind = BaselineKind::Rollout;
  double value = 0.0;  // Constant only
};

inline BatchLoss reinforce_batch_loss(std::span<const ProblemInstance> batch,
                                      const ModelParameters& policy,
                                      const ModelParameters& baseline,
                                      std::span<const std::uint64_t> sample_seeds,
                                      bool entropy_bonus = true, BaselineSource source = {}) {
  if (batch.empty()) throw Error(ErrorKind::Config, "empty batch");
  if (sample_seeds.size() != batch.size()) throw Error(ErrorKind::Config, "one seed per instance");
  std::vector<Tensor> log_probs;
  std::vector<double> costs, bases;
  std::vector<Tensor> alphas;
  BatchStats stats;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& inst = batch[i];
    if (source.kind == BaselineKind::Rollout) {
      diff::NoGradGuard guard;
      const auto emb = encode(inst, baseline);
      bases.push_back(decode(inst, emb, baseline).solution.cost);
    }
    Rng rng(sample_seeds[i]);
    DecodeOptions opts;
    opts.mode = DecodeMode::Sample;
    opts.rng = &rng;
    const auto emb = encode(inst, policy);
    auto res = decode(inst, emb, policy, opts);
    log_probs.push_back(res.log_prob);
    costs.push_back(res.solution.cost);
    for (auto& a : res.alphas) alphas.push_back(std::move(a));
    stats.mean_cost += res.solution.cost * inv_b;
  }
  if (source.kind == BaselineKind::Constant) bases.assign(batch.size(), source.value);
  if (source.kind == BaselineKind::BatchMean) bases.assign(batch.size(), stats.mean_cost);
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double advantage = costs[i] - bases[i];
    terms.push_back(diff::scale(log_probs[i], advantage * inv_b));
    stats.mean_baseline += bases[i] * inv_b;
    stats.mean_advantage += advantage * inv_b;
  }
  stats.steps = alphas.size();
  return {diff::sum(diff::concat_cols(terms)), ent_loss(alphas, entropy_bonus), stats};
}

struct EpochLog {
  std::size_t epoch = 0;
  double mean_cost = 0.0;
  double baseline_cost = 0.0;
  double l_rl = 0.0;
  double l_orth = 0.0;
  double l_ent = 0.0;
  double val_cost = 0.0;
  bool updated_baseline = false;
  double seconds = 0.0;
};

inline nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},       {"mean_cost", e.mean_cost}, {"baseline_cost", e.baseline_cost},
          {"L_RL", e.l_rl},         {"L_orth", e.l_orth},       {"L_ent", e.l_ent},
          {"val_cost", e.val_cost}, {"updated_baseline", e.updated_baseline},
          {"seconds", e.seconds}};
}

struct TrainState {
  ModelParameters policy;
  ModelParameters baseline;
  diff::AdamState optimizer;
  double best_validation_cost = 0.0;
  std::vector<double> baseline_validation_history;  // theta* cost after each epoch
  std::vector<EpochLog> log;
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::optional<double> warmup_baseline;  // moving average during warmup
};

inline std::vector<ProblemInstance> make_corpus(const ScenarioSpec& spec, std::uint64_t seed,
                                                std::string_view stream, std::size_t count) {
  std::vector<ProblemInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(generate_instance(spec, derive_seed(seed, stream, i)));
  }
  return out;
}

inline double mean_greedy_cost(const ModelParameters& model,
                               const std::vector<ProblemInstance>& corpus) {
  diff::NoGradGuard guard;
  double total = 0.0;
  for (const auto& inst : corpus) total += decode(inst, encode(inst, model), model).solution.cost;
  return total / static_cast<double>(corpus.size());
}

namespace detail {

template <typename F>
void run_chunks(std::size_t chunks, F&& fn) {
  if (chunks == 1) {
    fn(0);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    pool.emplace_back([&, c] {
      try {
        fn(c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

struct TrainHooks {
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const EpochLog&)> on_epoch;
};

inline double add_gradients(std::vector<Parameter>& dst, const std::vector<Parameter>& src) {
  double norm = 0.0;
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!dst[i].tensor.requires_grad()) continue;
    auto g = dst[i].tensor.mutable_grad();
    const auto s = src[i].tensor.grad();
    if (s.empty()) continue;
    for (std::size_t k = 0; k < g.size(); ++k) {
      g[k] += s[k];
      norm += s[k] * s[k];
    }
  }
  return norm;
}

// One optimizer step on a freshly drawn batch; returns the loss components.
struct StepResult {
  BatchStats stats;
  double l_rl = 0.0;
  double l_orth = 0.0;
  double l_ent = 0.0;
};

inline StepResult train_step(TrainState& state, std::vector<ModelParameters>& replicas,
                             const TrainConfig& cfg, const ScenarioSpec& spec) {
  const std::size_t b = cfg.batch_size;
  std::vector<ProblemInstance> batch;
  std::vector<std::uint64_t> seeds;
  batch.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    const std::uint64_t index = state.step * b + i;
    batch.push_back(generate_instance(spec, derive_seed(cfg.seed, "train-batch", index)));
    seeds.push_back(derive_seed(cfg.seed, "train-sample", index));
  }
  std::size_t total_steps = 0;
  for (const auto& inst : batch) {
    total_steps += static_cast<std::size_t>(
        std::accumulate(inst.p_schedule.begin(), inst.p_schedule.end(), 0));
  }
  BaselineSource source;
  const bool warmup = state.epoch < cfg.baseline_warmup_epochs;
  if (warmup) {
    source.kind = state.warmup_baseline ? BaselineKind::Constant : BaselineKind::BatchMean;
    source.value = state.warmup_baseline.value_or(0.0);
  }
  const std::size_t chunks = std::min(replicas.size(), b);
  std::vector<BatchLoss> parts(chunks);
  detail::run_chunks(chunks, [&](std::size_t c) {
    const std::size_t lo = c * b / chunks, hi = (c + 1) * b / chunks;
    auto& replica = replicas[c];
    replica.zero_grad();
    BatchLoss part = reinforce_batch_loss(std::span(batch).subspan(lo, hi - lo), replica,
                                          state.baseline, std::span(seeds).subspan(lo, hi - lo),
                                          cfg.entropy_bonus, source);
    const double rl_weight = static_cast<double>(hi - lo) / static_cast<double>(b);
    const double ent_weight =
        static_cast<double>(part.stats.steps) / static_cast<double>(std::max<std::size_t>(total_steps, 1));
    const Tensor loss = diff::add(diff::scale(part.rl, rl_weight),
                                  diff::scale(part.ent, cfg.lambda_ent * ent_weight));
    diff::backward(loss);
    part.rl = Tensor::scalar(part.rl.item() * rl_weight);
    part.ent = Tensor::scalar(part.ent.item() * ent_weight);
    part.stats.mean_cost *= rl_weight;
    part.stats.mean_baseline *= rl_weight;
    part.stats.mean_advantage *= rl_weight;
    parts[c] = std::move(part);
  });

  StepResult out;
  auto master = state.policy.parameters();
  state.policy.zero_grad();
  const Tensor orth = orth_loss(state.policy.decoder().mem_values0);
  if (cfg.lambda_orth > 0.0 && orth.requires_grad()) diff::backward(diff::scale(orth, cfg.lambda_orth));
  out.l_orth = orth.item();
  for (std::size_t c = 0; c < chunks; ++c) {
    add_gradients(master, replicas[c].parameters());
    out.l_rl += parts[c].rl.item();
    out.l_ent += parts[c].ent.item();
    out.stats.mean_cost += parts[c].stats.mean_cost;
    out.stats.mean_baseline += parts[c].stats.mean_baseline;
    out.stats.mean_advantage += parts[c].stats.mean_advantage;
    out.stats.steps += parts[c].stats.steps;
  }
  const double total = out.l_rl + cfg.lambda_orth * out.l_orth + cfg.lambda_ent * out.l_ent;
  if (!std::isfinite(total)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << state.step << ": L_RL=" << out.l_rl
        << " L_orth=" << out.l_orth << " L_ent=" << out.l_ent << " batch seeds=[";
    for (std::size_t i = 0; i < batch.size(); ++i) msg << (i ? "," : "") << batch[i].seed;
    msg << "]";
    throw Error(ErrorKind::NonFinite, msg.str());
  }
  diff::adam_step(master, state.optimizer, {cfg.lr});
  if (warmup) {
    const double c = out.stats.mean_cost;
    state.warmup_baseline =
        state.warmup_baseline ? cfg.warmup_decay * *state.warmup_baseline + (1.0 - cfg.warmup_decay) * c : c;
  }
  for (auto& r : replicas) r.copy_values_from(state.policy);
  ++state.step;
  return out;
}

inline TrainState init_train_state(const ModelConfig& model_cfg) {
  TrainState state;
  state.policy = ModelParameters(model_cfg);
  state.baseline = state.policy.clone();
  return state;
}

// REINFORCE with a greedy rollout baseline. theta* is replaced by theta when
// the greedy validation cost strictly improves on the best seen.
inline TrainState train(const TrainConfig& cfg, const ModelConfig& model_cfg,
                        const ScenarioSpec& spec, const TrainHooks& hooks = {}) {
  cfg.check();
  TrainState state = init_train_state(model_cfg);
  const auto validation = make_corpus(spec, cfg.seed, "validation", cfg.validation_size);
  state.best_validation_cost = mean_greedy_cost(state.baseline, validation);
  std::vector<ModelParameters> replicas;
  for (std::size_t w = 0; w < cfg.workers; ++w) replicas.push_back(state.policy.clone());

  std::ofstream log_file;
  if (hooks.out_dir) {
    std::filesystem::create_directories(*hooks.out_dir);
    log_file.open(*hooks.out_dir / "train_log.jsonl");
    if (!log_file) throw Error(ErrorKind::Io, "cannot write training log");
  }
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog entry;
    entry.epoch = epoch;
    for (std::size_t s = 0; s < cfg.steps_per_epoch; ++s) {
      const StepResult r = train_step(state, replicas, cfg, spec);
      const double inv = 1.0 / static_cast<double>(cfg.steps_per_epoch);
      entry.mean_cost += r.stats.mean_cost * inv;
      entry.baseline_cost += r.stats.mean_baseline * inv;
      entry.l_rl += r.l_rl * inv;
      entry.l_orth += r.l_orth * inv;
      entry.l_ent += r.l_ent * inv;
    }
    entry.val_cost = mean_greedy_cost(state.policy, validation);
    if (entry.val_cost < state.best_validation_cost) {
      state.best_validation_cost = entry.val_cost;
      state.baseline.copy_values_from(state.policy);
      entry.updated_baseline = true;
    }
    state.baseline_validation_history.push_back(state.best_validation_cost);
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state.epoch = epoch + 1;
    state.log.push_back(entry);
    if (hooks.out_dir) {
      log_file << to_json(entry).dump() << "\n";
      log_file.flush();
      nlohmann::json meta = {{"train_config", to_json(cfg)},
                             {"scenario", spec.name},
                             {"epoch", epoch},
                             {"val_cost", entry.val_cost}};
      state.policy.save(*hooks.out_dir / "policy.json", meta);
      meta["val_cost"] = state.best_validation_cost;
      state.baseline.save(*hooks.out_dir / "baseline.json", meta);
    }
    if (hooks.on_epoch) hooks.on_epoch(entry);
  }
  return state;
}

}  // namespace mpfl
