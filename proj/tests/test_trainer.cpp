#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "mpfl/diff/gradcheck.hpp"
#include "mpfl/trainer.hpp"

using namespace mpfl;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_h = 8;
  c.heads = 2;
  c.layers = 1;
  c.knn = 3;
  c.ffn_hidden = 8;
  c.phi_hidden = 4;
  c.memory_slots = 3;
  c.periods = 2;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.lr = 1e-3;
  t.batch_size = 4;
  t.epochs = 3;
  t.steps_per_epoch = 3;
  t.validation_size = 6;
  t.seed = 5;
  return t;
}

std::vector<std::vector<double>> grads(const ModelParameters& m) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.parameters()) {
    if (p.tensor.grad().empty()) {
      out.emplace_back(p.tensor.size(), 0.0);
    } else {
      out.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
    }
  }
  return out;
}

}  // namespace

TEST(OrthLoss, ClosedForms) {
  EXPECT_NEAR(orth_loss(Tensor::from({2, 3}, {1, 0, 0, 0, 1, 0})).item(), 0.0, 1e-15);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(orth_loss(Tensor::from({2, 2}, {r, r, r, r})).item(), 2.0, 1e-12);
}

TEST(OrthLoss, Gradcheck) {
  Rng rng(3);
  auto v = diff::random_tensor({3, 4}, rng);
  const auto res = diff::check_gradients("orth", {v}, [&] { return orth_loss(v); });
  EXPECT_LE(res.max_rel_error, 1e-4);
}

TEST(EntLoss, ClosedForms) {
  EXPECT_NEAR(ent_loss({Tensor::row({0.5, 0.5})}).item(), -std::log(2.0), 1e-15);
  EXPECT_EQ(ent_loss({Tensor::row({0.0, 1.0, 0.0})}).item(), 0.0);
  EXPECT_NEAR(ent_loss({Tensor::row({0.25, 0.25, 0.25, 0.25}), Tensor::row({0.25, 0.25, 0.25, 0.25})}).item(),
              -std::log(4.0), 1e-15);
  EXPECT_NEAR(ent_loss({Tensor::row({0.5, 0.5})}, false).item(), std::log(2.0), 1e-15);
  EXPECT_EQ(ent_loss({}).item(), 0.0);
}

TEST(ReinforceLoss, ZeroAdvantageZeroGradient) {
  // Every feasible set opens all nodes, so C = b = 0.
  ModelParameters policy(tiny_config());
  const auto baseline = policy.clone();
  std::vector<ProblemInstance> batch{generate_instance(custom_scenario(4, 2, {4}), 1),
                                     generate_instance(custom_scenario(4, 2, {4}), 2)};
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto loss = reinforce_batch_loss(batch, policy, baseline, seeds);
  EXPECT_EQ(loss.stats.mean_advantage, 0.0);
  policy.zero_grad();
  diff::backward(loss.rl);
  for (const auto& g : grads(policy)) {
    for (double x : g) EXPECT_EQ(x, 0.0);
  }
}

TEST(ReinforceLoss, GradientIsAdvantageTimesGradLogP) {
  auto cfg = tiny_config();
  ModelParameters policy(cfg);
  cfg.init_seed = 99;
  const ModelParameters baseline(cfg);
  const std::vector<ProblemInstance> batch{generate_instance(custom_scenario(5, 2, {2, 3}), 4)};
  const std::vector<std::uint64_t> seeds{77};
  const auto loss = reinforce_batch_loss(batch, policy, baseline, seeds);
  const double adv = loss.stats.mean_advantage;
  ASSERT_NE(adv, 0.0);
  policy.zero_grad();
  diff::backward(loss.rl);
  const auto g_rl = grads(policy);

  Rng rng(77);
  DecodeOptions opts;
  opts.mode = DecodeMode::Sample;
  opts.rng = &rng;
  const auto res = decode(batch[0], encode(batch[0], policy), policy, opts);
  policy.zero_grad();
  diff::backward(res.log_prob);
  const auto g_logp = grads(policy);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < g_rl.size(); ++i) {
    for (std::size_t k = 0; k < g_rl[i].size(); ++k) {
      // Unit advantage: grad L_RL / adv == grad log p.
      EXPECT_NEAR(g_rl[i][k] / adv, g_logp[i][k], 1e-12 * (1.0 + std::abs(g_logp[i][k])));
      max_abs = std::max(max_abs, std::abs(g_logp[i][k]));
    }
  }
  EXPECT_GT(max_abs, 0.0);
}

TEST(ReinforceLoss, FiniteDifferenceOnTinyModel) {
  auto cfg = tiny_config();
  ModelParameters policy(cfg);
  Rng init(4);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& l : policy.encoder().layers) {
    for (auto& w : l.head_weights.mutable_values()) w = u(init);
  }
  cfg.init_seed = 42;
  const ModelParameters baseline(cfg);
  const std::vector<ProblemInstance> batch{generate_instance(custom_scenario(5, 2, {2, 3}), 6),
                                           generate_instance(custom_scenario(5, 2, {2, 3}), 7)};
  const std::vector<std::uint64_t> seeds{3, 4};
  std::vector<FacilitySets> trajectories;
  std::vector<double> advantages;
  {
    diff::NoGradGuard guard;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Rng rng(seeds[i]);
      DecodeOptions opts;
      opts.mode = DecodeMode::Sample;
      opts.rng = &rng;
      const auto s = decode(batch[i], encode(batch[i], policy), policy, opts);
      trajectories.push_back(s.solution.facilities);
      advantages.push_back(s.solution.cost - decode(batch[i], encode(batch[i], baseline), baseline).solution.cost);
    }
  }
  std::vector<Tensor> inputs;
  for (const auto& p : policy.parameters()) inputs.push_back(p.tensor);
  // Replays the frozen trajectories so finite differences never change them.
  const auto res = diff::check_gradients("L_RL", inputs, [&] {
    std::vector<Tensor> terms;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      DecodeOptions opts;
      opts.mode = DecodeMode::Replay;
      opts.replay = &trajectories[i];
      const auto r = decode(batch[i], encode(batch[i], policy), policy, opts);
      terms.push_back(diff::scale(r.log_prob, advantages[i] / 2.0));
    }
    return diff::sum(diff::concat_cols(terms));
  });
  EXPECT_LE(res.max_rel_error, 1e-4) << res.worst_input << ":" << res.worst_index;

  // The sampled loss builds the same graph.
  const auto loss = reinforce_batch_loss(batch, policy, baseline, seeds);
  double direct = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    DecodeOptions opts;
    opts.mode = DecodeMode::Replay;
    opts.replay = &trajectories[i];
    direct += advantages[i] / 2.0 * decode(batch[i], encode(batch[i], policy), policy, opts).log_prob.item();
  }
  EXPECT_NEAR(loss.rl.item(), direct, 1e-12);
}

TEST(ReinforceLoss, Errors) {
  ModelParameters policy(tiny_config());
  const std::vector<ProblemInstance> empty;
  const std::vector<std::uint64_t> none;
  EXPECT_THROW(reinforce_batch_loss(empty, policy, policy, none), Error);
  const std::vector<ProblemInstance> one{generate_instance(custom_scenario(5, 2, {2}), 1)};
  EXPECT_THROW(reinforce_batch_loss(one, policy, policy, none), Error);
}

TEST(Train, BaselineHistoryMonotoneAndLogged) {
  const auto dir = test::temp_dir("train");
  std::vector<EpochLog> seen;
  TrainHooks hooks{dir, [&](const EpochLog& e) { seen.push_back(e); }};
  const auto state = train(tiny_train(), tiny_config(), custom_scenario(6, 2, {2, 3}), hooks);
  ASSERT_EQ(state.baseline_validation_history.size(), 3u);
  for (std::size_t i = 1; i < 3; ++i) {
    EXPECT_LE(state.baseline_validation_history[i], state.baseline_validation_history[i - 1]);
  }
  ASSERT_EQ(seen.size(), 3u);
  std::ifstream log(dir / "train_log.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"epoch", "mean_cost", "baseline_cost", "L_RL", "L_orth", "L_ent", "val_cost",
                            "updated_baseline"}) {
      EXPECT_TRUE(j.contains(key)) << key;
    }
    ++lines;
  }
  EXPECT_EQ(lines, 3u);
  EXPECT_TRUE(std::filesystem::exists(dir / "policy.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "baseline.json"));
}

TEST(Train, BaselineOnlyReplacedOnStrictImprovement) {
  const auto tc = tiny_train();
  const auto spec = custom_scenario(6, 2, {2, 3});
  const auto state = train(tc, tiny_config(), spec);
  const auto validation = make_corpus(spec, tc.seed, "validation", tc.validation_size);
  double best = mean_greedy_cost(ModelParameters(tiny_config()), validation);
  ASSERT_EQ(state.log.size(), 3u);
  for (const auto& e : state.log) {
    EXPECT_EQ(e.updated_baseline, e.val_cost < best);
    if (e.val_cost < best) best = e.val_cost;
    EXPECT_EQ(state.baseline_validation_history[e.epoch], best);
  }
  EXPECT_EQ(state.best_validation_cost, best);
  EXPECT_EQ(mean_greedy_cost(state.baseline, validation), best);
}

TEST(Train, CheckpointRoundTripGivesSameGreedy) {
  const auto dir = test::temp_dir("train-ckpt");
  const auto state = train(tiny_train(), tiny_config(), custom_scenario(6, 2, {2, 3}), {dir, nullptr});
  const auto loaded = ModelParameters::load(dir / "policy.json");
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto inst = generate_instance(custom_scenario(6, 2, {2, 3}), 1000 + s);
    diff::NoGradGuard guard;
    const auto a = decode(inst, encode(inst, state.policy), state.policy);
    const auto b = decode(inst, encode(inst, loaded), loaded);
    EXPECT_EQ(a.solution.facilities, b.solution.facilities);
    EXPECT_EQ(a.log_prob.item(), b.log_prob.item());
  }
}

TEST(Train, DeterministicEpochZero) {
  auto tc = tiny_train();
  tc.epochs = 1;
  const auto a = train(tc, tiny_config(), custom_scenario(6, 2, {2, 3}));
  const auto b = train(tc, tiny_config(), custom_scenario(6, 2, {2, 3}));
  EXPECT_EQ(a.log[0].l_rl, b.log[0].l_rl);
  EXPECT_EQ(a.log[0].l_orth, b.log[0].l_orth);
  EXPECT_EQ(a.log[0].l_ent, b.log[0].l_ent);
  EXPECT_EQ(a.log[0].mean_cost, b.log[0].mean_cost);
  EXPECT_EQ(a.log[0].val_cost, b.log[0].val_cost);
}

TEST(Train, WorkerReplicasDeterministic) {
  auto tc = tiny_train();
  tc.epochs = 1;
  tc.workers = 2;
  const auto a = train(tc, tiny_config(), custom_scenario(6, 2, {2, 3}));
  const auto b = train(tc, tiny_config(), custom_scenario(6, 2, {2, 3}));
  EXPECT_EQ(a.log[0].l_rl, b.log[0].l_rl);
  tc.workers = 1;
  const auto c = train(tc, tiny_config(), custom_scenario(6, 2, {2, 3}));
  // Same samples, only the summation order differs.
  EXPECT_NEAR(a.log[0].mean_cost, c.log[0].mean_cost, 1e-12);
  EXPECT_NEAR(a.log[0].l_rl, c.log[0].l_rl, 1e-10);
}

TEST(Train, RegularizersOffAndMemoryClosedIsPlainReinforce) {
  auto tc = tiny_train();
  tc.epochs = 1;
  tc.lambda_orth = 0.0;
  tc.lambda_ent = 0.0;
  auto mc = tiny_config();
  mc.memory = false;
  const auto state = train(tc, mc, custom_scenario(6, 2, {2, 3}));
  const ModelParameters fresh(mc);
  // Frozen memory tensors never move.
  for (std::size_t i = 0; i < fresh.decoder().mem_values0.size(); ++i) {
    EXPECT_EQ(state.policy.decoder().mem_values0.values()[i], fresh.decoder().mem_values0.values()[i]);
    EXPECT_EQ(state.policy.decoder().mem_keys.values()[i], fresh.decoder().mem_keys.values()[i]);
  }
  for (double v : state.policy.decoder().query_r.values()) EXPECT_EQ(v, 0.0);
}

TEST(Train, NonFiniteLossAborts) {
  auto state = init_train_state(tiny_config());
  std::vector<ModelParameters> replicas{state.policy.clone()};
  for (auto& v : state.policy.decoder().mem_values0.mutable_values()) v = 1e200;
  try {
    train_step(state, replicas, tiny_train(), custom_scenario(6, 2, {2, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
    EXPECT_NE(std::string(e.what()).find("batch seeds"), std::string::npos);
  }
}

TEST(TrainConfig, Checks) {
  TrainConfig t;
  t.lr = 0.0;
  EXPECT_THROW(t.check(), Error);
  t = TrainConfig{};
  t.lambda_ent = -1.0;
  EXPECT_THROW(t.check(), Error);
  EXPECT_NO_THROW(TrainConfig{}.check());
}


TEST(ReinforceLoss, ConstantAndBatchMeanBaselines) {
  const ModelParameters policy(tiny_config());
  std::vector<ProblemInstance> batch;
  for (std::uint64_t s = 0; s < 5; ++s) batch.push_back(generate_instance(custom_scenario(6, 2, {2, 3}), s));
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const auto rollout = reinforce_batch_loss(batch, policy, policy, seeds);
  const auto mean = reinforce_batch_loss(batch, policy, policy, seeds, true, {BaselineKind::BatchMean, 0.0});
  const auto fixed = reinforce_batch_loss(batch, policy, policy, seeds, true, {BaselineKind::Constant, 2.5});
  // Same samples whatever the baseline.
  EXPECT_EQ(mean.stats.mean_cost, rollout.stats.mean_cost);
  EXPECT_EQ(fixed.stats.mean_cost, rollout.stats.mean_cost);
  EXPECT_NEAR(mean.stats.mean_advantage, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(mean.stats.mean_baseline, mean.stats.mean_cost);
  EXPECT_NEAR(fixed.stats.mean_baseline, 2.5, 1e-12);
  EXPECT_NEAR(fixed.stats.mean_advantage, fixed.stats.mean_cost - 2.5, 1e-12);
}

TEST(Train, WarmupUsesMovingAverageThenRollout) {
  auto cfg = tiny_train();
  cfg.epochs = 2;
  cfg.steps_per_epoch = 1;
  cfg.baseline_warmup_epochs = 1;
  const auto spec = custom_scenario(6, 2, {2, 3});
  const auto warm = train(cfg, tiny_config(), spec);
  ASSERT_TRUE(warm.warmup_baseline.has_value());
  // Single warmup step: b is the batch mean, which then seeds the average.
  EXPECT_DOUBLE_EQ(warm.log[0].baseline_cost, warm.log[0].mean_cost);
  EXPECT_DOUBLE_EQ(*warm.warmup_baseline, warm.log[0].mean_cost);

  cfg.baseline_warmup_epochs = 0;
  const auto plain = train(cfg, tiny_config(), spec);
  EXPECT_FALSE(plain.warmup_baseline.has_value());
  // Same samples in epoch 0, different b(s).
  EXPECT_EQ(plain.log[0].mean_cost, warm.log[0].mean_cost);
  EXPECT_NE(plain.log[0].baseline_cost, warm.log[0].baseline_cost);

  cfg.warmup_decay = 1.0;
  EXPECT_THROW(cfg.check(), Error);
}
