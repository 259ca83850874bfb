#pragma once

#include <vector>

#include "mpfl/decoder.hpp"
#include "mpfl/diff/gradcheck.hpp"
#include "mpfl/encoder.hpp"
#include "mpfl/model.hpp"
#include "mpfl/trainer.hpp"

namespace mpfl {

inline ModelConfig policy_gradcheck_config() {
  ModelConfig c;
  c.d_h = 16;
  c.heads = 2;
  c.layers = 2;
  c.knn = 3;
  c.ffn_hidden = 24;
  c.phi_hidden = 4;
  c.memory_slots = 4;
  c.periods = 2;
  c.learn_beta = true;
  c.init_seed = 11;
  return c;
}

// Whole policy on a replayed trajectory: -log p + orth + ent. Head weights
// and the write gate are randomized so every branch carries gradient.
inline diff::GradCheckResult policy_gradcheck(std::uint64_t seed = 3) {
  const ModelConfig cfg = policy_gradcheck_config();
  ModelParameters model(cfg);
  Rng rng(derive_seed(seed, "policy-gradcheck"));
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& layer : model.encoder().layers) {
    for (auto& w : layer.head_weights.mutable_values()) w = u(rng);
  }
  model.decoder().write_gate.mutable_values()[0] = u(rng);

  const auto inst = generate_instance(custom_scenario(6, 2, {2, 3}), seed);
  FacilitySets replay;
  {
    diff::NoGradGuard guard;
    Rng sample_rng(derive_seed(seed, "policy-gradcheck-trajectory"));
    DecodeOptions opts;
    opts.mode = DecodeMode::Sample;
    opts.rng = &sample_rng;
    replay = decode(inst, encode(inst, model), model, opts).solution.facilities;
  }

  std::vector<Tensor> inputs;
  for (const auto& p : model.parameters()) inputs.push_back(p.tensor);
  return diff::check_gradients("policy", inputs, [&] {
    DecodeOptions opts;
    opts.mode = DecodeMode::Replay;
    opts.replay = &replay;
    const auto res = decode(inst, encode(inst, model), model, opts);
    return diff::add(diff::add(diff::scale(res.log_prob, -1.0),
                               orth_loss(model.decoder().mem_values0)),
                     ent_loss(res.alphas));
  });
}

}  // namespace mpfl
