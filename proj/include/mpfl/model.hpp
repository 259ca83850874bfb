#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpfl/diff/checkpoint.hpp"
#include "mpfl/diff/gru.hpp"
#include "mpfl/diff/ops.hpp"
#include "mpfl/rng.hpp"

namespace mpfl {

using diff::Parameter;
using diff::Tensor;

struct ModelConfig {
  std::size_t d_h = 128;
  std::size_t heads = 8;
  std::size_t layers = 3;
  std::size_t knn = 32;
  std::size_t ffn_hidden = 512;
  std::size_t phi_hidden = 16;
  std::size_t memory_slots = 32;
  // Number of demand periods in the node features; instances with fewer
  // periods are zero-padded.
  std::size_t periods = 3;
  bool self_attention = true;
  // Read inverse temperature; 0 selects 1/sqrt(d_h).
  double beta = 0.0;
  bool learn_beta = false;

  // Ablation toggles. Off means: head bias weights frozen at 0, K = N - 1,
  // write gate frozen shut with a zero read projection.
  bool distance_bias = true;
  bool knn_sparse = true;
  bool memory = true;
  // Plain attention encoder/decoder: no distance MLP, dense attention, no
  // memory code at all.
  bool plain_path = false;
  // Pointer logits become C * tanh(u) when C > 0.

  std::uint64_t init_seed = 1;

  std::size_t feature_size() const { return 2 + periods; }
  std::size_t key_width() const { return d_h / heads; }
  double read_beta() const { return beta > 0.0 ? beta : 1.0 / std::sqrt(static_cast<double>(d_h)); }

  void check() const {
    if (d_h == 0 || heads == 0 || d_h % heads != 0) {
      throw Error(ErrorKind::Config, "d_h must be a positive multiple of the head count");
    }
    if (knn == 0) throw Error(ErrorKind::Config, "K must be at least 1");
    if (memory_slots == 0) throw Error(ErrorKind::Config, "memory needs at least one slot");
    if (periods == 0) throw Error(ErrorKind::Config, "periods must be at least 1");
    if (ffn_hidden == 0 || phi_hidden == 0) throw Error(ErrorKind::Config, "hidden widths must be positive");
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"d_h", c.d_h},
          {"heads", c.heads},
          {"layers", c.layers},
          {"knn", c.knn},
          {"ffn_hidden", c.ffn_hidden},
          {"phi_hidden", c.phi_hidden},
          {"memory_slots", c.memory_slots},
          {"periods", c.periods},
          {"self_attention", c.self_attention},
          {"beta", c.beta},
          {"learn_beta", c.learn_beta},
          {"distance_bias", c.distance_bias},
          {"knn_sparse", c.knn_sparse},
          {"memory", c.memory},
          {"plain_path", c.plain_path},
          {"init_seed", c.init_seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_h = j.value("d_h", c.d_h);
  c.heads = j.value("heads", c.heads);
  c.layers = j.value("layers", c.layers);
  c.knn = j.value("knn", c.knn);
  c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
  c.phi_hidden = j.value("phi_hidden", c.phi_hidden);
  c.memory_slots = j.value("memory_slots", c.memory_slots);
  c.periods = j.value("periods", c.periods);
  c.self_attention = j.value("self_attention", c.self_attention);
  c.beta = j.value("beta", c.beta);
  c.learn_beta = j.value("learn_beta", c.learn_beta);
  c.distance_bias = j.value("distance_bias", c.distance_bias);
  c.knn_sparse = j.value("knn_sparse", c.knn_sparse);
  c.memory = j.value("memory", c.memory);
  c.plain_path = j.value("plain_path", c.plain_path);
  c.init_seed = j.value("init_seed", c.init_seed);
  c.check();
  return c;
}

struct EncoderLayerParams {
  Tensor phi_w1, phi_b1, phi_w2, phi_b2;  // distance MLP 1 -> phi_hidden -> 1
  Tensor head_weights;                    // [1 x heads]
  Tensor wq, wk, wv, wo;
  Tensor ln1_gamma, ln1_beta;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Tensor ln2_gamma, ln2_beta;
};

struct EncoderParams {
  Tensor w_init, b_init;
  std::vector<EncoderLayerParams> layers;
};

struct DecoderParams {
  Tensor h0_w, h0_b;
  Tensor start;         // first-step input of every period
  Tensor ctx_w, ctx_b;  // period/step context
  diff::GruParams gru;
  Tensor node_key;      // W_K
  Tensor query_h, query_r;
  Tensor mem_keys, mem_values0, write_gate, log_beta;
};

inline constexpr std::size_t kContextFeatures = 4;

// All learnable tensors of the policy. Copies share storage; use clone() for
// an independent replica.
class ModelParameters {
 public:
  ModelParameters() = default;

  explicit ModelParameters(const ModelConfig& config) : config_(config) {
    config_.check();
    Rng rng(derive_seed(config_.init_seed, "model-init"));
    const std::size_t d = config_.d_h;
    auto uniform = [&](std::size_t rows, std::size_t cols, std::size_t fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      std::vector<double> v(rows * cols);
      for (auto& x : v) x = u(rng);
      return Tensor::from({rows, cols}, std::move(v), true);
    };
    auto constant = [](std::size_t rows, std::size_t cols, double v) {
      return Tensor::full({rows, cols}, v, true);
    };
    const std::size_t f = config_.feature_size();
    enc_.w_init = uniform(f, d, f);
    enc_.b_init = uniform(1, d, f);
    for (std::size_t l = 0; l < config_.layers; ++l) {
      EncoderLayerParams p;
      const std::size_t ph = config_.phi_hidden;
      p.phi_w1 = uniform(1, ph, 1);
      p.phi_b1 = uniform(1, ph, 1);
      p.phi_w2 = uniform(ph, 1, ph);
      p.phi_b2 = uniform(1, 1, ph);
      p.head_weights = constant(1, config_.heads, 0.0);
      p.wq = uniform(d, d, d);
      p.wk = uniform(d, d, d);
      p.wv = uniform(d, d, d);
      p.wo = uniform(d, d, d);
      p.ln1_gamma = constant(1, d, 1.0);
      p.ln1_beta = constant(1, d, 0.0);
      p.ffn_w1 = uniform(d, config_.ffn_hidden, d);
      p.ffn_b1 = uniform(1, config_.ffn_hidden, d);
      p.ffn_w2 = uniform(config_.ffn_hidden, d, config_.ffn_hidden);
      p.ffn_b2 = uniform(1, d, config_.ffn_hidden);
      p.ln2_gamma = constant(1, d, 1.0);
      p.ln2_beta = constant(1, d, 0.0);
      enc_.layers.push_back(std::move(p));
    }
    dec_.h0_w = uniform(d, d, d);
    dec_.h0_b = uniform(1, d, d);
    dec_.start = uniform(1, d, d);
    dec_.ctx_w = uniform(kContextFeatures, d, kContextFeatures);
    dec_.ctx_b = uniform(1, d, kContextFeatures);
    dec_.gru.w_input = uniform(2 * d, 3 * d, d);
    dec_.gru.w_hidden = uniform(d, 3 * d, d);
    dec_.gru.b_input = uniform(1, 3 * d, d);
    dec_.gru.b_hidden = uniform(1, 3 * d, d);
    dec_.node_key = uniform(d, d, d);
    dec_.query_h = uniform(d, d, 2 * d);
    dec_.query_r = uniform(d, d, 2 * d);
    const std::size_t s = config_.memory_slots;
    dec_.mem_keys = uniform(s, d, d);
    dec_.mem_values0 = uniform(s, d, d);
    dec_.write_gate = constant(1, 1, 0.0);
    dec_.log_beta = constant(1, 1, std::log(config_.read_beta()));
    dec_.log_beta.set_requires_grad(config_.learn_beta);
    apply_ablation();
  }

  const ModelConfig& config() const { return config_; }
  const EncoderParams& encoder() const { return enc_; }
  const DecoderParams& decoder() const { return dec_; }
  EncoderParams& encoder() { return enc_; }
  DecoderParams& decoder() { return dec_; }

  // Pins the tensors that the ablation toggles switch off.
  void apply_ablation() {
    if (!config_.distance_bias || config_.plain_path) {
      for (auto& l : enc_.layers) {
        std::fill(l.head_weights.mutable_values().begin(), l.head_weights.mutable_values().end(), 0.0);
        l.head_weights.set_requires_grad(false);
      }
    }
    if (!config_.memory || config_.plain_path) {
      dec_.write_gate.mutable_values()[0] = -std::numeric_limits<double>::infinity();
      dec_.write_gate.set_requires_grad(false);
      auto r = dec_.query_r.mutable_values();
      std::fill(r.begin(), r.end(), 0.0);
      dec_.query_r.set_requires_grad(false);
    }
  }

  // Stable name -> tensor listing; the order is fixed.
  std::vector<Parameter> parameters() const {
    std::vector<Parameter> out;
    out.push_back({"encoder.init.w", enc_.w_init});
    out.push_back({"encoder.init.b", enc_.b_init});
    for (std::size_t l = 0; l < enc_.layers.size(); ++l) {
      const auto& p = enc_.layers[l];
      const std::string pre = "encoder.layer" + std::to_string(l) + ".";
      out.push_back({pre + "phi.w1", p.phi_w1});
      out.push_back({pre + "phi.b1", p.phi_b1});
      out.push_back({pre + "phi.w2", p.phi_w2});
      out.push_back({pre + "phi.b2", p.phi_b2});
      out.push_back({pre + "head_weights", p.head_weights});
      out.push_back({pre + "wq", p.wq});
      out.push_back({pre + "wk", p.wk});
      out.push_back({pre + "wv", p.wv});
      out.push_back({pre + "wo", p.wo});
      out.push_back({pre + "ln1.gamma", p.ln1_gamma});
      out.push_back({pre + "ln1.beta", p.ln1_beta});
      out.push_back({pre + "ffn.w1", p.ffn_w1});
      out.push_back({pre + "ffn.b1", p.ffn_b1});
      out.push_back({pre + "ffn.w2", p.ffn_w2});
      out.push_back({pre + "ffn.b2", p.ffn_b2});
      out.push_back({pre + "ln2.gamma", p.ln2_gamma});
      out.push_back({pre + "ln2.beta", p.ln2_beta});
    }
    out.push_back({"decoder.h0.w", dec_.h0_w});
    out.push_back({"decoder.h0.b", dec_.h0_b});
    out.push_back({"decoder.start", dec_.start});
    out.push_back({"decoder.ctx.w", dec_.ctx_w});
    out.push_back({"decoder.ctx.b", dec_.ctx_b});
    out.push_back({"decoder.gru.w_input", dec_.gru.w_input});
    out.push_back({"decoder.gru.w_hidden", dec_.gru.w_hidden});
    out.push_back({"decoder.gru.b_input", dec_.gru.b_input});
    out.push_back({"decoder.gru.b_hidden", dec_.gru.b_hidden});
    out.push_back({"decoder.node_key", dec_.node_key});
    out.push_back({"decoder.query.h", dec_.query_h});
    out.push_back({"decoder.query.r", dec_.query_r});
    out.push_back({"memory.keys", dec_.mem_keys});
    out.push_back({"memory.values0", dec_.mem_values0});
    out.push_back({"memory.write_gate", dec_.write_gate});
    out.push_back({"memory.log_beta", dec_.log_beta});
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.size();
    return n;
  }

  ModelParameters clone() const {
    ModelParameters out(*this);
    auto fresh = [](Tensor& t) { t = t.clone(); };
    fresh(out.enc_.w_init);
    fresh(out.enc_.b_init);
    for (auto& l : out.enc_.layers) {
      for (Tensor* t : {&l.phi_w1, &l.phi_b1, &l.phi_w2, &l.phi_b2, &l.head_weights, &l.wq, &l.wk,
                        &l.wv, &l.wo, &l.ln1_gamma, &l.ln1_beta, &l.ffn_w1, &l.ffn_b1, &l.ffn_w2,
                        &l.ffn_b2, &l.ln2_gamma, &l.ln2_beta}) {
        fresh(*t);
      }
    }
    auto& d = out.dec_;
    for (Tensor* t : {&d.h0_w, &d.h0_b, &d.start, &d.ctx_w, &d.ctx_b, &d.gru.w_input,
                      &d.gru.w_hidden, &d.gru.b_input, &d.gru.b_hidden, &d.node_key, &d.query_h,
                      &d.query_r, &d.mem_keys, &d.mem_values0, &d.write_gate, &d.log_beta}) {
      fresh(*t);
    }
    return out;
  }

  // Overwrites values (not trainability) from a structurally identical model.
  void copy_values_from(const ModelParameters& other) {
    auto dst = parameters();
    const auto src = other.parameters();
    if (dst.size() != src.size()) throw Error(ErrorKind::Shape, "parameter sets differ");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (dst[i].tensor.shape() != src[i].tensor.shape()) {
        throw Error(ErrorKind::Shape, "parameter " + dst[i].name + " differs in shape");
      }
      std::copy(src[i].tensor.values().begin(), src[i].tensor.values().end(),
                dst[i].tensor.mutable_values().begin());
    }
  }

  void zero_grad() {
    for (auto& p : parameters()) p.tensor.zero_grad();
  }

  void save(const std::filesystem::path& manifest, nlohmann::json meta = nlohmann::json::object()) const {
    meta["model_config"] = to_json(config_);
    diff::save_checkpoint(parameters(), meta, manifest);
  }

  static ModelParameters load(const std::filesystem::path& manifest) {
    const auto m = diff::read_checkpoint_manifest(manifest);
    ModelParameters model(model_config_from_json(m.at("meta").at("model_config")));
    auto params = model.parameters();
    diff::load_checkpoint(params, manifest);
    return model;
  }

 private:
  ModelConfig config_;
  EncoderParams enc_;
  DecoderParams dec_;
};

}  // namespace mpfl
