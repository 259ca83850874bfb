#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <json.hpp>

#include "mpfl/encoder.hpp"
#include "mpfl/instance.hpp"
#include "mpfl/model.hpp"
#include "mpfl/rng.hpp"

namespace mpfl {

// Associative memory: static keys, written values, read inverse temperature
// and write-gate logit (eta = sigmoid(write_gate)).
struct MemoryState {
  Tensor keys;        // [S x d]
  Tensor values;      // [S x d]
  Tensor beta;        // [1 x 1], > 0
  Tensor write_gate;  // [1 x 1]

  std::size_t slots() const { return keys.rows(); }
};

struct MemoryRead {
  Tensor alpha;  // [1 x S]
  Tensor r;      // [1 x d]
};

// alpha = softmax(beta * keys q), r = alpha values.
inline MemoryRead memory_read(const Tensor& q, const MemoryState& mem) {
  const Tensor scores = diff::mul_scalar(diff::matmul_nt(q, mem.keys), mem.beta);
  MemoryRead out;
  out.alpha = diff::softmax_rows(scores);
  out.r = diff::matmul(out.alpha, mem.values);
  return out;
}

// values_i += eta * alpha_i * q; keys are untouched.
inline MemoryState memory_write(const Tensor& q, const Tensor& alpha, const MemoryState& mem) {
  MemoryState out = mem;
  const Tensor eta = diff::sigmoid(mem.write_gate);
  out.values = diff::add(mem.values, diff::mul_scalar(diff::outer(alpha, q), eta));
  return out;
}

inline MemoryState initial_memory(const ModelParameters& model) {
  const auto& d = model.decoder();
  return {d.mem_keys, d.mem_values0, diff::exp(d.log_beta), d.write_gate};
}

// Per-decode state: GRU hidden, memory copy and the current step's read.
class DecodeSession {
 public:
  DecodeSession(const ProblemInstance& inst, const NodeEmbeddings& emb, const ModelParameters& model)
      : inst_(&inst), model_(&model), emb_(emb.h) {
    const auto& cfg = model.config();
    const auto& d = model.decoder();
    if (emb_.rows() != inst.node_count() || emb_.cols() != cfg.d_h) {
      throw Error(ErrorKind::Shape, "embeddings do not match instance and model width");
    }
    node_keys_ = diff::matmul(emb_, d.node_key);
    h_ = diff::tanh(diff::add_row(diff::matmul(diff::mean_rows(emb_), d.h0_w), d.h0_b));
    use_memory_ = !cfg.plain_path;
    if (use_memory_) memory_ = initial_memory(model);
  }

  // GRU update for (period, step). `previous` is the node chosen at the last
  // step of this period, or nullopt at the period's first step.
  void advance(std::size_t period, std::size_t step, std::optional<std::size_t> previous) {
    const auto& d = model_->decoder();
    const double p_t = inst_->p_schedule[period];
    const double periods = static_cast<double>(inst_->period_count());
    const Tensor ctx_features = Tensor::row(
        {static_cast<double>(period) / periods, static_cast<double>(step) / p_t,
         (p_t - static_cast<double>(step)) / p_t, p_t / static_cast<double>(inst_->node_count())});
    const Tensor ctx = diff::add_row(diff::matmul(ctx_features, d.ctx_w), d.ctx_b);
    const Tensor prev = previous ? diff::gather_rows(emb_, {*previous}) : d.start;
    h_ = diff::gru_cell(h_, diff::concat_cols({prev, ctx}), d.gru);
    if (use_memory_) {
      read_ = memory_read(h_, memory_);
      query_ = diff::add(diff::matmul(h_, d.query_h), diff::matmul(read_.r, d.query_r));
    } else {
      read_ = {};
      query_ = diff::matmul(h_, d.query_h);
    }
  }

  // Masked selection distribution for the current step: [1 x N].
  Tensor probabilities(const std::vector<char>& selected) const {
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(model_->config().d_h));
    Tensor logits = diff::scale(diff::matmul_nt(query_, node_keys_), inv_sqrt);
    return diff::softmax_rows(diff::masked_fill_neg_inf(logits, selected));
  }

  // Writes the current query into memory using the current read weights.
  void commit() {
    if (use_memory_) memory_ = memory_write(h_, read_.alpha, memory_);
  }

  const Tensor& hidden() const { return h_; }
  const Tensor& alpha() const { return read_.alpha; }
  const MemoryState& memory() const { return memory_; }
  bool uses_memory() const { return use_memory_; }

 private:
  const ProblemInstance* inst_;
  const ModelParameters* model_;
  Tensor emb_;
  Tensor node_keys_;
  Tensor h_;
  Tensor query_;
  bool use_memory_ = true;
  MemoryState memory_;
  MemoryRead read_;
};

enum class DecodeMode { Greedy, Sample, Replay };

struct DecodeOptions {
  DecodeMode mode = DecodeMode::Greedy;
  Rng* rng = nullptr;                 // Sample
  const FacilitySets* replay = nullptr;  // Replay: forced choices, in order
  bool capture_trace = false;
  bool capture_probabilities = false;
};

struct StepRecord {
  std::size_t period = 0;
  std::size_t step = 0;
  std::size_t chosen = 0;
  double log_prob = 0.0;
  std::vector<double> alpha;
  std::vector<double> probabilities;
};

struct DecodeResult {
  Solution solution;
  Tensor log_prob;             // [1 x 1]; differentiable when recording
  std::vector<Tensor> alphas;  // read weights per step (empty without memory)
  std::vector<StepRecord> trace;
  Tensor final_values;         // memory values after the last write
};

// Lowest index among the maxima.
inline std::size_t argmax_lowest(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

inline std::size_t sample_index(std::span<const double> p, Rng& rng) {
  const double u = uniform01(rng);
  double cum = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    cum += p[i];
    last = i;
    if (u < cum) return i;
  }
  return last;
}

inline DecodeResult decode(const ProblemInstance& inst, const NodeEmbeddings& emb,
                           const ModelParameters& model, const DecodeOptions& opts = {}) {
  if (opts.mode == DecodeMode::Sample && !opts.rng) {
    throw Error(ErrorKind::Config, "sample decoding needs an rng");
  }
  if (opts.mode == DecodeMode::Replay &&
      (!opts.replay || opts.replay->size() != inst.period_count())) {
    throw Error(ErrorKind::Config, "replay decoding needs one choice list per period");
  }
  DecodeSession session(inst, emb, model);
  DecodeResult out;
  std::vector<Tensor> step_log_probs;
  const std::size_t n = inst.node_count();
  std::vector<char> selected(n);
  for (std::size_t t = 0; t < inst.period_count(); ++t) {
    std::fill(selected.begin(), selected.end(), 0);
    std::optional<std::size_t> previous;
    std::vector<int> open;
    const auto p_t = static_cast<std::size_t>(inst.p_schedule[t]);
    if (opts.mode == DecodeMode::Replay && (*opts.replay)[t].size() != p_t) {
      throw Error(ErrorKind::Config, "replay period " + std::to_string(t) + " has the wrong length");
    }
    for (std::size_t k = 0; k < p_t; ++k) {
      session.advance(t, k, previous);
      const Tensor probs = session.probabilities(selected);
      std::size_t choice = 0;
      switch (opts.mode) {
        case DecodeMode::Greedy: choice = argmax_lowest(probs.values()); break;
        case DecodeMode::Sample: choice = sample_index(probs.values(), *opts.rng); break;
        case DecodeMode::Replay: choice = static_cast<std::size_t>((*opts.replay)[t][k]); break;
      }
      if (choice >= n || selected[choice]) {
        throw Error(ErrorKind::NoFeasibleAction, "decoder chose an unavailable node");
      }
      const Tensor lp = diff::log(diff::element(probs, 0, choice));
      step_log_probs.push_back(lp);
      if (session.uses_memory()) out.alphas.push_back(session.alpha());
      if (opts.capture_trace) {
        StepRecord rec{t, k, choice, lp.item(), {}, {}};
        if (session.uses_memory()) {
          rec.alpha.assign(session.alpha().values().begin(), session.alpha().values().end());
        }
        if (opts.capture_probabilities) {
          rec.probabilities.assign(probs.values().begin(), probs.values().end());
        }
        out.trace.push_back(std::move(rec));
      }
      session.commit();
      selected[choice] = 1;
      open.push_back(static_cast<int>(choice));
      previous = choice;
    }
    out.solution.facilities.push_back(std::move(open));
  }
  out.solution.cost = evaluate_cost(inst, out.solution.facilities);
  out.log_prob = diff::sum(diff::concat_cols(step_log_probs));
  if (session.uses_memory()) out.final_values = session.memory().values;
  return out;
}

// Best of `samples` sampled decodes by cost; earliest wins ties.
inline Solution sample_best_of(const ProblemInstance& inst, const NodeEmbeddings& emb,
                               const ModelParameters& model, std::size_t samples, Rng& rng) {
  if (samples == 0) throw Error(ErrorKind::Config, "need at least one sample");
  diff::NoGradGuard guard;
  DecodeOptions opts;
  opts.mode = DecodeMode::Sample;
  opts.rng = &rng;
  Solution best;
  for (std::size_t s = 0; s < samples; ++s) {
    Solution sol = decode(inst, emb, model, opts).solution;
    if (s == 0 || sol.cost < best.cost) best = std::move(sol);
  }
  return best;
}

// Inference entry point: encode once, then greedy or best-of-S sampling.
inline Solution solve_with_policy(const ProblemInstance& inst, const ModelParameters& model,
                                  std::size_t samples, Rng* rng) {
  diff::NoGradGuard guard;
  const NodeEmbeddings emb = encode(inst, model);
  if (samples == 0) return decode(inst, emb, model).solution;
  if (!rng) throw Error(ErrorKind::Config, "sampling needs an rng");
  return sample_best_of(inst, emb, model, samples, *rng);
}

struct MemoryDiagnostics {
  double mean_abs_cosine = 0.0;
  double utilization = 0.0;
};

// Mean |cos| over distinct pairs of memory value rows, and the fraction of
// slots whose largest read weight over all steps exceeds 1/S (strictly).
inline MemoryDiagnostics memory_diagnostics(std::span<const double> values, std::size_t slots,
                                            const std::vector<std::vector<double>>& alphas) {
  MemoryDiagnostics out;
  if (slots == 0) return out;
  const std::size_t d = values.size() / slots;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < slots; ++a) {
    for (std::size_t b = a + 1; b < slots; ++b) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        dot += values[a * d + c] * values[b * d + c];
        na += values[a * d + c] * values[a * d + c];
        nb += values[b * d + c] * values[b * d + c];
      }
      const double denom = std::sqrt(na) * std::sqrt(nb);
      total += denom > 0.0 ? std::abs(dot) / denom : 0.0;
      ++pairs;
    }
  }
  out.mean_abs_cosine = pairs ? total / static_cast<double>(pairs) : 0.0;
  const double threshold = 1.0 / static_cast<double>(slots);
  std::size_t used = 0;
  for (std::size_t s = 0; s < slots; ++s) {
    double mx = 0.0;
    for (const auto& alpha : alphas) mx = std::max(mx, alpha.at(s));
    if (mx > threshold) ++used;
  }
  out.utilization = static_cast<double>(used) / static_cast<double>(slots);
  return out;
}

inline MemoryDiagnostics memory_diagnostics(const DecodeResult& result) {
  if (!result.final_values.defined()) return {};
  std::vector<std::vector<double>> alphas;
  for (const auto& rec : result.trace) alphas.push_back(rec.alpha);
  return memory_diagnostics(result.final_values.values(), result.final_values.rows(), alphas);
}

inline nlohmann::json trace_to_json(const std::vector<StepRecord>& trace) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : trace) {
    out.push_back({{"period", r.period},
                   {"step", r.step},
                   {"chosen", r.chosen},
                   {"log_prob", r.log_prob},
                   {"alpha", r.alpha}});
  }
  return out;
}

}  // namespace mpfl
