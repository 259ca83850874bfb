#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mpfl/instance.hpp"
#include "mpfl/model.hpp"

namespace mpfl {

// Node features [x, y, w^1 .. w^T], zero-padded to `periods` demand columns.
inline Tensor node_features(const ProblemInstance& inst, std::size_t periods) {
  if (inst.period_count() > periods) {
    throw Error(ErrorKind::Config, "instance has " + std::to_string(inst.period_count()) +
                                       " periods, model expects at most " +
                                       std::to_string(periods));
  }
  const std::size_t n = inst.node_count(), f = 2 + periods;
  std::vector<double> v(n * f, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    v[i * f] = inst.nodes[i].x;
    v[i * f + 1] = inst.nodes[i].y;
    for (std::size_t t = 0; t < inst.period_count(); ++t) v[i * f + 2 + t] = inst.weights[t][i];
  }
  return Tensor::from({n, f}, std::move(v));
}

inline Tensor initial_embedding(const Tensor& features, const EncoderParams& p) {
  if (features.cols() != p.w_init.rows()) {
    throw Error(ErrorKind::Shape, "feature length " + std::to_string(features.cols()) +
                                      " does not match W_init rows " +
                                      std::to_string(p.w_init.rows()));
  }
  return diff::add_row(diff::matmul(features, p.w_init), p.b_init);
}

// Attention pattern plus the Euclidean length of every edge.
struct SpatialGraph {
  diff::AttentionGraph graph;
  std::vector<double> edge_distance;
};

// Each node attends to its K nearest neighbours and, when enabled, itself.
// Rows are sorted by node index. K >= N - 1 yields the dense pattern.
inline SpatialGraph build_spatial_graph(const ProblemInstance& inst, std::size_t k,
                                        bool self_attention) {
  const std::size_t n = inst.node_count();
  const auto nbrs = knn_neighbors(inst, k);
  SpatialGraph g;
  g.graph.nodes = n;
  g.graph.offsets.reserve(n + 1);
  g.graph.offsets.push_back(0);
  std::vector<std::size_t> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.assign(nbrs[i].begin(), nbrs[i].end());
    if (self_attention) row.push_back(i);
    if (row.empty()) {
      throw Error(ErrorKind::Config,
                  "node " + std::to_string(i) + " has no neighbours and self-attention is off");
    }
    std::sort(row.begin(), row.end());
    for (std::size_t j : row) {
      g.graph.index.push_back(j);
      g.edge_distance.push_back(inst.dist(i, j));
    }
    g.graph.offsets.push_back(g.graph.index.size());
  }
  return g;
}

inline SpatialGraph build_spatial_graph(const ProblemInstance& inst, const ModelConfig& cfg) {
  const std::size_t n = inst.node_count();
  const bool dense = cfg.plain_path || !cfg.knn_sparse;
  const std::size_t k = dense ? (n > 0 ? n - 1 : 0) : cfg.knn;
  return build_spatial_graph(inst, k, cfg.self_attention || cfg.plain_path);
}

// phi(d) for a column of distances: [E x 1] -> [E x 1].
inline Tensor distance_mlp(const Tensor& distances, const EncoderLayerParams& p) {
  const Tensor hidden = diff::tanh(diff::add_row(diff::matmul(distances, p.phi_w1), p.phi_b1));
  return diff::add_row(diff::matmul(hidden, p.phi_w2), p.phi_b2);
}

// w_m * phi(d) for every edge and head: [E x heads].
inline Tensor distance_bias(const Tensor& distances, const EncoderLayerParams& p) {
  return diff::matmul(distance_mlp(distances, p), p.head_weights);
}

// Scalar form, for inspection.
inline double distance_bias(double d, std::size_t head, const EncoderLayerParams& p) {
  diff::NoGradGuard guard;
  const Tensor b = distance_bias(Tensor::scalar(d), p);
  return b(0, head);
}

inline Tensor sparse_attention_layer(const Tensor& h, const SpatialGraph& g,
                                     const Tensor& edge_distances, const EncoderLayerParams& p,
                                     const ModelConfig& cfg) {
  const Tensor q = diff::matmul(h, p.wq);
  const Tensor k = diff::matmul(h, p.wk);
  const Tensor v = diff::matmul(h, p.wv);
  const Tensor bias = cfg.plain_path ? Tensor() : distance_bias(edge_distances, p);
  const Tensor att = diff::graph_attention(q, k, v, g.graph, cfg.heads, bias);
  const Tensor mha = diff::matmul(att, p.wo);
  const Tensor h_hat = diff::add_row(
      diff::mul_row(diff::layer_norm_rows(diff::add(h, mha)), p.ln1_gamma), p.ln1_beta);
  const Tensor ffn = diff::add_row(
      diff::matmul(diff::relu(diff::add_row(diff::matmul(h_hat, p.ffn_w1), p.ffn_b1)), p.ffn_w2),
      p.ffn_b2);
  return diff::add_row(diff::mul_row(diff::layer_norm_rows(diff::add(h_hat, ffn)), p.ln2_gamma),
                       p.ln2_beta);
}

struct NodeEmbeddings {
  Tensor h;                   // [N x d_h]
  std::vector<Tensor> layers; // h^(0) .. h^(L)
};

inline NodeEmbeddings encode(const ProblemInstance& inst, const ModelParameters& model,
                             const SpatialGraph& graph) {
  const auto& cfg = model.config();
  NodeEmbeddings out;
  Tensor h = initial_embedding(node_features(inst, cfg.periods), model.encoder());
  out.layers.push_back(h);
  const Tensor dist = Tensor::from({graph.edge_distance.size(), 1}, graph.edge_distance);
  for (const auto& layer : model.encoder().layers) {
    h = sparse_attention_layer(h, graph, dist, layer, cfg);
    out.layers.push_back(h);
  }
  out.h = h;
  return out;
}

inline NodeEmbeddings encode(const ProblemInstance& inst, const ModelParameters& model) {
  return encode(inst, model, build_spatial_graph(inst, model.config()));
}

}  // namespace mpfl
