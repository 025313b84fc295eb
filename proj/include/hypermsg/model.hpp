#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <vector>

#include "hypermsg/aggregate.hpp"
#include "hypermsg/errors.hpp"
#include "hypermsg/hypergraph.hpp"
#include "hypermsg/tensor.hpp"

namespace hypermsg {

/// Layer weights W^1..W^L plus the optional importance network. Layers chain
/// input_dim -> hidden... -> output_dim; no biases, matching the update
/// sigma(W^l (h / ||h||_2)).
struct ModelParams {
  std::vector<Tensor> layer_weights;
  ImportanceNet importance_net;  // defined() only for the adaptive variant
  Tensor readout_head;           // defined() only for hypergraph-level tasks
  double dropout_rate = 0.5;
  Nonlinearity nonlinearity = Nonlinearity::ReLU;

  static ModelParams init(const std::vector<int>& dims, bool adaptive, double dropout, Rng& rng,
                          Nonlinearity act = Nonlinearity::ReLU) {
    require(dims.size() >= 2, ErrorCode::InvalidArgument, "need at least input and output dims");
    require(dropout >= 0.0 && dropout < 1.0, ErrorCode::InvalidArgument, "dropout must lie in [0,1)");
    ModelParams p;
    for (size_t l = 0; l + 1 < dims.size(); ++l)
      p.layer_weights.push_back(glorot_uniform(dims[l], dims[l + 1], rng));
    if (adaptive) p.importance_net = ImportanceNet::init(rng, 8, 8, act);
    p.dropout_rate = dropout;
    p.nonlinearity = act;
    return p;
  }

  int num_layers() const { return static_cast<int>(layer_weights.size()); }
  int input_dim() const { return layer_weights.front().rows(); }
  int output_dim() const { return layer_weights.back().cols(); }
  bool adaptive() const { return importance_net.defined(); }

  std::vector<int> dims() const {
    std::vector<int> d;
    d.push_back(input_dim());
    for (const Tensor& w : layer_weights) d.push_back(w.cols());
    return d;
  }

  std::vector<Tensor> trainable() const {
    std::vector<Tensor> all = layer_weights;
    if (importance_net.defined())
      for (const Tensor& t : importance_net.params()) all.push_back(t);
    if (readout_head.defined()) all.push_back(readout_head);
    return all;
  }

  void validate() const {
    require(!layer_weights.empty(), ErrorCode::InvalidArgument, "model has no layers");
    for (size_t l = 0; l + 1 < layer_weights.size(); ++l)
      require(layer_weights[l].cols() == layer_weights[l + 1].rows(), ErrorCode::ShapeMismatch,
              "consecutive layer dims do not chain");
  }
};

/// Eval mode is fully deterministic: no dropout, full neighborhoods.
/// `ablate_aggregation` zeroes the aggregation term, reducing the network to
/// a per-node MLP over the residual path (used for ablation baselines).
struct ForwardMode {
  bool training = false;
  uint64_t seed = 0;
  bool ablate_aggregation = false;

  static ForwardMode eval() { return ForwardMode{}; }
  static ForwardMode train(uint64_t seed) { return ForwardMode{true, seed, false}; }
};

/// Differentiable forward pass over L layers:
///   h^l <- h^{l-1} + F2({F1 over E(v)});  h^l <- sigma(W^l (h^l/||h^l||_2))
/// Sampling (when cfg.alpha is set) applies in training mode only; dropout
/// follows each nonlinearity except the last layer's. The last layer emits
/// raw scores (no sigma): with a ReLU there, class logits die irrecoverably
/// once they go negative, which collapses training on some seeds.
inline Tensor forward_t(Tape& tape, const Hypergraph& h, const Tensor& x, const ModelParams& params,
                        const AggregationConfig& cfg, const ForwardMode& mode) {
  cfg.validate();
  params.validate();
  require(x.rows() == h.num_nodes, ErrorCode::ShapeMismatch, "feature rows != node count");
  require(x.cols() == params.input_dim(), ErrorCode::ShapeMismatch,
          "feature dim != first layer input dim");

  Tensor importance;  // undefined for the non-adaptive variant
  std::vector<double> sampling_weights;
  const bool adaptive = cfg.adaptive && params.importance_net.defined();
  if (adaptive) {
    importance = importance_forward_t(tape, params.importance_net, structural_features(h));
    sampling_weights = importance.value();
  } else {
    sampling_weights.assign(h.num_nodes, 1.0);
  }
  const bool sampling = mode.training && cfg.alpha.has_value();
  std::shared_ptr<const AggregationPlan> full_plan;
  if (!sampling) full_plan = build_full_plan(h, cfg);

  AggregationConfig layer_cfg = cfg;
  layer_cfg.adaptive = adaptive;

  Tensor acts = x;
  const int L = params.num_layers();
  for (int l = 0; l < L; ++l) {
    Tensor residual;
    if (mode.ablate_aggregation) {
      residual = acts;
    } else {
      auto plan = sampling ? build_sampled_plan(h, cfg, sampling_weights, mode.seed, static_cast<uint64_t>(l))
                           : full_plan;
      Tensor agg = hyper_aggregate(tape, acts, importance, plan, layer_cfg);
      residual = add(tape, acts, agg);
    }
    Tensor normed = rowwise_l2_normalize(tape, residual);
    Tensor pre = matmul(tape, normed, params.layer_weights[l]);
    Tensor post = (l + 1 < L) ? apply_nonlinearity(tape, pre, params.nonlinearity) : pre;
    if (l + 1 < L && mode.training && params.dropout_rate > 0.0) {
      Rng drop_rng(derive_seed(mode.seed, {0xd70u, static_cast<uint64_t>(l)}));
      post = dropout(tape, post, params.dropout_rate, true, drop_rng);
    }
    acts = post;
  }
  return acts;
}

/// Plain (non-recording) forward returning the N x c embedding matrix.
inline FeatureMatrix forward(const Hypergraph& h, const FeatureMatrix& x, const ModelParams& params,
                             const AggregationConfig& cfg, const ForwardMode& mode = ForwardMode::eval()) {
  Tape tape(false);
  return forward_t(tape, h, Tensor::from(x), params, cfg, mode).to_matrix();
}

/// Scores for previously unseen nodes: a full-neighborhood eval pass over the
/// complete hypergraph, restricted to the requested rows. Pure function of
/// structure + features; parameters are not touched.
inline FeatureMatrix predict_unseen(const Hypergraph& h_train, const Hypergraph& h_full,
                                    const FeatureMatrix& x_full, const ModelParams& params,
                                    const AggregationConfig& cfg, const std::vector<int>& unseen) {
  require(h_full.num_nodes >= h_train.num_nodes, ErrorCode::SizeMismatch,
          "full hypergraph smaller than the training one");
  for (int v : unseen)
    require(v >= 0 && v < h_full.num_nodes, ErrorCode::UnknownNodeId,
            "unseen id " + std::to_string(v) + " not in the full hypergraph");
  FeatureMatrix all = forward(h_full, x_full, params, cfg, ForwardMode::eval());
  FeatureMatrix out(static_cast<int>(unseen.size()), all.dim());
  for (size_t r = 0; r < unseen.size(); ++r) {
    const double* src = all.row(unseen[r]);
    std::copy(src, src + all.dim(), out.mutable_row(static_cast<int>(r)));
  }
  return out;
}

enum class ReadoutMethod { MeanPool };

/// Permutation-invariant hypergraph-level readout (column mean of the node
/// embeddings).
inline std::vector<double> readout_hypergraph(const FeatureMatrix& z,
                                              ReadoutMethod method = ReadoutMethod::MeanPool) {
  require(z.rows() > 0, ErrorCode::EmptyEmbedding, "readout of an empty embedding");
  (void)method;  // MeanPool is the only supported readout
  std::vector<double> out(z.dim(), 0.0);
  for (int i = 0; i < z.rows(); ++i) {
    const double* r = z.row(i);
    for (int j = 0; j < z.dim(); ++j) out[j] += r[j];
  }
  for (auto& v : out) v /= static_cast<double>(z.rows());
  return out;
}

}  // namespace hypermsg
