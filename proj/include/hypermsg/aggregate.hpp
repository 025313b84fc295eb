#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

#include "hypermsg/errors.hpp"
#include "hypermsg/hypergraph.hpp"
#include "hypermsg/rng.hpp"
#include "hypermsg/tensor.hpp"

namespace hypermsg {

enum class NormalizationMode {
  IntraEdge,        // intra-edge prefactor 1/|N(v_i,e)| (matches the split-invariance oracle)
  GlobalMainText,   // intra-edge prefactor 1/|N(v_i)| (main-text fidelity mode)
};

enum class Nonlinearity { ReLU, Tanh, Identity };

/// One power serves both aggregation levels: global neighborhood invariance
/// requires the intra- and inter-edge exponents to be equal, so the config
/// offers no way to set them apart. The geometric mean is an explicit limit
/// mode, not p = 0.
struct AggregationConfig {
  double p = 1.0;
  bool geometric = false;
  std::optional<int> alpha;  // sample budget per hyperedge; absent = full neighborhood
  NormalizationMode normalization = NormalizationMode::IntraEdge;
  bool adaptive = false;

  void validate() const {
    require(geometric || p != 0.0, ErrorCode::ZeroPower,
            "p must be nonzero; request the geometric mean explicitly");
    if (alpha) require(*alpha >= 1, ErrorCode::InvalidArgument, "alpha must be >= 1");
  }
};

/// Unordered collection of equal-dimension message vectors (s_1, s_2).
using MessageSet = std::vector<std::vector<double>>;

namespace detail {

constexpr double kGeomEps = 1e-12;

/// Test-only switch: when set, reductions run in caller order instead of the
/// canonical value order, which breaks exact permutation equivariance. Used
/// as a negative control to prove the oracles can fail.
inline std::atomic<bool>& canonical_order_disabled() {
  static std::atomic<bool> flag{false};
  return flag;
}

/// The elementwise transform pair behind the generalized mean:
/// pre(x) = sgn(x)|x|^p and post(y) = sgn(y)|y|^{1/p}, or the log/exp pair
/// for the geometric limit mode.
struct MeanMap {
  double p = 1.0;
  bool geometric = false;

  bool identity() const { return !geometric && p == 1.0; }
  double pre(double x) const { return geometric ? std::log(std::max(x, 0.0) + kGeomEps) : spow(x, p); }
  double post(double y) const { return geometric ? std::exp(y) : spow(y, 1.0 / p); }
  double pre_grad(double x) const {
    if (geometric) return x > 0.0 ? 1.0 / (x + kGeomEps) : 0.0;
    return spow_grad(x, p);
  }
  double post_grad(double y) const {
    if (geometric) return std::exp(y);
    return spow_grad(y, 1.0 / p);
  }

  static MeanMap from(const AggregationConfig& cfg) { return MeanMap{cfg.p, cfg.geometric}; }
};

/// Strict weak order on rows by lexicographic value, with an index tiebreak.
/// Sorting summands this way makes every reduction independent of how the
/// members were labeled, which is what makes equivariance exact rather than
/// approximate.
struct RowLexLess {
  const double* data;
  int dim;
  bool operator()(int a, int b) const {
    const double* ra = data + static_cast<size_t>(a) * dim;
    const double* rb = data + static_cast<size_t>(b) * dim;
    for (int j = 0; j < dim; ++j) {
      if (ra[j] < rb[j]) return true;
      if (ra[j] > rb[j]) return false;
    }
    return a < b;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Generalized mean over message sets
// ---------------------------------------------------------------------------

/// Weighted generalized mean M_p of a message set: elementwise signed power
/// to p, weighted sum with the weights exactly as supplied (normalization is
/// the caller's contract), signed power back to 1/p.
///
/// Members are pre-sorted into a canonical value order so any shuffle of
/// (value, weight) pairs produces a bit-identical result.
inline std::vector<double> generalized_mean(const MessageSet& values, const std::vector<double>& weights,
                                            double p) {
  require(!values.empty(), ErrorCode::EmptySet, "generalized mean of an empty set");
  require(p != 0.0, ErrorCode::ZeroPower, "generalized mean power must be nonzero");
  require(weights.size() == values.size(), ErrorCode::SizeMismatch, "one weight per member required");
  const size_t d = values[0].size();
  for (const auto& v : values)
    require(v.size() == d, ErrorCode::SizeMismatch, "message dimensions disagree");

  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  if (!detail::canonical_order_disabled().load(std::memory_order_relaxed)) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (values[a] != values[b]) return values[a] < values[b];
      if (weights[a] != weights[b]) return weights[a] < weights[b];
      return a < b;
    });
  }
  std::vector<double> acc(d, 0.0);
  for (int k : order)
    for (size_t j = 0; j < d; ++j) acc[j] += weights[k] * detail::spow(values[k][j], p);
  for (size_t j = 0; j < d; ++j) acc[j] = detail::spow(acc[j], 1.0 / p);
  return acc;
}

/// Geometric limit mode: exp(sum w_k log(x_k + eps)) elementwise.
inline std::vector<double> geometric_mean(const MessageSet& values, const std::vector<double>& weights) {
  require(!values.empty(), ErrorCode::EmptySet, "geometric mean of an empty set");
  require(weights.size() == values.size(), ErrorCode::SizeMismatch, "one weight per member required");
  const size_t d = values[0].size();
  for (const auto& v : values)
    require(v.size() == d, ErrorCode::SizeMismatch, "message dimensions disagree");
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  if (!detail::canonical_order_disabled().load(std::memory_order_relaxed)) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (values[a] != values[b]) return values[a] < values[b];
      if (weights[a] != weights[b]) return weights[a] < weights[b];
      return a < b;
    });
  }
  std::vector<double> acc(d, 0.0);
  for (int k : order)
    for (size_t j = 0; j < d; ++j) acc[j] += weights[k] * std::log(std::max(values[k][j], 0.0) + detail::kGeomEps);
  for (size_t j = 0; j < d; ++j) acc[j] = std::exp(acc[j]);
  return acc;
}

// ---------------------------------------------------------------------------
// Split-compensation weight
// ---------------------------------------------------------------------------

/// w_j = 1/|N(v,e)| * (sum_{m in split_set} 1/|N(v,e_m)|)^{-1}.
///
/// The invariance theorem matches coefficients per neighbor, so callers
/// checking Property 2 pass, for each neighbor v_j, the split edges that
/// actually contain v_j (a single edge when the parts are disjoint). With
/// split_set = {e} the formula collapses to 1.
inline double split_weight(const Hypergraph& h, int v, int e, const std::vector<int>& split_set) {
  const auto base = intra_edge_neighborhood(h, v, e);  // throws NodeNotInEdge when v not in e
  require(!base.empty(), ErrorCode::EmptyNeighborhood, "split weight of an edge with no neighbors");
  double inv_sum = 0.0;
  for (int m : split_set) {
    const auto part = intra_edge_neighborhood(h, v, m);
    require(!part.empty(), ErrorCode::EmptyNeighborhood, "split edge has no neighbors");
    inv_sum += 1.0 / static_cast<double>(part.size());
  }
  require(inv_sum > 0.0, ErrorCode::InvalidArgument, "split set must be nonempty");
  return (1.0 / static_cast<double>(base.size())) / inv_sum;
}

// ---------------------------------------------------------------------------
// Node-importance network C(N, E)
// ---------------------------------------------------------------------------

inline Tensor apply_nonlinearity(Tape& tape, const Tensor& t, Nonlinearity act) {
  switch (act) {
    case Nonlinearity::ReLU: return relu(tape, t);
    case Nonlinearity::Tanh: return tanh_op(tape, t);
    case Nonlinearity::Identity: return t;
  }
  return t;
}

inline Tensor glorot_uniform(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> w(static_cast<size_t>(rows) * cols);
  for (auto& x : w) x = rng.uniform(-bound, bound);
  return parameter(rows, cols, std::move(w));
}

/// Two-hidden-layer network mapping a node's structural signature
/// (|N(v)|, |E(v)|, |N(v)|/|E(v)|, each log1p-scaled) to a strictly positive
/// attention weight via a softplus link. Output depends on structure only.
struct ImportanceNet {
  Tensor w1, b1, w2, b2, w3, b3;
  Nonlinearity act = Nonlinearity::ReLU;

  static constexpr int kInputDim = 3;

  static ImportanceNet init(Rng& rng, int hidden1 = 8, int hidden2 = 8,
                            Nonlinearity act = Nonlinearity::ReLU) {
    ImportanceNet net;
    // biases start slightly positive so all-zero structural rows (isolated
    // nodes) do not sit exactly on the ReLU kink
    net.w1 = glorot_uniform(kInputDim, hidden1, rng);
    net.b1 = parameter(1, hidden1, std::vector<double>(hidden1, 0.1));
    net.w2 = glorot_uniform(hidden1, hidden2, rng);
    net.b2 = parameter(1, hidden2, std::vector<double>(hidden2, 0.1));
    net.w3 = glorot_uniform(hidden2, 1, rng);
    net.b3 = parameter(1, 1, {0.1});
    net.act = act;
    return net;
  }

  bool defined() const { return w1.defined(); }

  std::vector<Tensor> params() const { return {w1, b1, w2, b2, w3, b3}; }
};

/// Per-node structural signature matrix (N x 3). Isolated nodes get zeros.
inline Tensor structural_features(const Hypergraph& h) {
  Tensor feats = Tensor::zeros(h.num_nodes, ImportanceNet::kInputDim);
  auto& v = feats.mutable_value();
  for (int i = 0; i < h.num_nodes; ++i) {
    const double ne = static_cast<double>(h.neighbor_index[i].size());
    const double ee = static_cast<double>(h.node_to_edges[i].size());
    v[static_cast<size_t>(i) * 3 + 0] = std::log1p(ne);
    v[static_cast<size_t>(i) * 3 + 1] = std::log1p(ee);
    v[static_cast<size_t>(i) * 3 + 2] = ee > 0.0 ? std::log1p(ne / ee) : 0.0;
  }
  return feats;
}

/// Differentiable importance forward: N x 1 tensor of strictly positive
/// attention weights C_v.
inline Tensor importance_forward_t(Tape& tape, const ImportanceNet& net, const Tensor& struct_feats) {
  Tensor h1 = apply_nonlinearity(tape, add_rowvec(tape, matmul(tape, struct_feats, net.w1), net.b1), net.act);
  Tensor h2 = apply_nonlinearity(tape, add_rowvec(tape, matmul(tape, h1, net.w2), net.b2), net.act);
  Tensor out = add_rowvec(tape, matmul(tape, h2, net.w3), net.b3);
  return softplus(tape, out);
}

/// Plain (non-recording) importance values per node.
inline std::vector<double> importance_forward(const ImportanceNet& net, const Hypergraph& h) {
  Tape tape(false);
  return importance_forward_t(tape, net, structural_features(h)).value();
}

// ---------------------------------------------------------------------------
// Probabilistic neighbor sampling
// ---------------------------------------------------------------------------

/// P_j = C_j / sum C_j over the neighborhood.
inline std::vector<double> sampling_distribution(const std::vector<double>& importance,
                                                 const std::vector<int>& neighborhood) {
  require(!neighborhood.empty(), ErrorCode::EmptyNeighborhood, "sampling over an empty neighborhood");
  std::vector<double> p(neighborhood.size());
  double total = 0.0;
  for (size_t k = 0; k < neighborhood.size(); ++k) {
    const int j = neighborhood[k];
    require(j >= 0 && j < static_cast<int>(importance.size()), ErrorCode::OutOfRangeNodeId,
            "neighborhood id outside importance vector");
    require(importance[j] > 0.0, ErrorCode::InvalidArgument, "importance weights must be positive");
    p[k] = importance[j];
    total += importance[j];
  }
  for (auto& x : p) x /= total;
  return p;
}

/// Draws min(alpha, |N(v,e)|) distinct neighbors without replacement,
/// sequentially renormalizing the selection weights. Deterministic given the
/// rng state; the result is returned sorted by node id.
inline std::vector<int> sample_condensed_neighborhood(const Hypergraph& h, int v, int e, int alpha,
                                                      const std::vector<double>& importance, Rng& rng) {
  require(alpha >= 1, ErrorCode::InvalidArgument, "alpha must be >= 1");
  std::vector<int> pool = intra_edge_neighborhood(h, v, e);
  const int want = std::min<int>(alpha, static_cast<int>(pool.size()));
  if (want == static_cast<int>(pool.size())) return pool;

  std::vector<double> w(pool.size());
  double total = 0.0;
  for (size_t k = 0; k < pool.size(); ++k) {
    require(importance[pool[k]] > 0.0, ErrorCode::InvalidArgument, "importance weights must be positive");
    w[k] = importance[pool[k]];
    total += w[k];
  }
  std::vector<int> chosen;
  chosen.reserve(want);
  for (int draw = 0; draw < want; ++draw) {
    double u = rng.uniform() * total;
    size_t pick = pool.size() - 1;
    double cum = 0.0;
    for (size_t k = 0; k < pool.size(); ++k) {
      if (w[k] <= 0.0) continue;
      cum += w[k];
      if (u < cum) {
        pick = k;
        break;
      }
    }
    chosen.push_back(pool[pick]);
    total -= w[pick];
    w[pick] = 0.0;
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

// ---------------------------------------------------------------------------
// Reference (non-differentiable) two-level aggregation
// ---------------------------------------------------------------------------

/// F1: generalized mean of {C_j * x_j : v_j in sample or N(v,e)}.
/// IntraEdge mode weights each member 1/|set|; GlobalMainText weights each
/// member 1/|N(v)|. An empty neighborhood aggregates to the zero vector.
inline std::vector<double> intra_edge_aggregate(const Hypergraph& h, const FeatureMatrix& x, int v, int e,
                                                const AggregationConfig& cfg,
                                                const std::vector<double>* importance = nullptr,
                                                const std::vector<int>* sample = nullptr) {
  cfg.validate();
  std::vector<int> members = intra_edge_neighborhood(h, v, e);
  if (sample) {
    for (int s : *sample)
      require(std::binary_search(members.begin(), members.end(), s), ErrorCode::NodeNotInEdge,
              "sampled node outside the intra-edge neighborhood");
    members = *sample;
  }
  if (members.empty()) return std::vector<double>(x.dim(), 0.0);

  MessageSet values;
  values.reserve(members.size());
  for (int j : members) {
    const double c = (cfg.adaptive && importance) ? (*importance)[j] : 1.0;
    std::vector<double> row(x.row(j), x.row(j) + x.dim());
    for (auto& t : row) t *= c;
    values.push_back(std::move(row));
  }
  const double wgt = cfg.normalization == NormalizationMode::IntraEdge
                         ? 1.0 / static_cast<double>(members.size())
                         : 1.0 / static_cast<double>(global_neighborhood(h, v).size());
  std::vector<double> weights(members.size(), wgt);
  return cfg.geometric ? geometric_mean(values, weights) : generalized_mean(values, weights, cfg.p);
}

/// F2: generalized mean of the per-edge messages with uniform weights
/// 1/|E(v_i)| and the same power as F1. An empty set (isolated node) yields
/// the zero vector so that z_i = x_i through the residual.
inline std::vector<double> inter_edge_aggregate(const MessageSet& per_edge_messages,
                                                const AggregationConfig& cfg, int dim) {
  cfg.validate();
  if (per_edge_messages.empty()) return std::vector<double>(dim, 0.0);
  std::vector<double> weights(per_edge_messages.size(), 1.0 / static_cast<double>(per_edge_messages.size()));
  return cfg.geometric ? geometric_mean(per_edge_messages, weights)
                       : generalized_mean(per_edge_messages, weights, cfg.p);
}

/// Full two-level aggregate at one node (reference path used by the oracles).
inline std::vector<double> two_level_aggregate(const Hypergraph& h, const FeatureMatrix& x, int v,
                                               const AggregationConfig& cfg,
                                               const std::vector<double>* importance = nullptr) {
  MessageSet s2;
  for (int e : h.node_to_edges[v]) s2.push_back(intra_edge_aggregate(h, x, v, e, cfg, importance));
  return inter_edge_aggregate(s2, cfg, x.dim());
}

// ---------------------------------------------------------------------------
// Aggregation plan + fused differentiable kernel
// ---------------------------------------------------------------------------

/// Evaluated neighbor structure for one forward pass: per node, one slice per
/// incident hyperedge with the (possibly sampled) member list. Sampling is
/// non-differentiable: the plan is fixed data from the kernel's viewpoint.
struct AggregationPlan {
  struct Slice {
    int edge = -1;
    std::vector<int> members;  // ascending node ids, target excluded
    double inv_norm = 0.0;     // intra-edge prefactor for this slice
  };
  struct NodeEntry {
    std::vector<Slice> slices;    // ascending edge id
    double inv_edge_count = 0.0;  // 1/|E(v)| from the structure
  };
  std::vector<NodeEntry> nodes;
};

namespace detail {

inline double slice_inv_norm(const Hypergraph& h, int v, size_t member_count, const AggregationConfig& cfg) {
  if (cfg.normalization == NormalizationMode::GlobalMainText)
    return 1.0 / static_cast<double>(h.neighbor_index[v].size());
  return 1.0 / static_cast<double>(member_count);
}

}  // namespace detail

/// Plan over full intra-edge neighborhoods (eval mode, and training without
/// a sample budget).
inline std::shared_ptr<const AggregationPlan> build_full_plan(const Hypergraph& h,
                                                              const AggregationConfig& cfg) {
  cfg.validate();
  auto plan = std::make_shared<AggregationPlan>();
  plan->nodes.resize(h.num_nodes);
  for (int v = 0; v < h.num_nodes; ++v) {
    auto& entry = plan->nodes[v];
    const auto& edges = h.node_to_edges[v];
    if (edges.empty()) continue;
    entry.inv_edge_count = 1.0 / static_cast<double>(edges.size());
    entry.slices.reserve(edges.size());
    for (int e : edges) {
      AggregationPlan::Slice s;
      s.edge = e;
      s.members = intra_edge_neighborhood(h, v, e);
      if (s.members.empty()) continue;
      s.inv_norm = detail::slice_inv_norm(h, v, s.members.size(), cfg);
      entry.slices.push_back(std::move(s));
    }
  }
  return plan;
}

/// Plan with per-(node, edge) condensed neighborhoods drawn from the current
/// importance weights. Streams are derived from (seed, layer, node, edge) so
/// reruns are identical.
inline std::shared_ptr<const AggregationPlan> build_sampled_plan(const Hypergraph& h,
                                                                 const AggregationConfig& cfg,
                                                                 const std::vector<double>& importance,
                                                                 uint64_t seed, uint64_t layer) {
  cfg.validate();
  if (!cfg.alpha) return build_full_plan(h, cfg);
  auto plan = std::make_shared<AggregationPlan>();
  plan->nodes.resize(h.num_nodes);
  for (int v = 0; v < h.num_nodes; ++v) {
    auto& entry = plan->nodes[v];
    const auto& edges = h.node_to_edges[v];
    if (edges.empty()) continue;
    entry.inv_edge_count = 1.0 / static_cast<double>(edges.size());
    entry.slices.reserve(edges.size());
    for (int e : edges) {
      Rng rng(derive_seed(seed, {layer, static_cast<uint64_t>(v), static_cast<uint64_t>(e)}));
      AggregationPlan::Slice s;
      s.edge = e;
      s.members = sample_condensed_neighborhood(h, v, e, *cfg.alpha, importance, rng);
      if (s.members.empty()) continue;
      s.inv_norm = detail::slice_inv_norm(h, v, s.members.size(), cfg);
      entry.slices.push_back(std::move(s));
    }
  }
  return plan;
}

/// Fused differentiable two-level aggregation: for every node, F2 over the
/// per-edge F1 aggregates of (optionally importance-weighted) feature rows.
///
/// Summands inside each slice are reduced in canonical value order, so the
/// output is exactly equivariant under node relabeling. Gradients flow into
/// the feature rows and, when `importance` is supplied, into the C_j factors;
/// plan construction (sampling) is outside the differentiable path.
inline Tensor hyper_aggregate(Tape& tape, const Tensor& feats, const Tensor& importance,
                              const std::shared_ptr<const AggregationPlan>& plan,
                              const AggregationConfig& cfg) {
  cfg.validate();
  const int n = feats.rows(), d = feats.cols();
  require(static_cast<size_t>(n) == plan->nodes.size(), ErrorCode::ShapeMismatch,
          "plan node count != feature rows");
  const bool adaptive = importance.defined();
  if (adaptive)
    require(importance.rows() == n && importance.cols() == 1, ErrorCode::ShapeMismatch,
            "importance must be an N x 1 column");

  const detail::MeanMap map = detail::MeanMap::from(cfg);
  const bool identity = map.identity();
  const bool raw_order = detail::canonical_order_disabled().load(std::memory_order_relaxed);

  // U = C ⊙ H rows (or H itself), T = pre(U).
  auto u_store = std::make_shared<std::vector<double>>();
  const std::vector<double>* u = &feats.value();
  if (adaptive) {
    u_store->resize(static_cast<size_t>(n) * d);
    for (int i = 0; i < n; ++i) {
      const double c = importance.value()[i];
      const double* src = feats.value().data() + static_cast<size_t>(i) * d;
      double* dst = u_store->data() + static_cast<size_t>(i) * d;
      for (int j = 0; j < d; ++j) dst[j] = c * src[j];
    }
    u = u_store.get();
  }
  auto t_store = std::make_shared<std::vector<double>>();
  const std::vector<double>* t = u;
  if (!identity) {
    t_store->resize(u->size());
    for (size_t i = 0; i < u->size(); ++i) (*t_store)[i] = map.pre((*u)[i]);
    t = t_store.get();
  }

  Tensor out = Tensor::zeros(n, d);
  auto& z = out.mutable_value();
  // Saved intermediates for the backward pass.
  auto b_store = std::make_shared<std::vector<double>>();  // pre-post inter-edge sums (power p != 1)
  auto m_store = std::make_shared<std::vector<double>>();  // per-slice messages (geometric only)
  if (!identity && !map.geometric) b_store->assign(static_cast<size_t>(n) * d, 0.0);
  if (map.geometric) {
    size_t total_slices = 0;
    for (const auto& node : plan->nodes) total_slices += node.slices.size();
    m_store->assign(total_slices * d, 0.0);
  }

  std::vector<double> acc(d), a_row(d);
  std::vector<int> order;
  size_t slice_cursor = 0;
  for (int i = 0; i < n; ++i) {
    const auto& entry = plan->nodes[i];
    if (entry.slices.empty()) continue;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (const auto& slice : entry.slices) {
      order.assign(slice.members.begin(), slice.members.end());
      if (!raw_order) std::sort(order.begin(), order.end(), detail::RowLexLess{t->data(), d});
      std::fill(a_row.begin(), a_row.end(), 0.0);
      for (int j : order) {
        const double* tj = t->data() + static_cast<size_t>(j) * d;
        for (int k = 0; k < d; ++k) a_row[k] += tj[k];
      }
      for (int k = 0; k < d; ++k) a_row[k] *= slice.inv_norm;
      if (identity) {
        for (int k = 0; k < d; ++k) acc[k] += a_row[k];
      } else {
        // message m_e = post(a); F2 accumulates pre(m_e)
        for (int k = 0; k < d; ++k) {
          const double m = map.post(a_row[k]);
          if (map.geometric) (*m_store)[slice_cursor * d + k] = m;
          acc[k] += map.pre(m);
        }
      }
      ++slice_cursor;
    }
    double* zi = z.data() + static_cast<size_t>(i) * d;
    for (int k = 0; k < d; ++k) {
      const double b = acc[k] * entry.inv_edge_count;
      if (!identity && !map.geometric) (*b_store)[static_cast<size_t>(i) * d + k] = b;
      zi[k] = identity ? b : map.post(b);
    }
  }
  detail::check_finite(out, "hyper_aggregate");

  tape.record([fn = feats.node(), cn = adaptive ? importance.node() : nullptr, on = out.node(), plan, map,
               identity, u_store, b_store, m_store, adaptive, n, d]() {
    const auto& gz = on->grad;
    if (gz.empty()) return;
    const std::vector<double>& uvals = adaptive ? *u_store : fn->value;
    std::vector<double> du(static_cast<size_t>(n) * d, 0.0);
    std::vector<double> da(d);
    size_t slice_cursor = 0;
    for (int i = 0; i < n; ++i) {
      const auto& entry = plan->nodes[i];
      if (entry.slices.empty()) continue;
      const double* gzi = gz.data() + static_cast<size_t>(i) * d;
      bool all_zero = true;
      for (int k = 0; k < d; ++k)
        if (gzi[k] != 0.0) {
          all_zero = false;
          break;
        }
      if (all_zero) {
        slice_cursor += entry.slices.size();
        continue;
      }
      // db = dz * post'(b); the pre/post round trip between the levels has
      // exact derivative 1 for the power map, so da = db * inv_edge_count.
      std::vector<double> db(d);
      for (int k = 0; k < d; ++k) {
        double pb = 1.0;
        if (!identity) {
          if (map.geometric)
            pb = on->value[static_cast<size_t>(i) * d + k];  // exp(b) = z
          else
            pb = map.post_grad((*b_store)[static_cast<size_t>(i) * d + k]);
        }
        db[k] = gzi[k] * pb * entry.inv_edge_count;
      }
      for (const auto& slice : entry.slices) {
        if (map.geometric) {
          const double* m = m_store->data() + slice_cursor * d;
          for (int k = 0; k < d; ++k) da[k] = db[k] * (m[k] / (m[k] + detail::kGeomEps));
        } else {
          for (int k = 0; k < d; ++k) da[k] = db[k];
        }
        for (int j : slice.members) {
          double* duj = du.data() + static_cast<size_t>(j) * d;
          const double* uj = uvals.data() + static_cast<size_t>(j) * d;
          for (int k = 0; k < d; ++k)
            duj[k] += da[k] * slice.inv_norm * (identity ? 1.0 : map.pre_grad(uj[k]));
        }
        ++slice_cursor;
      }
    }
    auto& dh = fn->accum_grad();
    if (adaptive) {
      auto& dc = cn->accum_grad();
      for (int j = 0; j < n; ++j) {
        const double c = cn->value[j];
        const double* duj = du.data() + static_cast<size_t>(j) * d;
        const double* hj = fn->value.data() + static_cast<size_t>(j) * d;
        double* dhj = dh.data() + static_cast<size_t>(j) * d;
        double dot = 0.0;
        for (int k = 0; k < d; ++k) {
          dhj[k] += duj[k] * c;
          dot += duj[k] * hj[k];
        }
        dc[j] += dot;
      }
    } else {
      for (size_t idx = 0; idx < du.size(); ++idx) dh[idx] += du[idx];
    }
  });
  return out;
}

}  // namespace hypermsg
