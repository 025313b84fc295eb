#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "hypermsg/errors.hpp"
#include "hypermsg/feature_matrix.hpp"
#include "hypermsg/rng.hpp"

namespace hypermsg {

/// Immutable after build; every transform returns a new value.
///
/// Hyperedges are stored as sorted unique node-id lists. node_to_edges and
/// neighbor_index are derived from hyperedges at build time and are never
/// mutated afterwards, so concurrent readers need no synchronization.
struct Hypergraph {
  int num_nodes = 0;
  std::vector<std::vector<int>> hyperedges;      // each sorted, unique ids
  std::vector<std::vector<int>> node_to_edges;   // E(v): ascending edge ids
  std::vector<std::vector<int>> neighbor_index;  // N(v): ascending node ids

  int num_edges() const { return static_cast<int>(hyperedges.size()); }

  /// Sum of hyperedge cardinalities (the N of the time-complexity claim).
  int64_t total_incidence() const {
    int64_t n = 0;
    for (const auto& e : hyperedges) n += static_cast<int64_t>(e.size());
    return n;
  }
};

namespace detail {

inline void rebuild_indexes(Hypergraph& h) {
  h.node_to_edges.assign(h.num_nodes, {});
  std::vector<std::vector<int>> nbrs(h.num_nodes);
  for (int e = 0; e < h.num_edges(); ++e) {
    for (int v : h.hyperedges[e]) {
      h.node_to_edges[v].push_back(e);
      for (int u : h.hyperedges[e])
        if (u != v) nbrs[v].push_back(u);
    }
  }
  h.neighbor_index.assign(h.num_nodes, {});
  for (int v = 0; v < h.num_nodes; ++v) {
    auto& n = nbrs[v];
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
    h.neighbor_index[v] = std::move(n);
  }
}

inline std::vector<int> normalize_edge(const std::vector<int>& edge, int num_nodes) {
  std::vector<int> e = edge;
  std::sort(e.begin(), e.end());
  for (size_t k = 0; k < e.size(); ++k) {
    require(e[k] >= 0 && e[k] < num_nodes, ErrorCode::OutOfRangeNodeId,
            "node id " + std::to_string(e[k]) + " outside [0," + std::to_string(num_nodes) + ")");
    if (k > 0)
      require(e[k] != e[k - 1], ErrorCode::DuplicateNodeInEdge,
              "node " + std::to_string(e[k]) + " repeated within a hyperedge");
  }
  require(e.size() >= 2, ErrorCode::SingletonEdge, "hyperedge must contain at least 2 nodes");
  return e;
}

}  // namespace detail

inline Hypergraph build_hypergraph(int num_nodes, const std::vector<std::vector<int>>& hyperedges) {
  require(num_nodes >= 0, ErrorCode::InvalidArgument, "negative node count");
  Hypergraph h;
  h.num_nodes = num_nodes;
  h.hyperedges.reserve(hyperedges.size());
  for (const auto& edge : hyperedges) h.hyperedges.push_back(detail::normalize_edge(edge, num_nodes));
  detail::rebuild_indexes(h);
  return h;
}

/// Members of hyperedge e excluding v itself. v's own contribution enters
/// the layer update separately through the residual term.
inline std::vector<int> intra_edge_neighborhood(const Hypergraph& h, int v, int e) {
  require(v >= 0 && v < h.num_nodes, ErrorCode::OutOfRangeNodeId, "node id out of range");
  require(e >= 0 && e < h.num_edges(), ErrorCode::OutOfRangeNodeId, "hyperedge id out of range");
  const auto& edge = h.hyperedges[e];
  require(std::binary_search(edge.begin(), edge.end(), v), ErrorCode::NodeNotInEdge,
          "node " + std::to_string(v) + " not a member of hyperedge " + std::to_string(e));
  std::vector<int> out;
  out.reserve(edge.size() - 1);
  for (int u : edge)
    if (u != v) out.push_back(u);
  return out;
}

inline const std::vector<int>& global_neighborhood(const Hypergraph& h, int v) {
  require(v >= 0 && v < h.num_nodes, ErrorCode::OutOfRangeNodeId, "node id out of range");
  return h.neighbor_index[v];
}

/// Order-insensitive equality at both levels: edges as sets, edge list as a multiset.
inline bool hypergraph_equal(const Hypergraph& a, const Hypergraph& b) {
  if (a.num_nodes != b.num_nodes || a.hyperedges.size() != b.hyperedges.size()) return false;
  auto ea = a.hyperedges;
  auto eb = b.hyperedges;
  std::sort(ea.begin(), ea.end());
  std::sort(eb.begin(), eb.end());
  return ea == eb;
}

// ---------------------------------------------------------------------------
// Permutation
// ---------------------------------------------------------------------------

struct PermutationMap {
  std::vector<int> perm;  // perm[i] = image of node i

  int size() const { return static_cast<int>(perm.size()); }

  void validate() const {
    std::vector<char> seen(perm.size(), 0);
    for (int p : perm) {
      require(p >= 0 && p < static_cast<int>(perm.size()), ErrorCode::OutOfRangeNodeId,
              "permutation image out of range");
      require(!seen[p], ErrorCode::InvalidArgument, "permutation is not a bijection");
      seen[p] = 1;
    }
  }

  PermutationMap inverse() const {
    PermutationMap inv;
    inv.perm.resize(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv.perm[perm[i]] = static_cast<int>(i);
    return inv;
  }

  static PermutationMap identity(int n) {
    PermutationMap p;
    p.perm.resize(n);
    for (int i = 0; i < n; ++i) p.perm[i] = i;
    return p;
  }

  static PermutationMap random(int n, Rng& rng) {
    PermutationMap p = identity(n);
    rng.shuffle(p.perm);
    return p;
  }
};

inline Hypergraph apply_permutation(const Hypergraph& h, const PermutationMap& sigma) {
  require(sigma.size() == h.num_nodes, ErrorCode::SizeMismatch, "permutation size != node count");
  sigma.validate();
  std::vector<std::vector<int>> edges;
  edges.reserve(h.hyperedges.size());
  for (const auto& e : h.hyperedges) {
    std::vector<int> mapped;
    mapped.reserve(e.size());
    for (int v : e) mapped.push_back(sigma.perm[v]);
    edges.push_back(std::move(mapped));
  }
  return build_hypergraph(h.num_nodes, edges);
}

inline std::pair<Hypergraph, FeatureMatrix> apply_permutation(const Hypergraph& h, const FeatureMatrix& x,
                                                              const PermutationMap& sigma) {
  require(x.rows() == h.num_nodes, ErrorCode::SizeMismatch, "feature rows != node count");
  Hypergraph hp = apply_permutation(h, sigma);
  FeatureMatrix xp(x.rows(), x.dim());
  for (int i = 0; i < x.rows(); ++i) {
    const double* src = x.row(i);
    double* dst = xp.mutable_row(sigma.perm[i]);
    std::copy(src, src + x.dim(), dst);
  }
  return {std::move(hp), std::move(xp)};
}

// ---------------------------------------------------------------------------
// Hyperedge splitting
// ---------------------------------------------------------------------------

/// Splits hyperedge `target_edge` into parts sharing only `pivot_node`.
/// Each part lists its members including the pivot.
struct SplitPlan {
  int target_edge = -1;
  int pivot_node = -1;
  std::vector<std::vector<int>> parts;
};

inline void validate_split_plan(const Hypergraph& h, const SplitPlan& plan) {
  require(plan.target_edge >= 0 && plan.target_edge < h.num_edges(), ErrorCode::InvalidSplitPlan,
          "target edge out of range");
  const auto& edge = h.hyperedges[plan.target_edge];
  require(std::binary_search(edge.begin(), edge.end(), plan.pivot_node), ErrorCode::InvalidSplitPlan,
          "pivot node not a member of the target edge");
  require(plan.parts.size() >= 2, ErrorCode::InvalidSplitPlan, "split needs r >= 2 parts");
  std::vector<int> covered;
  for (const auto& part : plan.parts) {
    bool has_pivot = false;
    for (int v : part) {
      if (v == plan.pivot_node) {
        has_pivot = true;
        continue;
      }
      require(std::binary_search(edge.begin(), edge.end(), v), ErrorCode::InvalidSplitPlan,
              "part member not in the target edge");
      covered.push_back(v);
    }
    require(has_pivot, ErrorCode::InvalidSplitPlan, "every part must contain the pivot");
    require(part.size() >= 2, ErrorCode::InvalidSplitPlan, "part smaller than 2 nodes");
  }
  std::sort(covered.begin(), covered.end());
  for (size_t k = 1; k < covered.size(); ++k)
    require(covered[k] != covered[k - 1], ErrorCode::InvalidSplitPlan,
            "parts share a non-pivot node");
  std::vector<int> expected;
  for (int v : edge)
    if (v != plan.pivot_node) expected.push_back(v);
  require(covered == expected, ErrorCode::InvalidSplitPlan,
          "parts do not partition the non-pivot members");
}

/// Removes the target edge and appends the parts. The pivot's global
/// neighborhood is unchanged by construction.
inline Hypergraph split_hyperedge(const Hypergraph& h, const SplitPlan& plan) {
  validate_split_plan(h, plan);
  std::vector<std::vector<int>> edges;
  edges.reserve(h.hyperedges.size() - 1 + plan.parts.size());
  for (int e = 0; e < h.num_edges(); ++e)
    if (e != plan.target_edge) edges.push_back(h.hyperedges[e]);
  for (const auto& part : plan.parts) edges.push_back(part);
  return build_hypergraph(h.num_nodes, edges);
}

// ---------------------------------------------------------------------------
// Clique expansion
// ---------------------------------------------------------------------------

/// Every pair of co-hyperedge nodes becomes one undirected edge (u < v),
/// deduplicated and sorted.
inline std::vector<std::pair<int, int>> clique_expansion(const Hypergraph& h) {
  std::vector<std::pair<int, int>> pairs;
  for (const auto& e : h.hyperedges)
    for (size_t a = 0; a < e.size(); ++a)
      for (size_t b = a + 1; b < e.size(); ++b) pairs.emplace_back(e[a], e[b]);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

// ---------------------------------------------------------------------------
// Connectedness statistics
// ---------------------------------------------------------------------------

struct ConnectednessStats {
  std::vector<int> nodes;       // nodes with >= 1 incident hyperedge
  std::vector<double> ratios;   // |N(v)| / |E(v)| aligned with `nodes`
  std::vector<int> isolated;    // nodes with no incident hyperedge (ratio undefined)
  std::vector<double> bin_edges;
  std::vector<int> bin_counts;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
};

inline ConnectednessStats connectedness_stats(const Hypergraph& h, int bins = 10) {
  require(bins >= 1, ErrorCode::InvalidArgument, "histogram needs >= 1 bin");
  ConnectednessStats s;
  for (int v = 0; v < h.num_nodes; ++v) {
    if (h.node_to_edges[v].empty()) {
      s.isolated.push_back(v);
      continue;
    }
    s.nodes.push_back(v);
    s.ratios.push_back(static_cast<double>(h.neighbor_index[v].size()) /
                       static_cast<double>(h.node_to_edges[v].size()));
  }
  if (s.ratios.empty()) return s;

  double lo = s.ratios[0], hi = s.ratios[0], sum = 0.0;
  for (double r : s.ratios) {
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    sum += r;
  }
  s.mean = sum / static_cast<double>(s.ratios.size());
  s.max = hi;
  std::vector<double> sorted = s.ratios;
  std::sort(sorted.begin(), sorted.end());
  size_t n = sorted.size();
  s.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  const double width = (hi > lo) ? (hi - lo) : 1.0;
  s.bin_edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) s.bin_edges[b] = lo + width * b / bins;
  s.bin_counts.assign(bins, 0);
  for (double r : s.ratios) {
    int b = static_cast<int>((r - lo) / width * bins);
    b = std::min(std::max(b, 0), bins - 1);
    s.bin_counts[b]++;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Fano plane fixtures
// ---------------------------------------------------------------------------

/// The 7-point Fano plane: 6 straight lines and 1 circle, every pair of
/// distinct nodes in exactly one hyperedge.
inline Hypergraph fano_plane_f1() {
  return build_hypergraph(7, {{0, 1, 5}, {0, 2, 3}, {0, 4, 6}, {1, 2, 4}, {1, 3, 6}, {2, 5, 6}, {3, 4, 5}});
}

/// Copy of F1 with nodes 1 and 2 transposed. Distinct hyperedge set,
/// identical clique expansion (K7).
inline Hypergraph fano_plane_f2() {
  PermutationMap swap12 = PermutationMap::identity(7);
  swap12.perm[1] = 2;
  swap12.perm[2] = 1;
  return apply_permutation(fano_plane_f1(), swap12);
}

}  // namespace hypermsg
