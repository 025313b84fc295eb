#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "hypermsg/dataset.hpp"
#include "hypermsg/hypergraph.hpp"
#include "hypermsg/rng.hpp"

namespace hypermsg {

/// Structure-only random hypergraph with edge sizes in [min_size, max_size].
inline Hypergraph random_hypergraph(int nodes, int edges, int min_size, int max_size, Rng& rng) {
  require(min_size >= 2 && max_size >= min_size && max_size <= nodes, ErrorCode::InvalidArgument,
          "bad edge size range");
  std::vector<std::vector<int>> hyperedges;
  hyperedges.reserve(edges);
  std::vector<int> ids(nodes);
  for (int i = 0; i < nodes; ++i) ids[i] = i;
  for (int e = 0; e < edges; ++e) {
    const int size = min_size + static_cast<int>(rng.below(static_cast<uint64_t>(max_size - min_size + 1)));
    // partial Fisher-Yates: first `size` entries are a uniform sample
    for (int k = 0; k < size; ++k) {
      const int j = k + static_cast<int>(rng.below(static_cast<uint64_t>(nodes - k)));
      std::swap(ids[k], ids[j]);
    }
    hyperedges.emplace_back(ids.begin(), ids.begin() + size);
  }
  return build_hypergraph(nodes, hyperedges);
}

inline FeatureMatrix random_features(int nodes, int dim, Rng& rng) {
  FeatureMatrix x(nodes, dim);
  for (int i = 0; i < nodes; ++i) {
    double* r = x.mutable_row(i);
    for (int j = 0; j < dim; ++j) r[j] = rng.normal();
  }
  return x;
}

/// Random k-uniform hypergraph with Gaussian features and random binary
/// labels; the load generator for the runtime scaling probe.
inline Dataset random_kuniform(int nodes, int edges, int k, int feature_dim, uint64_t seed) {
  Rng rng(derive_seed(seed, {0x6b75}));
  Dataset ds;
  ds.h = random_hypergraph(nodes, edges, k, k, rng);
  ds.x = random_features(nodes, feature_dim, rng);
  ds.labels.classes.resize(nodes);
  for (int i = 0; i < nodes; ++i) ds.labels.classes[i] = static_cast<int>(rng.below(2));
  ds.labels.num_classes = 2;
  return ds;
}

/// Planted two-block classification hypergraph. Nodes split into two equal
/// communities; each block contributes `edges_per_block` hyperedges whose
/// member slots leak into the other block with probability `cross_noise`.
/// Features are weak per node (class mean `signal` along a random unit
/// direction plus unit Gaussian noise) so that neighborhood aggregation, not
/// the raw feature vector, carries most of the class signal.
struct PlantedConfig {
  int nodes = 200;
  int edges_per_block = 20;
  int edge_size = 12;
  double cross_noise = 0.1;
  int feature_dim = 16;
  double signal = 0.22;
  uint64_t seed = 0;
};

inline Dataset planted_two_block(const PlantedConfig& cfg) {
  require(cfg.nodes >= 4 && cfg.nodes % 2 == 0, ErrorCode::InvalidArgument, "nodes must be even and >= 4");
  require(cfg.edge_size >= 2 && cfg.edge_size <= cfg.nodes / 2, ErrorCode::InvalidArgument,
          "edge size must fit inside a block");
  Rng rng(derive_seed(cfg.seed, {0x9144}));
  const int half = cfg.nodes / 2;

  std::vector<std::vector<int>> edges;
  for (int block = 0; block < 2; ++block) {
    const int lo = block * half;
    std::vector<int> order(half);
    for (int i = 0; i < half; ++i) order[i] = lo + i;
    rng.shuffle(order);
    size_t cursor = 0;
    for (int e = 0; e < cfg.edges_per_block; ++e) {
      std::set<int> members;
      while (static_cast<int>(members.size()) < cfg.edge_size) {
        if (cursor == order.size()) {
          rng.shuffle(order);
          cursor = 0;
        }
        members.insert(order[cursor++]);  // cyclic dealing keeps every node covered
      }
      std::vector<int> edge(members.begin(), members.end());
      for (int& v : edge) {
        if (rng.uniform() < cfg.cross_noise) {
          const int other_lo = (1 - block) * half;
          const int candidate = other_lo + static_cast<int>(rng.below(static_cast<uint64_t>(half)));
          if (!members.count(candidate)) {
            members.erase(v);
            members.insert(candidate);
            v = candidate;
          }
        }
      }
      edges.emplace_back(edge);
    }
  }

  Dataset ds;
  ds.h = build_hypergraph(cfg.nodes, edges);

  std::vector<double> direction(cfg.feature_dim);
  double norm = 0.0;
  for (auto& d : direction) {
    d = rng.normal();
    norm += d * d;
  }
  norm = std::sqrt(norm);
  for (auto& d : direction) d /= norm;

  ds.x = FeatureMatrix(cfg.nodes, cfg.feature_dim);
  ds.labels.classes.resize(cfg.nodes);
  ds.labels.num_classes = 2;
  for (int i = 0; i < cfg.nodes; ++i) {
    const int label = i < half ? 0 : 1;
    ds.labels.classes[i] = label;
    const double sign = label == 0 ? 1.0 : -1.0;
    double* r = ds.x.mutable_row(i);
    for (int j = 0; j < cfg.feature_dim; ++j) r[j] = sign * cfg.signal * direction[j] + rng.normal();
  }
  return ds;
}

/// Fano plane fixture as a dataset: one-hot features, no labels.
inline Dataset fano_dataset(int which) {
  Dataset ds;
  ds.h = which == 2 ? fano_plane_f2() : fano_plane_f1();
  ds.x = FeatureMatrix(7, 7);
  for (int i = 0; i < 7; ++i) ds.x.mutable_row(i)[i] = 1.0;
  ds.labels.classes.assign(7, -1);
  return ds;
}

}  // namespace hypermsg
