#pragma once

#include <optional>
#include <vector>

#include "hypermsg/feature_matrix.hpp"
#include "hypermsg/hypergraph.hpp"

namespace hypermsg {

/// Disjoint node-id masks over the labeled nodes.
struct SplitMasks {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

/// Node labels. `classes[i]` is the class of node i (-1 = unlabeled). For
/// multi-label tasks, `matrix` holds a dense N x num_classes 0/1 target
/// matrix and `classes` may be left empty.
struct Labels {
  std::vector<int> classes;
  std::vector<double> matrix;
  int num_classes = 0;

  bool has_matrix() const { return !matrix.empty(); }

  int inferred_num_classes() const {
    if (num_classes > 0) return num_classes;
    int k = 0;
    for (int c : classes) k = std::max(k, c + 1);
    return k;
  }
};

struct Dataset {
  Hypergraph h;
  FeatureMatrix x;
  Labels labels;
  std::optional<SplitMasks> masks;
};

inline FeatureMatrix slice_features(const FeatureMatrix& x, const std::vector<int>& rows) {
  FeatureMatrix out(static_cast<int>(rows.size()), x.dim());
  for (size_t r = 0; r < rows.size(); ++r) {
    const double* src = x.row(rows[r]);
    std::copy(src, src + x.dim(), out.mutable_row(static_cast<int>(r)));
  }
  return out;
}

}  // namespace hypermsg
