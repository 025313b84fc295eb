#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <unordered_set>
#include <vector>

#include "hypermsg/errors.hpp"

namespace hypermsg {

/// Counts reads of a watched set of rows. Used by the inductive-learning
/// tests to prove that training never touches unseen-node features.
struct RowAccessWatch {
  std::unordered_set<int> watched_rows;
  std::atomic<int64_t> hits{0};
};

/// Dense row-major real matrix; row i is the feature vector x_i.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(int rows, int dim) : rows_(rows), dim_(dim), data_(static_cast<size_t>(rows) * dim, 0.0) {
    require(rows >= 0 && dim >= 0, ErrorCode::InvalidArgument, "negative matrix shape");
  }
  FeatureMatrix(int rows, int dim, std::vector<double> data) : rows_(rows), dim_(dim), data_(std::move(data)) {
    require(data_.size() == static_cast<size_t>(rows) * dim, ErrorCode::SizeMismatch,
            "feature data length != rows*dim");
  }

  int rows() const { return rows_; }
  int dim() const { return dim_; }
  bool empty() const { return rows_ == 0; }

  const double* row(int i) const {
    require(i >= 0 && i < rows_, ErrorCode::OutOfRangeNodeId, "feature row out of range");
    if (watch_ && watch_->watched_rows.count(i)) watch_->hits.fetch_add(1, std::memory_order_relaxed);
    return data_.data() + static_cast<size_t>(i) * dim_;
  }
  double* mutable_row(int i) {
    require(i >= 0 && i < rows_, ErrorCode::OutOfRangeNodeId, "feature row out of range");
    return data_.data() + static_cast<size_t>(i) * dim_;
  }
  double at(int i, int j) const {
    require(j >= 0 && j < dim_, ErrorCode::OutOfRangeNodeId, "feature column out of range");
    return row(i)[j];
  }

  const std::vector<double>& raw() const { return data_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void set_watch(std::shared_ptr<RowAccessWatch> watch) { watch_ = std::move(watch); }

 private:
  int rows_ = 0;
  int dim_ = 0;
  std::vector<double> data_;
  std::shared_ptr<RowAccessWatch> watch_;
};

}  // namespace hypermsg
