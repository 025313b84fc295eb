#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hypermsg/errors.hpp"
#include "hypermsg/feature_matrix.hpp"
#include "hypermsg/rng.hpp"

namespace hypermsg {

/// When enabled, every primitive validates that its forward output is finite
/// and throws NonFiniteValue otherwise. Cheap at desk scale, on by default.
inline std::atomic<bool>& finite_checks() {
  static std::atomic<bool> enabled{true};
  return enabled;
}

namespace detail {

/// Sign-preserving power sgn(x)|x|^p. Defined for negative inputs so the
/// generalized mean stays total when a nonlinearity emits negatives.
inline double spow(double x, double p) {
  if (p == 1.0) return x;
  if (x == 0.0) return 0.0;
  return x < 0.0 ? -std::pow(-x, p) : std::pow(x, p);
}

/// d/dx spow(x, p) = p|x|^{p-1}; subgradient 0 at the p<1 pole.
inline double spow_grad(double x, double p) {
  if (p == 1.0) return 1.0;
  double a = std::abs(x);
  if (a < 1e-300) return 0.0;
  return p * std::pow(a, p - 1.0);
}

inline double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace detail

struct TensorNode {
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;

  size_t size() const { return value.size(); }
  std::vector<double>& accum_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

/// Value-semantic handle to a node in the computation graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    return Tensor(rows, cols, std::vector<double>(static_cast<size_t>(rows) * cols, 0.0), requires_grad);
  }
  static Tensor from(int rows, int cols, std::vector<double> data, bool requires_grad = false) {
    return Tensor(rows, cols, std::move(data), requires_grad);
  }
  static Tensor from(const FeatureMatrix& x) {
    Tensor t = zeros(x.rows(), x.dim());
    for (int i = 0; i < x.rows(); ++i) {
      const double* src = x.row(i);
      std::copy(src, src + x.dim(), t.node_->value.begin() + static_cast<size_t>(i) * x.dim());
    }
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  bool is_scalar() const { return node_->rows == 1 && node_->cols == 1; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& mutable_value() { return node_->value; }
  double at(int r, int c) const { return node_->value[static_cast<size_t>(r) * node_->cols + c]; }
  double scalar() const {
    require(is_scalar(), ErrorCode::NotScalarLoss, "tensor is not a scalar");
    return node_->value[0];
  }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const std::vector<double>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  std::shared_ptr<TensorNode> node() const { return node_; }

  FeatureMatrix to_matrix() const { return FeatureMatrix(rows(), cols(), node_->value); }

 private:
  Tensor(int rows, int cols, std::vector<double> data, bool requires_grad) : node_(std::make_shared<TensorNode>()) {
    require(data.size() == static_cast<size_t>(rows) * cols, ErrorCode::ShapeMismatch,
            "tensor data length != rows*cols");
    node_->rows = rows;
    node_->cols = cols;
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  std::shared_ptr<TensorNode> node_;
};

inline Tensor parameter(int rows, int cols, std::vector<double> data) {
  return Tensor::from(rows, cols, std::move(data), true);
}

/// Ordered record of primitive ops. Single-threaded per training step;
/// independent runs use independent tapes.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  void set_recording(bool r) { recording_ = r; }
  size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  void record(std::function<void()> backward_fn) {
    if (recording_) entries_.push_back(std::move(backward_fn));
  }

  /// Accumulates d(loss)/d(x) into every node reachable from the loss,
  /// then clears the tape.
  void backward(const Tensor& loss) {
    require(loss.is_scalar(), ErrorCode::NotScalarLoss, "backward needs a scalar loss");
    loss.node()->accum_grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
  }

 private:
  std::vector<std::function<void()>> entries_;
  bool recording_ = true;
};

namespace detail {

inline void check_finite(const Tensor& t, const char* op) {
  if (!finite_checks().load(std::memory_order_relaxed)) return;
  for (double v : t.value())
    require(std::isfinite(v), ErrorCode::NonFiniteValue, std::string("non-finite value produced by ") + op);
}

inline bool node_has_grad(const std::shared_ptr<TensorNode>& n) { return n->grad.size() == n->value.size(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), ErrorCode::ShapeMismatch, "matmul inner dimensions disagree");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros(m, n);
  const auto& av = a.value();
  const auto& bv = b.value();
  auto& ov = out.mutable_value();
  for (int i = 0; i < m; ++i) {
    const double* arow = av.data() + static_cast<size_t>(i) * k;
    double* orow = ov.data() + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      if (aik == 0.0) continue;
      const double* brow = bv.data() + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  detail::check_finite(out, "matmul");
  tape.record([an = a.node(), bn = b.node(), on = out.node(), m, k, n]() {
    const auto& g = on->grad;
    if (g.empty()) return;
    {
      auto& da = an->accum_grad();
      const auto& bv = bn->value;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double gij = g[static_cast<size_t>(i) * n + j];
          if (gij == 0.0) continue;
          for (int kk = 0; kk < k; ++kk)
            da[static_cast<size_t>(i) * k + kk] += gij * bv[static_cast<size_t>(kk) * n + j];
        }
    }
    {
      auto& db = bn->accum_grad();
      const auto& av = an->value;
      for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
          const double aik = av[static_cast<size_t>(i) * k + kk];
          if (aik == 0.0) continue;
          for (int j = 0; j < n; ++j)
            db[static_cast<size_t>(kk) * n + j] += aik * g[static_cast<size_t>(i) * n + j];
        }
    }
  });
  return out;
}

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::ShapeMismatch, "add shapes disagree");
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  auto& ov = out.mutable_value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = a.value()[i] + b.value()[i];
  detail::check_finite(out, "add");
  tape.record([an = a.node(), bn = b.node(), on = out.node()]() {
    const auto& g = on->grad;
    if (g.empty()) return;
    auto& da = an->accum_grad();
    auto& db = bn->accum_grad();
    for (size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i];
      db[i] += g[i];
    }
  });
  return out;
}

/// Broadcast add of a 1 x d row vector to every row of an n x d matrix.
inline Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& v) {
  require(v.rows() == 1 && v.cols() == a.cols(), ErrorCode::ShapeMismatch, "row vector shape disagrees");
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  auto& ov = out.mutable_value();
  const int d = a.cols();
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < d; ++j) ov[static_cast<size_t>(i) * d + j] = a.value()[static_cast<size_t>(i) * d + j] + v.value()[j];
  detail::check_finite(out, "add_rowvec");
  tape.record([an = a.node(), vn = v.node(), on = out.node(), d]() {
    const auto& g = on->grad;
    if (g.empty()) return;
    auto& da = an->accum_grad();
    auto& dv = vn->accum_grad();
    for (size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i];
      dv[i % d] += g[i];
    }
  });
  return out;
}

inline Tensor scale(Tape& tape, const Tensor& a, double alpha) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  auto& ov = out.mutable_value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = alpha * a.value()[i];
  detail::check_finite(out, "scale");
  tape.record([an = a.node(), on = out.node(), alpha]() {
    const auto& g = on->grad;
    if (g.empty()) return;
    auto& da = an->accum_grad();
    for (size_t i = 0; i < g.size(); ++i) da[i] += alpha * g[i];
  });
  return out;
}

inline Tensor relu(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  auto& ov = out.mutable_value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = a.value()[i] > 0.0 ? a.value()[i] : 0.0;
  tape.record([an = a.node(), on = out.node()]() {
    const auto& g = on->grad;
    if (g.empty()) return;
    auto& da = an->accum_grad();
    for (size_t i = 0; i < g.size(); ++i)
      if (an->value[i] > 0.0) da[i] += g[i];
  });
  return out;
}

inline Tensor tanh_op(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  auto& ov = out.mutable_value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(a.value()[i]);
  tape.record([on = out.node(), an = a.node()]() {
    const auto& g = on->grad;
    if (g.empty()) return;
    auto& da = an->accum_grad();
    for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (1.0 - on->value[i] * on->value[i]);
  });
  return out;
}

inline Tensor softplus(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  auto& ov = out.mutable_value();
  for (size_t i = 0; i < ov.size(); ++i) {
    const double x = a.value()[i];
    ov[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
  detail::check_finite(out, "softplus");
  tape.record([an = a.node(), on = out.node()]() {
    const auto& g = on->grad;
    if (g.empty()) return;
    auto& da = an->accum_grad();
    for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * detail::sigmoid(an->value[i]);
  });
  return out;
}

/// Inverted dropout: active only in training mode, kept activations are
/// scaled by 1/(1-rate) so eval needs no rescale.
inline Tensor dropout(Tape& tape, const Tensor& a, double rate, bool training, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, ErrorCode::InvalidArgument, "dropout rate must lie in [0,1)");
  if (!training || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.value().size());
  for (auto& m : *mask) m = (rng.uniform() >= rate) ? keep_scale : 0.0;
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  auto& ov = out.mutable_value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = a.value()[i] * (*mask)[i];
  tape.record([an = a.node(), on = out.node(), mask]() {
    const auto& g = on->grad;
    if (g.empty()) return;
    auto& da = an->accum_grad();
    for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (*mask)[i];
  });
  return out;
}

/// Scales every row to unit L2 norm. Rows with norm below 1e-12 pass
/// through unchanged and receive subgradient 0.
inline Tensor rowwise_l2_normalize(Tape& tape, const Tensor& a) {
  const int n = a.rows(), d = a.cols();
  Tensor out = Tensor::zeros(n, d);
  auto norms = std::make_shared<std::vector<double>>(n, 0.0);
  auto& ov = out.mutable_value();
  for (int i = 0; i < n; ++i) {
    const double* x = a.value().data() + static_cast<size_t>(i) * d;
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += x[j] * x[j];
    const double nrm = std::sqrt(s);
    (*norms)[i] = nrm;
    double* y = ov.data() + static_cast<size_t>(i) * d;
    if (nrm < 1e-12) {
      std::copy(x, x + d, y);
    } else {
      for (int j = 0; j < d; ++j) y[j] = x[j] / nrm;
    }
  }
  detail::check_finite(out, "rowwise_l2_normalize");
  tape.record([an = a.node(), on = out.node(), norms, n, d]() {
    const auto& g = on->grad;
    if (g.empty()) return;
    auto& da = an->accum_grad();
    for (int i = 0; i < n; ++i) {
      const double nrm = (*norms)[i];
      if (nrm < 1e-12) continue;
      const double* gi = g.data() + static_cast<size_t>(i) * d;
      const double* yi = on->value.data() + static_cast<size_t>(i) * d;
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += gi[j] * yi[j];
      double* di = da.data() + static_cast<size_t>(i) * d;
      for (int j = 0; j < d; ++j) di[j] += (gi[j] - dot * yi[j]) / nrm;
    }
  });
  return out;
}

/// Elementwise sign-preserving power sgn(x)|x|^p.
inline Tensor signed_pow(Tape& tape, const Tensor& a, double p) {
  require(p != 0.0, ErrorCode::ZeroPower, "signed_pow exponent must be nonzero");
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  auto& ov = out.mutable_value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = detail::spow(a.value()[i], p);
  detail::check_finite(out, "signed_pow");
  tape.record([an = a.node(), on = out.node(), p]() {
    const auto& g = on->grad;
    if (g.empty()) return;
    auto& da = an->accum_grad();
    for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * detail::spow_grad(an->value[i], p);
  });
  return out;
}

/// Column means: n x d -> 1 x d.
inline Tensor mean_rows(Tape& tape, const Tensor& a) {
  require(a.rows() > 0, ErrorCode::EmptyEmbedding, "mean_rows over zero rows");
  const int n = a.rows(), d = a.cols();
  Tensor out = Tensor::zeros(1, d);
  auto& ov = out.mutable_value();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) ov[j] += a.value()[static_cast<size_t>(i) * d + j];
  for (int j = 0; j < d; ++j) ov[j] /= n;
  detail::check_finite(out, "mean_rows");
  tape.record([an = a.node(), on = out.node(), n, d]() {
    const auto& g = on->grad;
    if (g.empty()) return;
    auto& da = an->accum_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) da[static_cast<size_t>(i) * d + j] += g[j] / n;
  });
  return out;
}

/// Mean softmax cross-entropy over the given rows of an n x k score matrix.
inline Tensor softmax_cross_entropy(Tape& tape, const Tensor& scores, const std::vector<int>& labels,
                                    const std::vector<int>& rows) {
  require(!rows.empty(), ErrorCode::InvalidArgument, "cross entropy needs at least one row");
  require(static_cast<int>(labels.size()) == scores.rows(), ErrorCode::SizeMismatch,
          "labels length != score rows");
  const int k = scores.cols();
  auto probs = std::make_shared<std::vector<double>>(rows.size() * static_cast<size_t>(k));
  double loss = 0.0;
  for (size_t r = 0; r < rows.size(); ++r) {
    const int i = rows[r];
    require(i >= 0 && i < scores.rows(), ErrorCode::OutOfRangeNodeId, "loss row out of range");
    const int y = labels[i];
    require(y >= 0 && y < k, ErrorCode::InvalidArgument, "label out of class range");
    const double* s = scores.value().data() + static_cast<size_t>(i) * k;
    double mx = s[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, s[j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(s[j] - mx);
    const double lse = std::log(z) + mx;
    loss += lse - s[y];
    double* p = probs->data() + r * k;
    for (int j = 0; j < k; ++j) p[j] = std::exp(s[j] - lse);
  }
  Tensor out = Tensor::from(1, 1, {loss / static_cast<double>(rows.size())});
  detail::check_finite(out, "softmax_cross_entropy");
  tape.record([sn = scores.node(), on = out.node(), probs, rows, labels, k]() {
    const auto& g = on->grad;
    if (g.empty()) return;
    auto& ds = sn->accum_grad();
    const double scale = g[0] / static_cast<double>(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
      const int i = rows[r];
      const double* p = probs->data() + r * k;
      double* d = ds.data() + static_cast<size_t>(i) * k;
      for (int j = 0; j < k; ++j) d[j] += scale * (p[j] - (j == labels[i] ? 1.0 : 0.0));
    }
  });
  return out;
}

/// Mean per-class logistic (sigmoid BCE) loss over the given rows; targets
/// is a dense 0/1 matrix shaped like scores.
inline Tensor logistic_loss(Tape& tape, const Tensor& scores, const std::vector<double>& targets,
                            const std::vector<int>& rows) {
  require(!rows.empty(), ErrorCode::InvalidArgument, "logistic loss needs at least one row");
  require(targets.size() == scores.value().size(), ErrorCode::SizeMismatch, "targets shape != scores shape");
  const int k = scores.cols();
  double loss = 0.0;
  for (int i : rows) {
    require(i >= 0 && i < scores.rows(), ErrorCode::OutOfRangeNodeId, "loss row out of range");
    for (int j = 0; j < k; ++j) {
      const size_t idx = static_cast<size_t>(i) * k + j;
      const double s = scores.value()[idx], t = targets[idx];
      loss += std::max(s, 0.0) - s * t + std::log1p(std::exp(-std::abs(s)));
    }
  }
  const double denom = static_cast<double>(rows.size()) * k;
  Tensor out = Tensor::from(1, 1, {loss / denom});
  detail::check_finite(out, "logistic_loss");
  tape.record([sn = scores.node(), on = out.node(), targets, rows, k, denom]() {
    const auto& g = on->grad;
    if (g.empty()) return;
    auto& ds = sn->accum_grad();
    const double scale = g[0] / denom;
    for (int i : rows)
      for (int j = 0; j < k; ++j) {
        const size_t idx = static_cast<size_t>(i) * k + j;
        ds[idx] += scale * (detail::sigmoid(sn->value[idx]) - targets[idx]);
      }
  });
  return out;
}

}  // namespace hypermsg
