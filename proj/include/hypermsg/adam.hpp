#pragma once

#include <cmath>
#include <vector>

#include "hypermsg/errors.hpp"
#include "hypermsg/tensor.hpp"

namespace hypermsg {

/// Adam with decoupled weight decay. Defaults follow the node-classification
/// training setup (lr 0.01, weight decay 0.0005).
struct AdamState {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0005;
  int64_t step = 0;
  std::vector<std::vector<double>> m;  // first moments, one block per parameter
  std::vector<std::vector<double>> v;  // second moments
};

/// One optimizer step over all parameters. Expects populated gradients
/// (throws MissingGradient otherwise); zeroes them afterwards.
inline void adam_step(std::vector<Tensor>& params, AdamState& st) {
  if (st.m.size() != params.size()) {
    st.m.assign(params.size(), {});
    st.v.assign(params.size(), {});
    for (size_t p = 0; p < params.size(); ++p) {
      st.m[p].assign(params[p].value().size(), 0.0);
      st.v[p].assign(params[p].value().size(), 0.0);
    }
  }
  for (const Tensor& p : params)
    require(p.has_grad(), ErrorCode::MissingGradient, "parameter has no gradient; run backward first");

  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (size_t p = 0; p < params.size(); ++p) {
    auto& theta = params[p].mutable_value();
    const auto& g = params[p].grad();
    auto& m = st.m[p];
    auto& v = st.v[p];
    for (size_t i = 0; i < theta.size(); ++i) {
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= st.lr * (mhat / (std::sqrt(vhat) + st.eps) + st.weight_decay * theta[i]);
    }
    params[p].zero_grad();
  }
}

}  // namespace hypermsg
