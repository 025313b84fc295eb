#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "hypermsg/adam.hpp"
#include "hypermsg/dataset.hpp"
#include "hypermsg/model.hpp"
#include "hypermsg/synth.hpp"

namespace hypermsg {

enum class TaskKind { MultiClassNode, BinaryNode, MultiLabelNode, HypergraphLevel };

inline const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::MultiClassNode: return "multiclass_node";
    case TaskKind::BinaryNode: return "binary_node";
    case TaskKind::MultiLabelNode: return "multilabel_node";
    case TaskKind::HypergraphLevel: return "hypergraph_level";
  }
  return "unknown";
}

struct TrainConfig {
  int epochs = 250;
  double lr = 0.01;
  double weight_decay = 0.0005;
  double dropout = 0.5;
  std::vector<int> hidden_sizes = {16};
  AggregationConfig agg;
  std::vector<uint64_t> seeds = {0};
  double train_ratio = 0.054;  // used when no masks are supplied
  double val_ratio = 0.0;
  std::optional<SplitMasks> masks;
  TaskKind task = TaskKind::MultiClassNode;
  Nonlinearity nonlinearity = Nonlinearity::ReLU;
  bool ablate_aggregation = false;  // W-only MLP baseline

  void validate() const {
    require(epochs >= 1, ErrorCode::InvalidArgument, "epochs must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, ErrorCode::InvalidArgument, "dropout must lie in [0,1)");
    require(!seeds.empty(), ErrorCode::InvalidArgument, "at least one seed required");
    if (!masks) {
      require(train_ratio > 0.0 && train_ratio < 1.0, ErrorCode::InvalidArgument,
              "train ratio must lie in (0,1)");
      require(val_ratio >= 0.0 && train_ratio + val_ratio < 1.0, ErrorCode::InvalidArgument,
              "train+val ratio must leave room for the test set");
    }
    agg.validate();
  }
};

struct MetricsReport {
  std::string task;
  std::string metric_name;
  std::vector<uint64_t> seeds;
  std::vector<double> values;  // one metric value per seed
  double mean = 0.0;
  double stddev = 0.0;
  double wall_clock_s = 0.0;
  std::vector<std::vector<double>> loss_curves;   // per seed, per epoch
  std::vector<std::vector<double>> val_accuracy;  // per seed, sampled every 10 epochs

  void finalize() {
    if (values.empty()) return;
    mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    stddev = std::sqrt(var / static_cast<double>(values.size()));
  }
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline double accuracy(const FeatureMatrix& scores, const std::vector<int>& labels,
                       const std::vector<int>& rows) {
  require(!rows.empty(), ErrorCode::InvalidArgument, "accuracy over an empty mask");
  int hits = 0;
  for (int i : rows) {
    const double* s = scores.row(i);
    int best = 0;
    for (int j = 1; j < scores.dim(); ++j)
      if (s[j] > s[best]) best = j;
    if (scores.dim() == 1) best = s[0] > 0.0 ? 1 : 0;  // single-logit binary scores
    if (best == labels[i]) hits++;
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

/// Rank-statistic AUC-ROC with midranks for ties (equivalent to the
/// trapezoidal curve over score thresholds).
inline double auc_roc(const std::vector<double>& score, const std::vector<char>& positive) {
  require(score.size() == positive.size() && !score.empty(), ErrorCode::SizeMismatch,
          "scores and labels disagree");
  size_t n_pos = 0;
  for (char p : positive) n_pos += p ? 1 : 0;
  const size_t n_neg = score.size() - n_pos;
  require(n_pos > 0 && n_neg > 0, ErrorCode::InvalidArgument, "AUC needs both classes present");

  std::vector<int> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return score[a] < score[b]; });
  std::vector<double> rank(score.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && score[order[j + 1]] == score[order[i]]) ++j;
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (size_t k = 0; k < score.size(); ++k)
    if (positive[k]) pos_rank_sum += rank[k];
  return (pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double average_precision(const std::vector<double>& score, const std::vector<char>& positive) {
  require(score.size() == positive.size() && !score.empty(), ErrorCode::SizeMismatch,
          "scores and labels disagree");
  size_t n_pos = 0;
  for (char p : positive) n_pos += p ? 1 : 0;
  require(n_pos > 0, ErrorCode::InvalidArgument, "AP needs at least one positive");
  std::vector<int> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  });
  double ap = 0.0;
  size_t seen_pos = 0;
  for (size_t k = 0; k < order.size(); ++k) {
    if (positive[order[k]]) {
      seen_pos++;
      ap += static_cast<double>(seen_pos) / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(n_pos);
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Task loss over the labeled rows: softmax cross-entropy for multi-class,
/// per-class logistic loss for binary / multi-label.
inline Tensor node_loss(Tape& tape, const Tensor& scores, const Labels& labels,
                        const std::vector<int>& rows, TaskKind task) {
  require(!rows.empty(), ErrorCode::NoLabeledNodes, "loss needs at least one labeled node");
  switch (task) {
    case TaskKind::MultiClassNode:
    case TaskKind::HypergraphLevel:
      return softmax_cross_entropy(tape, scores, labels.classes, rows);
    case TaskKind::BinaryNode: {
      require(scores.cols() == 1, ErrorCode::ShapeMismatch, "binary task expects one logit column");
      std::vector<double> targets(scores.value().size(), 0.0);
      for (int i : rows) {
        require(labels.classes[i] == 0 || labels.classes[i] == 1, ErrorCode::InvalidArgument,
                "binary labels must be 0/1");
        targets[static_cast<size_t>(i)] = static_cast<double>(labels.classes[i]);
      }
      return logistic_loss(tape, scores, targets, rows);
    }
    case TaskKind::MultiLabelNode:
      require(labels.has_matrix(), ErrorCode::InvalidArgument, "multi-label task needs a target matrix");
      return logistic_loss(tape, scores, labels.matrix, rows);
  }
  fail(ErrorCode::InvalidArgument, "unknown task");
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

namespace detail {

/// Largest-remainder allocation of `target` slots across classes, capped by
/// availability, with a floor of `min_per_class` where available.
inline std::vector<int> allocate_stratified(const std::vector<int>& avail, int target, int min_per_class) {
  const int k = static_cast<int>(avail.size());
  int total_avail = std::accumulate(avail.begin(), avail.end(), 0);
  require(target <= total_avail, ErrorCode::InsufficientLabels, "not enough labeled nodes for the split");
  std::vector<int> out(k, 0);
  int remaining = target;
  if (min_per_class > 0) {
    for (int c = 0; c < k; ++c) {
      const int take = std::min(min_per_class, avail[c]);
      require(avail[c] == 0 || remaining >= take, ErrorCode::InsufficientLabels,
              "not enough labeled nodes to give every class a train example");
      out[c] = take;
      remaining -= take;
    }
    require(remaining >= 0, ErrorCode::InsufficientLabels, "split smaller than the class count");
  }
  std::vector<std::pair<double, int>> frac;  // (remainder, class)
  for (int c = 0; c < k; ++c) {
    const double share =
        static_cast<double>(target) * static_cast<double>(avail[c]) / static_cast<double>(total_avail);
    int base = static_cast<int>(std::floor(share));
    base = std::max(base, out[c]);
    base = std::min(base, avail[c]);
    frac.emplace_back(share - std::floor(share), c);
    remaining -= base - out[c];
    out[c] = base;
  }
  std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  size_t idx = 0;
  while (remaining > 0) {
    const int c = frac[idx % frac.size()].second;
    if (out[c] < avail[c]) {
      out[c]++;
      remaining--;
    }
    idx++;
    require(idx < 4 * frac.size() + static_cast<size_t>(target) + 4, ErrorCode::InsufficientLabels,
            "stratified allocation failed");
  }
  while (remaining < 0) {  // floors overshot the target (tiny-class minimums)
    const int c = frac[idx % frac.size()].second;
    if (out[c] > ((min_per_class > 0) ? std::min(min_per_class, avail[c]) : 0)) {
      out[c]--;
      remaining++;
    }
    idx++;
    require(idx < 8 * frac.size() + static_cast<size_t>(target) + 8, ErrorCode::InsufficientLabels,
            "stratified allocation failed");
  }
  return out;
}

}  // namespace detail

/// Stratified random split of the labeled nodes: round(train_ratio * L)
/// train nodes (at least one per class), round(val_ratio * L) validation
/// nodes, remainder test. Deterministic in the seed.
inline SplitMasks make_splits(const std::vector<int>& labels, double train_ratio, double val_ratio,
                              uint64_t seed) {
  std::vector<int> labeled;
  int num_classes = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) {
      labeled.push_back(static_cast<int>(i));
      num_classes = std::max(num_classes, labels[i] + 1);
    }
  require(!labeled.empty(), ErrorCode::NoLabeledNodes, "dataset has no labeled nodes");
  const int total = static_cast<int>(labeled.size());
  const int train_target = static_cast<int>(std::lround(train_ratio * total));
  const int val_target = static_cast<int>(std::lround(val_ratio * total));
  require(train_target >= 1, ErrorCode::InsufficientLabels, "train ratio selects zero nodes");
  require(train_target + val_target < total, ErrorCode::InsufficientLabels,
          "no labeled nodes left for the test set");

  std::vector<std::vector<int>> by_class(num_classes);
  for (int i : labeled) by_class[labels[i]].push_back(i);
  Rng rng(derive_seed(seed, {0x5417}));
  for (auto& bucket : by_class) rng.shuffle(bucket);

  std::vector<int> avail(num_classes);
  for (int c = 0; c < num_classes; ++c) avail[c] = static_cast<int>(by_class[c].size());
  const std::vector<int> train_take = detail::allocate_stratified(avail, train_target, 1);
  std::vector<int> avail_after(num_classes);
  for (int c = 0; c < num_classes; ++c) avail_after[c] = avail[c] - train_take[c];
  const std::vector<int> val_take = detail::allocate_stratified(avail_after, val_target, 0);

  SplitMasks m;
  for (int c = 0; c < num_classes; ++c) {
    const auto& bucket = by_class[c];
    int pos = 0;
    for (int k = 0; k < train_take[c]; ++k) m.train.push_back(bucket[pos++]);
    for (int k = 0; k < val_take[c]; ++k) m.val.push_back(bucket[pos++]);
    for (; pos < static_cast<int>(bucket.size()); ++pos) m.test.push_back(bucket[pos]);
  }
  std::sort(m.train.begin(), m.train.end());
  std::sort(m.val.begin(), m.val.end());
  std::sort(m.test.begin(), m.test.end());
  return m;
}

/// The 1:3:1 inductive protocol: test nodes are unseen and removed from the
/// training hypergraph (hyperedges shrunk; edges falling below size 2
/// dropped). Unlabeled nodes count as seen structure.
struct InductiveSplit {
  SplitMasks masks;                  // full-graph node ids; test = unseen
  Hypergraph h_train;                // compacted to the kept (seen) nodes
  std::vector<int> kept_nodes;       // compact id -> full id (ascending)
  std::vector<int> full_to_compact;  // -1 for unseen nodes
  SplitMasks compact_masks;          // train/val in compact ids
};

inline InductiveSplit inductive_split(const Hypergraph& h, const std::vector<int>& labels, uint64_t seed) {
  require(static_cast<int>(labels.size()) == h.num_nodes, ErrorCode::SizeMismatch,
          "labels length != node count");
  InductiveSplit split;
  split.masks = make_splits(labels, 0.2, 0.6, seed);

  std::vector<char> unseen(h.num_nodes, 0);
  for (int v : split.masks.test) unseen[v] = 1;
  split.full_to_compact.assign(h.num_nodes, -1);
  for (int v = 0; v < h.num_nodes; ++v) {
    if (unseen[v]) continue;
    split.full_to_compact[v] = static_cast<int>(split.kept_nodes.size());
    split.kept_nodes.push_back(v);
  }

  std::vector<std::vector<int>> edges;
  for (const auto& e : h.hyperedges) {
    std::vector<int> kept;
    for (int v : e)
      if (!unseen[v]) kept.push_back(split.full_to_compact[v]);
    if (kept.size() >= 2) edges.push_back(std::move(kept));
  }
  split.h_train = build_hypergraph(static_cast<int>(split.kept_nodes.size()), edges);

  for (int v : split.masks.train) split.compact_masks.train.push_back(split.full_to_compact[v]);
  for (int v : split.masks.val) split.compact_masks.val.push_back(split.full_to_compact[v]);
  std::sort(split.compact_masks.train.begin(), split.compact_masks.train.end());
  std::sort(split.compact_masks.val.begin(), split.compact_masks.val.end());
  return split;
}

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

namespace detail {

inline int output_dim_for(const Labels& labels, TaskKind task) {
  switch (task) {
    case TaskKind::BinaryNode: return 1;
    case TaskKind::MultiLabelNode: return labels.inferred_num_classes();
    default: return std::max(labels.inferred_num_classes(), 2);
  }
}

inline double metric_value(const FeatureMatrix& scores, const Labels& labels, const std::vector<int>& rows,
                           TaskKind task) {
  switch (task) {
    case TaskKind::MultiClassNode:
    case TaskKind::HypergraphLevel:
      return accuracy(scores, labels.classes, rows);
    case TaskKind::BinaryNode: {
      std::vector<double> s;
      std::vector<char> pos;
      for (int i : rows) {
        s.push_back(scores.row(i)[0]);
        pos.push_back(labels.classes[i] == 1 ? 1 : 0);
      }
      return auc_roc(s, pos);
    }
    case TaskKind::MultiLabelNode: {
      const int k = labels.inferred_num_classes();
      double sum = 0.0;
      int counted = 0;
      for (int c = 0; c < k; ++c) {
        std::vector<double> s;
        std::vector<char> pos;
        int positives = 0;
        for (int i : rows) {
          s.push_back(scores.row(i)[c]);
          const char t = labels.matrix[static_cast<size_t>(i) * k + c] > 0.5 ? 1 : 0;
          positives += t;
          pos.push_back(t);
        }
        if (positives == 0) continue;  // macro-average over classes with support
        sum += average_precision(s, pos);
        counted++;
      }
      require(counted > 0, ErrorCode::InvalidArgument, "no class has positive labels");
      return sum / counted;
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown task");
}

inline const char* metric_name_for(TaskKind task) {
  switch (task) {
    case TaskKind::BinaryNode: return "auc_roc";
    case TaskKind::MultiLabelNode: return "average_precision";
    default: return "accuracy";
  }
}

}  // namespace detail

/// Eval-mode metrics on the test mask.
inline MetricsReport evaluate(const ModelParams& params, const Hypergraph& h, const FeatureMatrix& x,
                              const SplitMasks& masks, const Labels& labels, TaskKind task,
                              const AggregationConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  FeatureMatrix scores = forward(h, x, params, cfg, ForwardMode::eval());
  MetricsReport rep;
  rep.task = task_name(task);
  rep.metric_name = detail::metric_name_for(task);
  rep.values.push_back(detail::metric_value(scores, labels, masks.test, task));
  rep.finalize();
  rep.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

struct TrainResult {
  ModelParams params;  // parameters trained with the first seed
  MetricsReport report;
  std::vector<SplitMasks> seed_masks;  // resolved split per seed
};

/// Semi-supervised training: per epoch, one training-mode forward with a
/// fresh sample stream, loss on the train mask, backward, Adam step. Fully
/// deterministic given (seed, config, data).
///
/// HypergraphLevel treats (h, x) as a single sample labeled by
/// labels.classes[0]: the layer stack ends at the last hidden width, node
/// embeddings are mean-pooled, and a dense head maps the pooled vector to
/// class scores.
inline TrainResult train_model(const Hypergraph& h, const FeatureMatrix& x, const Labels& labels,
                               const TrainConfig& cfg) {
  cfg.validate();
  require(x.rows() == h.num_nodes, ErrorCode::SizeMismatch, "feature rows != node count");
  const bool graph_level = cfg.task == TaskKind::HypergraphLevel;
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult result;
  result.report.task = task_name(cfg.task);
  result.report.metric_name = detail::metric_name_for(cfg.task);
  result.report.seeds = cfg.seeds;

  for (size_t si = 0; si < cfg.seeds.size(); ++si) {
    const uint64_t seed = cfg.seeds[si];
    SplitMasks masks;
    if (!graph_level)
      masks = cfg.masks ? *cfg.masks : make_splits(labels.classes, cfg.train_ratio, cfg.val_ratio, seed);
    if (!graph_level)
      require(!masks.train.empty(), ErrorCode::NoLabeledNodes, "empty train mask");
    else
      require(!labels.classes.empty() && labels.classes[0] >= 0, ErrorCode::NoLabeledNodes,
              "hypergraph-level training needs a label in classes[0]");

    const int out_dim = detail::output_dim_for(labels, cfg.task);
    std::vector<int> dims;
    dims.push_back(x.dim());
    for (int hdim : cfg.hidden_sizes) dims.push_back(hdim);
    if (!graph_level) dims.push_back(out_dim);

    Rng init_rng(derive_seed(seed, {0x1217}));
    ModelParams params =
        ModelParams::init(dims, cfg.agg.adaptive, cfg.dropout, init_rng, cfg.nonlinearity);
    if (graph_level) params.readout_head = glorot_uniform(dims.back(), out_dim, init_rng);
    std::vector<Tensor> trainable = params.trainable();
    AdamState opt;
    opt.lr = cfg.lr;
    opt.weight_decay = cfg.weight_decay;

    Labels graph_label;
    if (graph_level) graph_label.classes = {labels.classes[0]};

    Tensor xt = Tensor::from(x);
    std::vector<double> losses;
    std::vector<double> val_log;
    losses.reserve(cfg.epochs);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      Tape tape;
      ForwardMode mode;
      mode.training = true;
      mode.seed = derive_seed(seed, {0xe90c, static_cast<uint64_t>(epoch)});
      mode.ablate_aggregation = cfg.ablate_aggregation;
      Tensor z = forward_t(tape, h, xt, params, cfg.agg, mode);
      Tensor loss;
      if (graph_level) {
        Tensor scores = matmul(tape, mean_rows(tape, z), params.readout_head);
        loss = node_loss(tape, scores, graph_label, {0}, cfg.task);
      } else {
        loss = node_loss(tape, z, labels, masks.train, cfg.task);
      }
      losses.push_back(loss.scalar());
      tape.backward(loss);
      adam_step(trainable, opt);

      if (!graph_level && !masks.val.empty() && (epoch % 10 == 9 || epoch + 1 == cfg.epochs)) {
        ForwardMode ev = ForwardMode::eval();
        ev.ablate_aggregation = cfg.ablate_aggregation;
        FeatureMatrix vs = forward(h, x, params, cfg.agg, ev);
        val_log.push_back(detail::metric_value(vs, labels, masks.val, cfg.task));
      }
    }

    ForwardMode ev = ForwardMode::eval();
    ev.ablate_aggregation = cfg.ablate_aggregation;
    if (graph_level) {
      Tape tape(false);
      Tensor z = forward_t(tape, h, xt, params, cfg.agg, ev);
      Tensor scores = matmul(tape, mean_rows(tape, z), params.readout_head);
      result.report.values.push_back(
          detail::metric_value(scores.to_matrix(), graph_label, {0}, cfg.task));
    } else {
      FeatureMatrix scores = forward(h, x, params, cfg.agg, ev);
      result.report.values.push_back(detail::metric_value(scores, labels, masks.test, cfg.task));
    }
    result.report.loss_curves.push_back(std::move(losses));
    result.report.val_accuracy.push_back(std::move(val_log));
    result.seed_masks.push_back(std::move(masks));
    if (si == 0) result.params = params;
  }
  result.report.finalize();
  result.report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---------------------------------------------------------------------------
// Runtime scaling probe
// ---------------------------------------------------------------------------

struct ScalingPoint {
  int nodes = 0;
  int64_t total_incidence = 0;  // N = sum of |e|
  double seconds_per_epoch = 0.0;
};

struct ScalingReport {
  std::vector<ScalingPoint> points;
  double loglog_slope = 0.0;
};

/// Wall-clock per training epoch against N = sum |e| on synthetic k-uniform
/// hypergraphs; reports the log-log regression slope.
inline ScalingReport runtime_scaling_probe(const std::vector<int>& node_counts, int k = 6,
                                           int feature_dim = 96, int hidden = 16, int epochs = 8,
                                           int repeats = 3, uint64_t seed = 0) {
  require(node_counts.size() >= 4, ErrorCode::InvalidArgument, "need >= 4 sizes");
  ScalingReport rep;
  for (int nodes : node_counts) {
    Dataset ds = random_kuniform(nodes, nodes, k, feature_dim, seed);
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.hidden_sizes = {hidden};
    cfg.dropout = 0.5;
    cfg.train_ratio = 0.5;
    cfg.seeds = {seed};
    cfg.task = TaskKind::MultiClassNode;

    SplitMasks masks = make_splits(ds.labels.classes, cfg.train_ratio, 0.0, seed);
    std::vector<int> dims = {feature_dim, hidden, 2};
    double best = 1e300;
    for (int rep_i = 0; rep_i < repeats; ++rep_i) {
      Rng init_rng(derive_seed(seed, {0x1217, static_cast<uint64_t>(rep_i)}));
      ModelParams params = ModelParams::init(dims, false, cfg.dropout, init_rng);
      std::vector<Tensor> trainable = params.trainable();
      AdamState opt;
      Tensor xt = Tensor::from(ds.x);
      auto run_epoch = [&](uint64_t tag) {
        Tape tape;
        ForwardMode mode = ForwardMode::train(derive_seed(seed, {0xabc, tag}));
        Tensor scores = forward_t(tape, ds.h, xt, params, cfg.agg, mode);
        Tensor loss = node_loss(tape, scores, ds.labels, masks.train, cfg.task);
        tape.backward(loss);
        adam_step(trainable, opt);
      };
      run_epoch(0);  // warmup
      const auto t0 = std::chrono::steady_clock::now();
      for (int e = 0; e < epochs; ++e) run_epoch(static_cast<uint64_t>(e + 1));
      const double per_epoch =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / epochs;
      best = std::min(best, per_epoch);
    }
    rep.points.push_back({nodes, ds.h.total_incidence(), best});
  }

  const auto& pts = rep.points;
  require(pts.back().total_incidence >= 8 * pts.front().total_incidence, ErrorCode::InvalidArgument,
          "sizes must span at least 8x in N");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(pts.size());
  for (const auto& p : pts) {
    const double lx = std::log(static_cast<double>(p.total_incidence));
    const double ly = std::log(p.seconds_per_epoch);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  rep.loglog_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return rep;
}

}  // namespace hypermsg
