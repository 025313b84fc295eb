#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypermsg/dataset.hpp"
#include "hypermsg/model.hpp"
#include "hypermsg/train.hpp"
#include "hypermsg/verify.hpp"

namespace hypermsg {

using json = nlohmann::json;

inline constexpr const char* kCheckpointMagic = "HYPERMSG-CKPT-1";

// ---------------------------------------------------------------------------
// Atomic file writes: invalid runs never leave partial output files.
// ---------------------------------------------------------------------------

inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");
    out << content;
    require(out.good(), ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorCode::IoError, "atomic rename failed for " + path.string());
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, "invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

// ---------------------------------------------------------------------------
// Canonical hypergraph dataset JSON
// ---------------------------------------------------------------------------

inline json dataset_to_json(const Dataset& ds) {
  json j;
  j["num_nodes"] = ds.h.num_nodes;
  j["hyperedges"] = ds.h.hyperedges;
  if (!ds.x.empty()) {
    json rows = json::array();
    for (int i = 0; i < ds.x.rows(); ++i) {
      const double* r = ds.x.row(i);
      rows.push_back(std::vector<double>(r, r + ds.x.dim()));
    }
    j["features"] = std::move(rows);
  }
  if (!ds.labels.classes.empty()) j["labels"] = ds.labels.classes;
  if (ds.masks) {
    j["masks"] = {{"train", ds.masks->train}, {"val", ds.masks->val}, {"test", ds.masks->test}};
  }
  return j;
}

inline Dataset dataset_from_json(const json& j) {
  require(j.is_object() && j.contains("num_nodes") && j.contains("hyperedges"), ErrorCode::IoError,
          "dataset JSON needs num_nodes and hyperedges");
  Dataset ds;
  const int n = j.at("num_nodes").get<int>();
  ds.h = build_hypergraph(n, j.at("hyperedges").get<std::vector<std::vector<int>>>());
  if (j.contains("features")) {
    const auto rows = j.at("features").get<std::vector<std::vector<double>>>();
    require(static_cast<int>(rows.size()) == n, ErrorCode::SizeMismatch, "feature rows != num_nodes");
    const int d = rows.empty() ? 0 : static_cast<int>(rows[0].size());
    ds.x = FeatureMatrix(n, d);
    for (int i = 0; i < n; ++i) {
      require(static_cast<int>(rows[i].size()) == d, ErrorCode::SizeMismatch, "ragged feature rows");
      std::copy(rows[i].begin(), rows[i].end(), ds.x.mutable_row(i));
    }
    require(ds.x.all_finite(), ErrorCode::NonFiniteValue, "features contain non-finite values");
  }
  if (j.contains("labels")) {
    ds.labels.classes = j.at("labels").get<std::vector<int>>();
    require(static_cast<int>(ds.labels.classes.size()) == n, ErrorCode::SizeMismatch,
            "labels length != num_nodes");
  }
  if (j.contains("masks")) {
    SplitMasks m;
    const auto& jm = j.at("masks");
    if (jm.contains("train")) m.train = jm.at("train").get<std::vector<int>>();
    if (jm.contains("val")) m.val = jm.at("val").get<std::vector<int>>();
    if (jm.contains("test")) m.test = jm.at("test").get<std::vector<int>>();
    ds.masks = std::move(m);
  }
  return ds;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  atomic_write_file(path, dataset_to_json(ds).dump(1) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorCode::IoError, "dataset not found: " + path.string());
  return dataset_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Enum <-> string helpers
// ---------------------------------------------------------------------------

inline std::string normalization_name(NormalizationMode m) {
  return m == NormalizationMode::IntraEdge ? "intra" : "global";
}
inline NormalizationMode normalization_from(const std::string& s) {
  if (s == "intra") return NormalizationMode::IntraEdge;
  if (s == "global") return NormalizationMode::GlobalMainText;
  fail(ErrorCode::InvalidArgument, "unknown normalization mode: " + s);
}

inline std::string nonlinearity_name(Nonlinearity a) {
  switch (a) {
    case Nonlinearity::ReLU: return "relu";
    case Nonlinearity::Tanh: return "tanh";
    case Nonlinearity::Identity: return "identity";
  }
  return "relu";
}
inline Nonlinearity nonlinearity_from(const std::string& s) {
  if (s == "relu") return Nonlinearity::ReLU;
  if (s == "tanh") return Nonlinearity::Tanh;
  if (s == "identity") return Nonlinearity::Identity;
  fail(ErrorCode::InvalidArgument, "unknown nonlinearity: " + s);
}

inline TaskKind task_from(const std::string& s) {
  if (s == "multiclass_node") return TaskKind::MultiClassNode;
  if (s == "binary_node") return TaskKind::BinaryNode;
  if (s == "multilabel_node") return TaskKind::MultiLabelNode;
  if (s == "hypergraph_level") return TaskKind::HypergraphLevel;
  fail(ErrorCode::InvalidArgument, "unknown task: " + s);
}

inline json aggregation_to_json(const AggregationConfig& cfg) {
  json j;
  j["p"] = cfg.p;
  j["geometric"] = cfg.geometric;
  j["alpha"] = cfg.alpha ? json(*cfg.alpha) : json(nullptr);
  j["normalization"] = normalization_name(cfg.normalization);
  j["adaptive"] = cfg.adaptive;
  return j;
}

inline AggregationConfig aggregation_from_json(const json& j) {
  AggregationConfig cfg;
  cfg.p = j.value("p", 1.0);
  cfg.geometric = j.value("geometric", false);
  if (j.contains("alpha") && !j.at("alpha").is_null()) cfg.alpha = j.at("alpha").get<int>();
  cfg.normalization = normalization_from(j.value("normalization", "intra"));
  cfg.adaptive = j.value("adaptive", false);
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Parameter checkpoints
// ---------------------------------------------------------------------------

struct CheckpointMeta {
  AggregationConfig agg;
  double dropout = 0.5;
  Nonlinearity nonlinearity = Nonlinearity::ReLU;
  TaskKind task = TaskKind::MultiClassNode;
  uint64_t seed = 0;
};

namespace detail {

inline json tensor_to_json(const Tensor& t) {
  return json{{"shape", {t.rows(), t.cols()}}, {"data", t.value()}};
}

inline Tensor tensor_from_json(const json& j, bool requires_grad) {
  const auto shape = j.at("shape").get<std::vector<int>>();
  require(shape.size() == 2, ErrorCode::IoError, "tensor shape must be 2-d");
  return Tensor::from(shape[0], shape[1], j.at("data").get<std::vector<double>>(), requires_grad);
}

}  // namespace detail

inline json checkpoint_to_json(const ModelParams& params, const CheckpointMeta& meta) {
  json p;
  for (int l = 0; l < params.num_layers(); ++l)
    p["W" + std::to_string(l + 1)] = detail::tensor_to_json(params.layer_weights[l]);
  if (params.importance_net.defined()) {
    p["importance.w1"] = detail::tensor_to_json(params.importance_net.w1);
    p["importance.b1"] = detail::tensor_to_json(params.importance_net.b1);
    p["importance.w2"] = detail::tensor_to_json(params.importance_net.w2);
    p["importance.b2"] = detail::tensor_to_json(params.importance_net.b2);
    p["importance.w3"] = detail::tensor_to_json(params.importance_net.w3);
    p["importance.b3"] = detail::tensor_to_json(params.importance_net.b3);
  }
  if (params.readout_head.defined()) p["readout_head"] = detail::tensor_to_json(params.readout_head);

  json j;
  j["magic"] = kCheckpointMagic;
  j["num_layers"] = params.num_layers();
  j["layer_dims"] = params.dims();
  j["hyper"] = {{"aggregation", aggregation_to_json(meta.agg)},
                {"dropout", meta.dropout},
                {"nonlinearity", nonlinearity_name(meta.nonlinearity)},
                {"task", task_name(meta.task)},
                {"seed", meta.seed}};
  j["params"] = std::move(p);
  return j;
}

inline std::pair<ModelParams, CheckpointMeta> checkpoint_from_json(const json& j) {
  require(j.is_object() && j.value("magic", "") == kCheckpointMagic, ErrorCode::IoError,
          std::string("not a ") + kCheckpointMagic + " checkpoint");
  CheckpointMeta meta;
  const auto& hyper = j.at("hyper");
  meta.agg = aggregation_from_json(hyper.at("aggregation"));
  meta.dropout = hyper.value("dropout", 0.5);
  meta.nonlinearity = nonlinearity_from(hyper.value("nonlinearity", "relu"));
  meta.task = task_from(hyper.value("task", "multiclass_node"));
  meta.seed = hyper.value("seed", 0ull);

  ModelParams params;
  params.dropout_rate = meta.dropout;
  params.nonlinearity = meta.nonlinearity;
  const int layers = j.at("num_layers").get<int>();
  const auto& p = j.at("params");
  for (int l = 0; l < layers; ++l)
    params.layer_weights.push_back(detail::tensor_from_json(p.at("W" + std::to_string(l + 1)), true));
  if (p.contains("importance.w1")) {
    params.importance_net.w1 = detail::tensor_from_json(p.at("importance.w1"), true);
    params.importance_net.b1 = detail::tensor_from_json(p.at("importance.b1"), true);
    params.importance_net.w2 = detail::tensor_from_json(p.at("importance.w2"), true);
    params.importance_net.b2 = detail::tensor_from_json(p.at("importance.b2"), true);
    params.importance_net.w3 = detail::tensor_from_json(p.at("importance.w3"), true);
    params.importance_net.b3 = detail::tensor_from_json(p.at("importance.b3"), true);
    params.importance_net.act = meta.nonlinearity;
  }
  if (p.contains("readout_head")) params.readout_head = detail::tensor_from_json(p.at("readout_head"), true);
  params.validate();
  return {std::move(params), meta};
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                            const CheckpointMeta& meta) {
  atomic_write_file(path, checkpoint_to_json(params, meta).dump(1) + "\n");
}

inline std::pair<ModelParams, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorCode::IoError, "checkpoint not found: " + path.string());
  return checkpoint_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline json metrics_to_json(const MetricsReport& rep) {
  json j;
  j["task"] = rep.task;
  j["seeds"] = rep.seeds;
  j["metric_name"] = rep.metric_name;
  j["values"] = rep.values;
  j["mean"] = rep.mean;
  j["std"] = rep.stddev;
  j["wall_clock_s"] = rep.wall_clock_s;
  if (!rep.loss_curves.empty()) j["loss_curves"] = rep.loss_curves;
  if (!rep.val_accuracy.empty()) j["val_accuracy"] = rep.val_accuracy;
  return j;
}

inline json oracle_to_json(const OracleReport& rep) {
  json j;
  j["name"] = rep.name;
  j["pass"] = rep.pass;
  j["asserted"] = rep.asserted;
  j["deviation"] = rep.deviation;
  j["tolerance"] = std::isfinite(rep.tolerance) ? json(rep.tolerance) : json(nullptr);
  j["trials"] = rep.trials;
  j["seed"] = rep.seed;
  if (!rep.note.empty()) j["note"] = rep.note;
  return j;
}

inline json scaling_to_json(const ScalingReport& rep) {
  json pts = json::array();
  for (const auto& p : rep.points)
    pts.push_back({{"nodes", p.nodes}, {"N", p.total_incidence}, {"seconds_per_epoch", p.seconds_per_epoch}});
  return json{{"points", std::move(pts)}, {"loglog_slope", rep.loglog_slope}};
}

}  // namespace hypermsg
