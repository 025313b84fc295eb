#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hypermsg/gradcheck.hpp"
#include "hypermsg/model.hpp"
#include "hypermsg/synth.hpp"
#include "hypermsg/train.hpp"

using namespace hypermsg;

namespace {

ModelParams small_model(int in, int hidden, int out, bool adaptive, uint64_t seed, double dropout = 0.0) {
  Rng rng(seed);
  return ModelParams::init({in, hidden, out}, adaptive, dropout, rng);
}

}  // namespace

TEST_CASE("forward output shape matches (nodes x classes)") {
  // citation-scale dimensions: 2708 nodes, 1433 features, hidden 16, 7 classes
  Rng rng(1);
  Hypergraph h = random_hypergraph(2708, 1579, 2, 5, rng);
  FeatureMatrix x(2708, 1433);
  ModelParams params = small_model(1433, 16, 7, false, 3);
  AggregationConfig cfg;
  FeatureMatrix z = forward(h, x, params, cfg);
  CHECK(z.rows() == 2708);
  CHECK(z.dim() == 7);
}

TEST_CASE("zero features and zero weights give zero output") {
  Hypergraph h = build_hypergraph(4, {{0, 1, 2}, {1, 2, 3}});
  FeatureMatrix x(4, 3);
  ModelParams params;
  params.layer_weights = {Tensor::zeros(3, 5, true), Tensor::zeros(5, 2, true)};
  params.dropout_rate = 0.0;
  AggregationConfig cfg;
  FeatureMatrix z = forward(h, x, params, cfg);
  for (double v : z.raw()) CHECK(v == 0.0);
}

TEST_CASE("shape mismatches are rejected") {
  Hypergraph h = build_hypergraph(3, {{0, 1, 2}});
  ModelParams params = small_model(4, 8, 2, false, 5);
  AggregationConfig cfg;
  CHECK_THROWS_MATCHES(forward(h, FeatureMatrix(3, 7), params, cfg), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == ErrorCode::ShapeMismatch; }));
  CHECK_THROWS_MATCHES(forward(h, FeatureMatrix(2, 4), params, cfg), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == ErrorCode::ShapeMismatch; }));
}

TEST_CASE("eval mode is deterministic") {
  Rng rng(9);
  Hypergraph h = random_hypergraph(20, 10, 2, 5, rng);
  FeatureMatrix x = random_features(20, 6, rng);
  ModelParams params = small_model(6, 8, 3, true, 11, 0.5);
  AggregationConfig cfg;
  cfg.adaptive = true;
  FeatureMatrix a = forward(h, x, params, cfg);
  FeatureMatrix b = forward(h, x, params, cfg);
  CHECK(a.raw() == b.raw());
}

TEST_CASE("permuted input gives exactly permuted output") {
  Rng rng(13);
  Hypergraph h = random_hypergraph(18, 9, 2, 6, rng);
  FeatureMatrix x = random_features(18, 5, rng);
  for (bool adaptive : {false, true}) {
    ModelParams params = small_model(5, 8, 3, adaptive, 21);
    AggregationConfig cfg;
    cfg.adaptive = adaptive;
    FeatureMatrix base = forward(h, x, params, cfg);
    PermutationMap sigma = PermutationMap::random(18, rng);
    auto [hp, xp] = apply_permutation(h, x, sigma);
    FeatureMatrix permuted = forward(hp, xp, params, cfg);
    for (int i = 0; i < 18; ++i)
      for (int j = 0; j < 3; ++j) CHECK(permuted.row(sigma.perm[i])[j] == base.row(i)[j]);
  }
}

TEST_CASE("training mode with a covering sample budget equals eval mode exactly") {
  Rng rng(17);
  Hypergraph h = random_hypergraph(16, 8, 2, 6, rng);
  FeatureMatrix x = random_features(16, 5, rng);
  ModelParams params = small_model(5, 8, 3, false, 23, /*dropout=*/0.0);
  AggregationConfig cfg;
  cfg.alpha = 32;  // covers every intra-edge neighborhood
  ForwardMode train_mode = ForwardMode::train(99);
  FeatureMatrix trained = forward(h, x, params, cfg, train_mode);
  FeatureMatrix evaled = forward(h, x, params, cfg, ForwardMode::eval());
  CHECK(trained.raw() == evaled.raw());
}

TEST_CASE("residual guarantee: ablated aggregation reduces to a per-node MLP") {
  Rng rng(19);
  Hypergraph h = random_hypergraph(12, 6, 2, 5, rng);
  FeatureMatrix x = random_features(12, 4, rng);
  ModelParams params = small_model(4, 6, 2, false, 31);
  AggregationConfig cfg;
  ForwardMode mode = ForwardMode::eval();
  mode.ablate_aggregation = true;
  FeatureMatrix ablated = forward(h, x, params, cfg, mode);

  // same computation on a hypergraph with every node isolated never happens
  // (edges need >= 2 nodes), so spell the MLP out with tensor ops instead
  Tape tape(false);
  Tensor acts = Tensor::from(x);
  for (size_t l = 0; l < params.layer_weights.size(); ++l) {
    acts = matmul(tape, rowwise_l2_normalize(tape, acts), params.layer_weights[l]);
    if (l + 1 < params.layer_weights.size()) acts = relu(tape, acts);
  }
  CHECK(ablated.raw() == acts.value());
}

TEST_CASE("isolated nodes propagate their own features through the residual path") {
  // node 3 is isolated; its row must equal the ablated (MLP-only) row
  Hypergraph h = build_hypergraph(4, {{0, 1, 2}});
  Rng rng(37);
  FeatureMatrix x = random_features(4, 4, rng);
  ModelParams params = small_model(4, 6, 2, false, 41);
  AggregationConfig cfg;
  FeatureMatrix z = forward(h, x, params, cfg);
  ForwardMode ablated_mode = ForwardMode::eval();
  ablated_mode.ablate_aggregation = true;
  FeatureMatrix mlp = forward(h, x, params, cfg, ablated_mode);
  for (int j = 0; j < 2; ++j) CHECK(z.row(3)[j] == mlp.row(3)[j]);
}

TEST_CASE("predict_unseen") {
  Rng rng(43);
  // two isomorphic components with identical features: rows must coincide
  Hypergraph h_full = build_hypergraph(7, {{0, 1, 2}, {3, 4, 5}});
  FeatureMatrix x(7, 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double v = rng.normal();
      x.mutable_row(i)[j] = v;
      x.mutable_row(i + 3)[j] = v;
    }
  }
  Hypergraph h_train = build_hypergraph(7, {{0, 1, 2}});
  ModelParams params = small_model(3, 5, 2, false, 47);
  AggregationConfig cfg;

  SECTION("structurally identical unseen nodes score like their seen twins") {
    FeatureMatrix scores = predict_unseen(h_train, h_full, x, params, cfg, {3, 4, 5});
    FeatureMatrix full = forward(h_full, x, params, cfg);
    for (int r = 0; r < 3; ++r)
      for (int j = 0; j < 2; ++j) CHECK(scores.row(r)[j] == full.row(r)[j]);
  }
  SECTION("unseen isolated node is scored from its own features") {
    FeatureMatrix scores = predict_unseen(h_train, h_full, x, params, cfg, {6});
    ForwardMode ablated = ForwardMode::eval();
    ablated.ablate_aggregation = true;
    FeatureMatrix mlp = forward(h_full, x, params, cfg, ablated);
    for (int j = 0; j < 2; ++j) CHECK(scores.row(0)[j] == mlp.row(6)[j]);
  }
  SECTION("ids outside the full hypergraph are rejected") {
    CHECK_THROWS_MATCHES(predict_unseen(h_train, h_full, x, params, cfg, {7}), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == ErrorCode::UnknownNodeId; }));
  }
}

TEST_CASE("hypergraph readout") {
  SECTION("identical rows pool to that row") {
    FeatureMatrix z(3, 2);
    for (int i = 0; i < 3; ++i) {
      z.mutable_row(i)[0] = 1.5;
      z.mutable_row(i)[1] = -2.0;
    }
    CHECK(readout_hypergraph(z) == std::vector<double>{1.5, -2.0});
  }
  SECTION("two-row mean") {
    FeatureMatrix z(2, 2);
    z.mutable_row(0)[1] = 2.0;
    z.mutable_row(1)[0] = 2.0;
    CHECK(readout_hypergraph(z) == std::vector<double>{1.0, 1.0});
  }
  SECTION("permuting rows leaves the readout unchanged") {
    Rng rng(51);
    FeatureMatrix z = random_features(6, 3, rng);
    auto base = readout_hypergraph(z);
    std::vector<int> rows = {5, 2, 0, 4, 1, 3};
    FeatureMatrix shuffled = slice_features(z, rows);
    auto moved = readout_hypergraph(shuffled);
    for (int j = 0; j < 3; ++j) CHECK(moved[j] == Catch::Approx(base[j]).margin(1e-15));
  }
  SECTION("empty embedding is an error") {
    CHECK_THROWS_MATCHES(readout_hypergraph(FeatureMatrix(0, 3)), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == ErrorCode::EmptyEmbedding; }));
  }
}

TEST_CASE("full-model gradients match finite differences (8-node fixture)") {
  Rng rng(61);
  Hypergraph h = random_hypergraph(8, 4, 2, 5, rng);
  FeatureMatrix x = random_features(8, 5, rng);
  Labels labels;
  labels.classes = {0, 1, 2, 0, 1, 2, 0, 1};
  const std::vector<int> train_rows = {0, 1, 2, 3, 4, 5};

  for (bool adaptive : {false, true}) {
    Rng init(71);
    ModelParams params = ModelParams::init({5, 6, 3}, adaptive, /*dropout=*/0.0, init);
    AggregationConfig cfg;
    cfg.adaptive = adaptive;
    Tensor xt = Tensor::from(x);
    std::vector<Tensor> trainable = params.trainable();
    auto f = [&](Tape& t) {
      Tensor scores = forward_t(t, h, xt, params, cfg, ForwardMode::eval());
      return node_loss(t, scores, labels, train_rows, TaskKind::MultiClassNode);
    };
    auto rep = finite_diff_check(f, trainable, 1e-5, 1e-4);
    INFO((adaptive ? "adaptive" : "non-adaptive") << " max rel err " << rep.max_rel_err);
    CHECK(rep.pass);
  }
}
