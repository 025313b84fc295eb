#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "hypermsg/aggregate.hpp"
#include "hypermsg/gradcheck.hpp"
#include "hypermsg/synth.hpp"

using namespace hypermsg;

namespace {

MessageSet scalars(std::initializer_list<double> xs) {
  MessageSet s;
  for (double x : xs) s.push_back({x});
  return s;
}

std::vector<double> uniform_weights(size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

Tensor random_tensor(int rows, int cols, Rng& rng, double lo, double hi, bool grad) {
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(rows, cols, std::move(v), grad);
}

}  // namespace

TEST_CASE("generalized mean: worked examples") {
  CHECK(generalized_mean(scalars({1, 2, 3}), uniform_weights(3), 1.0)[0] == Catch::Approx(2.0));
  CHECK(generalized_mean(scalars({3, 4}), uniform_weights(2), 2.0)[0] ==
        Catch::Approx(std::sqrt(12.5)));  // 3.53553...
  // large p approximates max pooling
  const double near_max = generalized_mean(scalars({1, 2, 3}), uniform_weights(3), 64.0)[0];
  CHECK(near_max == Catch::Approx(3.0).epsilon(0.02));
  CHECK(near_max < 3.0);
}

TEST_CASE("generalized mean: error paths") {
  CHECK_THROWS_MATCHES(generalized_mean({}, {}, 1.0), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::EmptySet;
                       }));
  CHECK_THROWS_MATCHES(generalized_mean(scalars({1}), uniform_weights(1), 0.0), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == ErrorCode::ZeroPower; }));
  CHECK_THROWS_MATCHES(generalized_mean(scalars({1, 2}), uniform_weights(3), 1.0), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == ErrorCode::SizeMismatch; }));
}

TEST_CASE("generalized mean: bounds, fixed point, monotonicity in p") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(6));
    MessageSet values;
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < n; ++i) {
      const double x = rng.uniform(0.0, 5.0);
      values.push_back({x});
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    double prev = -1e300;
    for (double p : {0.5, 1.0, 2.0, 4.0, 16.0}) {
      const double m = generalized_mean(values, uniform_weights(n), p)[0];
      CHECK(m >= lo - 1e-12);
      CHECK(m <= hi + 1e-12);
      CHECK(m >= prev - 1e-12);  // nondecreasing in p
      prev = m;
    }
  }

  SECTION("identical vectors are a fixed point for every p") {
    MessageSet values(4, std::vector<double>{2.5, -1.5, 0.25});
    for (double p : {0.5, 1.0, 2.0, 7.0}) {
      const auto m = generalized_mean(values, uniform_weights(4), p);
      for (int j = 0; j < 3; ++j) CHECK(m[j] == Catch::Approx(values[0][j]).margin(1e-12));
    }
  }
}

TEST_CASE("generalized mean is bit-exact under member shuffles") {
  Rng rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(5));
    MessageSet values;
    std::vector<double> weights;
    for (int i = 0; i < n; ++i) {
      values.push_back({rng.normal(), rng.normal(), rng.normal()});
      weights.push_back(rng.uniform(0.1, 1.0));
    }
    const auto base = generalized_mean(values, weights, 2.0);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    MessageSet shuffled;
    std::vector<double> shuffled_w;
    for (int i : order) {
      shuffled.push_back(values[i]);
      shuffled_w.push_back(weights[i]);
    }
    CHECK(generalized_mean(shuffled, shuffled_w, 2.0) == base);  // exact equality
  }
}

TEST_CASE("geometric mean limit mode") {
  const auto g = geometric_mean(scalars({1, 4}), uniform_weights(2));
  CHECK(g[0] == Catch::Approx(2.0).margin(1e-9));
  const auto fixed = geometric_mean(MessageSet(3, {1.5}), uniform_weights(3));
  CHECK(fixed[0] == Catch::Approx(1.5).margin(1e-9));
}

TEST_CASE("split_weight formula") {
  // no split: w collapses to 1
  Hypergraph h1 = build_hypergraph(4, {{0, 1, 2, 3}});
  CHECK(split_weight(h1, 0, 0, {0}) == Catch::Approx(1.0));

  // node in a split set of two edges with intra sizes n and n, original size n
  Hypergraph h2 = build_hypergraph(7, {{0, 1, 2, 3}, {0, 4, 5, 6}, {0, 1, 2, 3}});
  // |N(0,e0)| = 3, split set {e1, e2} with |N| = 3 each -> (1/3) / (2/3) = 1/2
  CHECK(split_weight(h2, 0, 0, {1, 2}) == Catch::Approx(0.5));

  // original |N| = 4, split into intra sizes 2 and 2 -> (1/4) / (1/2 + 1/2) = 1/4
  Hypergraph h3 = build_hypergraph(5, {{0, 1, 2, 3, 4}, {0, 1, 2}, {0, 3, 4}});
  CHECK(split_weight(h3, 0, 0, {1, 2}) == Catch::Approx(0.25));

  CHECK_THROWS_MATCHES(split_weight(h3, 1, 2, {1}), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::NodeNotInEdge;
                       }));
}

TEST_CASE("intra-edge aggregation") {
  Hypergraph h = build_hypergraph(4, {{0, 1, 2}, {0, 3}});
  FeatureMatrix x(4, 2);
  x.mutable_row(1)[0] = 1.0;
  x.mutable_row(1)[1] = 0.0;
  x.mutable_row(2)[0] = 3.0;
  x.mutable_row(2)[1] = 2.0;
  x.mutable_row(3)[0] = -5.0;
  AggregationConfig cfg;

  SECTION("single neighbor returns that neighbor's features for any p") {
    for (double p : {0.5, 1.0, 3.0}) {
      cfg.p = p;
      const auto m = intra_edge_aggregate(h, x, 0, 1, cfg);
      CHECK(m[0] == Catch::Approx(-5.0).margin(1e-12));
      CHECK(m[1] == Catch::Approx(0.0).margin(1e-12));
    }
  }
  SECTION("p=1 is the plain neighbor mean") {
    const auto m = intra_edge_aggregate(h, x, 0, 0, cfg);
    CHECK(m[0] == Catch::Approx(2.0));
    CHECK(m[1] == Catch::Approx(1.0));
  }
  SECTION("adaptive with all C equal scales the p=1 result") {
    std::vector<double> c(4, 2.5);
    cfg.adaptive = true;
    const auto m = intra_edge_aggregate(h, x, 0, 0, cfg, &c);
    CHECK(m[0] == Catch::Approx(5.0));
    CHECK(m[1] == Catch::Approx(2.5));
  }
  SECTION("explicit sample restricts the neighborhood") {
    std::vector<int> sample = {2};
    const auto m = intra_edge_aggregate(h, x, 0, 0, cfg, nullptr, &sample);
    CHECK(m[0] == Catch::Approx(3.0));
  }
  SECTION("sample outside the neighborhood is rejected") {
    std::vector<int> sample = {3};
    CHECK_THROWS_MATCHES(intra_edge_aggregate(h, x, 0, 0, cfg, nullptr, &sample), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == ErrorCode::NodeNotInEdge; }));
  }
  SECTION("empty sample aggregates to the zero vector") {
    std::vector<int> sample;
    const auto m = intra_edge_aggregate(h, x, 0, 0, cfg, nullptr, &sample);
    CHECK(m == std::vector<double>{0.0, 0.0});
  }
  SECTION("main-text normalization divides by |N(v)| instead") {
    cfg.normalization = NormalizationMode::GlobalMainText;
    // |N(0)| = 3; edge 0 contributes (x1 + x2) / 3
    const auto m = intra_edge_aggregate(h, x, 0, 0, cfg);
    CHECK(m[0] == Catch::Approx(4.0 / 3.0));
  }
}

TEST_CASE("inter-edge aggregation") {
  AggregationConfig cfg;
  SECTION("one hyperedge passes its message through") {
    const auto m = inter_edge_aggregate({{2.0, 0.5}}, cfg, 2);
    CHECK(m[0] == Catch::Approx(2.0));
    CHECK(m[1] == Catch::Approx(0.5));
  }
  SECTION("p=1 averages the messages") {
    const auto m = inter_edge_aggregate({{2.0, 0.0}, {0.0, 2.0}}, cfg, 2);
    CHECK(m == std::vector<double>{1.0, 1.0});
  }
  SECTION("empty set (isolated node) gives the zero vector") {
    CHECK(inter_edge_aggregate({}, cfg, 3) == std::vector<double>{0.0, 0.0, 0.0});
  }
}

TEST_CASE("importance network") {
  Rng rng(31);
  Hypergraph h = build_hypergraph(6, {{0, 1, 2, 3}, {0, 4}, {1, 4}});
  ImportanceNet net = ImportanceNet::init(rng);

  SECTION("fresh network emits finite positive weights") {
    const auto c = importance_forward(net, h);
    REQUIRE(c.size() == 6);
    for (double v : c) {
      CHECK(std::isfinite(v));
      CHECK(v > 0.0);
    }
  }
  SECTION("nodes with identical structure get identical weights") {
    const auto c = importance_forward(net, h);
    // nodes 2 and 3: both only in edge 0, |N| = 3, |E| = 1
    CHECK(c[2] == c[3]);
    // node 5 is isolated; weight exists and is positive but unused
    CHECK(c[5] > 0.0);
  }
  SECTION("gradients flow into the importance parameters") {
    std::vector<Tensor> params = net.params();
    Tensor feats = structural_features(h);
    auto f = [&](Tape& t) {
      Tensor c = importance_forward_t(t, net, feats);
      return matmul(t, mean_rows(t, c), Tensor::from(1, 1, {1.0}));
    };
    auto rep = finite_diff_check(f, params, 1e-6, 1e-6);
    INFO("max rel err " << rep.max_rel_err);
    CHECK(rep.pass);
  }
}

TEST_CASE("sampling distribution") {
  CHECK(sampling_distribution({1, 1, 2}, {0, 1, 2}) == std::vector<double>{0.25, 0.25, 0.5});
  CHECK(sampling_distribution({3, 3}, {0, 1}) == std::vector<double>{0.5, 0.5});
  CHECK_THROWS_MATCHES(sampling_distribution({1.0}, {}), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::EmptyNeighborhood;
                       }));
}

TEST_CASE("condensed neighborhood sampling") {
  Hypergraph h = build_hypergraph(5, {{0, 1, 2, 3, 4}});
  std::vector<double> uniform_c(5, 1.0);

  SECTION("alpha >= neighborhood size returns the full neighborhood") {
    Rng rng(1);
    CHECK(sample_condensed_neighborhood(h, 0, 0, 10, uniform_c, rng) == std::vector<int>{1, 2, 3, 4});
  }
  SECTION("same seed gives the same subset") {
    Rng a(77), b(77);
    CHECK(sample_condensed_neighborhood(h, 0, 0, 2, uniform_c, a) ==
          sample_condensed_neighborhood(h, 0, 0, 2, uniform_c, b));
  }
  SECTION("subsets are distinct ids inside the neighborhood") {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
      const auto s = sample_condensed_neighborhood(h, 0, 0, 3, uniform_c, rng);
      CHECK(s.size() == 3);
      CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
      for (int v : s) CHECK((v >= 1 && v <= 4));
    }
  }
  SECTION("empirical single-draw frequencies follow P") {
    std::vector<double> c = {1.0, 1.0, 1.0, 1.0, 1.0};
    c[1] = 1.0;
    c[2] = 1.0;
    c[3] = 2.0;  // node 3 twice as likely as the others? weights over {1,2,3,4}
    const int draws = 100000;
    std::vector<int> counts(5, 0);
    for (int t = 0; t < draws; ++t) {
      Rng rng(derive_seed(9, {static_cast<uint64_t>(t)}));
      counts[sample_condensed_neighborhood(h, 0, 0, 1, c, rng)[0]]++;
    }
    const double total_c = c[1] + c[2] + c[3] + c[4];
    double l1 = 0.0;
    for (int v = 1; v <= 4; ++v) l1 += std::abs(counts[v] / static_cast<double>(draws) - c[v] / total_c);
    CHECK(l1 < 0.01);
  }
  SECTION("concentrated importance pulls the dominant node with frequency near 1") {
    std::vector<double> c(5, 1e-3);
    c[2] = 1e3;
    int hits = 0;
    const int draws = 2000;
    for (int t = 0; t < draws; ++t) {
      Rng rng(derive_seed(11, {static_cast<uint64_t>(t)}));
      if (sample_condensed_neighborhood(h, 0, 0, 1, c, rng)[0] == 2) hits++;
    }
    CHECK(static_cast<double>(hits) / draws > 0.99);
  }
}

TEST_CASE("fused kernel matches the reference two-level aggregation") {
  Rng rng(101);
  for (int trial = 0; trial < 12; ++trial) {
    Hypergraph h = random_hypergraph(12, 6, 2, 5, rng);
    FeatureMatrix xm = random_features(12, 4, rng);
    for (double p : {1.0, 2.0, 3.0}) {
      for (NormalizationMode norm : {NormalizationMode::IntraEdge, NormalizationMode::GlobalMainText}) {
        for (bool adaptive : {false, true}) {
          AggregationConfig cfg;
          cfg.p = p;
          cfg.normalization = norm;
          cfg.adaptive = adaptive;
          std::vector<double> cvals(12);
          for (auto& c : cvals) c = rng.uniform(0.5, 2.0);

          Tape tape(false);
          Tensor c_t = Tensor::from(12, 1, cvals);
          Tensor agg = hyper_aggregate(tape, Tensor::from(xm), adaptive ? c_t : Tensor(),
                                       build_full_plan(h, cfg), cfg);
          for (int v = 0; v < 12; ++v) {
            const auto ref = two_level_aggregate(h, xm, v, cfg, adaptive ? &cvals : nullptr);
            for (int j = 0; j < 4; ++j)
              CHECK(agg.at(v, j) == Catch::Approx(ref[j]).margin(1e-11));
          }
        }
      }
    }
  }
}

TEST_CASE("fused kernel matches the geometric reference") {
  Rng rng(55);
  Hypergraph h = random_hypergraph(10, 5, 2, 4, rng);
  FeatureMatrix xm(10, 3);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 3; ++j) xm.mutable_row(i)[j] = rng.uniform(0.2, 3.0);
  AggregationConfig cfg;
  cfg.geometric = true;
  Tape tape(false);
  Tensor agg = hyper_aggregate(tape, Tensor::from(xm), Tensor(), build_full_plan(h, cfg), cfg);
  for (int v = 0; v < 10; ++v) {
    const auto ref = two_level_aggregate(h, xm, v, cfg);
    for (int j = 0; j < 3; ++j) CHECK(agg.at(v, j) == Catch::Approx(ref[j]).margin(1e-11));
  }
}

TEST_CASE("fused kernel gradients match finite differences") {
  Rng rng(202);
  Hypergraph h = random_hypergraph(8, 4, 2, 5, rng);
  Tensor mix = random_tensor(3, 2, rng, -1.0, 1.0, false);

  SECTION("non-adaptive, p = 1, signed features") {
    std::vector<Tensor> params = {random_tensor(8, 3, rng, -1.0, 1.0, true)};
    AggregationConfig cfg;
    auto plan = build_full_plan(h, cfg);
    auto f = [&](Tape& t) {
      Tensor agg = hyper_aggregate(t, params[0], Tensor(), plan, cfg);
      return matmul(t, mean_rows(t, matmul(t, agg, mix)), Tensor::from(2, 1, {1.0, 1.0}));
    };
    auto rep = finite_diff_check(f, params, 1e-6, 1e-6);
    INFO("max rel err " << rep.max_rel_err);
    CHECK(rep.pass);
  }
  SECTION("non-adaptive, p = 2, positive features") {
    std::vector<Tensor> params = {random_tensor(8, 3, rng, 0.5, 2.0, true)};
    AggregationConfig cfg;
    cfg.p = 2.0;
    auto plan = build_full_plan(h, cfg);
    auto f = [&](Tape& t) {
      Tensor agg = hyper_aggregate(t, params[0], Tensor(), plan, cfg);
      return matmul(t, mean_rows(t, matmul(t, agg, mix)), Tensor::from(2, 1, {1.0, 1.0}));
    };
    auto rep = finite_diff_check(f, params, 1e-6, 1e-5);
    INFO("max rel err " << rep.max_rel_err);
    CHECK(rep.pass);
  }
  SECTION("adaptive: gradients reach both features and importance") {
    std::vector<Tensor> params = {random_tensor(8, 3, rng, 0.5, 2.0, true),
                                  random_tensor(8, 1, rng, 0.5, 2.0, true)};
    AggregationConfig cfg;
    cfg.adaptive = true;
    auto plan = build_full_plan(h, cfg);
    auto f = [&](Tape& t) {
      Tensor agg = hyper_aggregate(t, params[0], params[1], plan, cfg);
      return matmul(t, mean_rows(t, matmul(t, agg, mix)), Tensor::from(2, 1, {1.0, 1.0}));
    };
    auto rep = finite_diff_check(f, params, 1e-6, 1e-6);
    INFO("max rel err " << rep.max_rel_err);
    CHECK(rep.pass);
  }
  SECTION("geometric mode") {
    std::vector<Tensor> params = {random_tensor(8, 3, rng, 0.5, 2.0, true)};
    AggregationConfig cfg;
    cfg.geometric = true;
    auto plan = build_full_plan(h, cfg);
    auto f = [&](Tape& t) {
      Tensor agg = hyper_aggregate(t, params[0], Tensor(), plan, cfg);
      return matmul(t, mean_rows(t, matmul(t, agg, mix)), Tensor::from(2, 1, {1.0, 1.0}));
    };
    auto rep = finite_diff_check(f, params, 1e-6, 1e-5);
    INFO("max rel err " << rep.max_rel_err);
    CHECK(rep.pass);
  }
}

TEST_CASE("sampling with a covering budget equals the full-neighborhood plan exactly") {
  Rng rng(303);
  Hypergraph h = random_hypergraph(14, 7, 2, 6, rng);
  FeatureMatrix xm = random_features(14, 4, rng);
  AggregationConfig cfg;
  cfg.alpha = 64;  // larger than any intra-edge neighborhood
  std::vector<double> importance(14, 1.0);

  Tape tape(false);
  Tensor x_t = Tensor::from(xm);
  Tensor full = hyper_aggregate(tape, x_t, Tensor(), build_full_plan(h, cfg), cfg);
  Tensor sampled = hyper_aggregate(tape, x_t, Tensor(), build_sampled_plan(h, cfg, importance, 5, 0), cfg);
  CHECK(full.value() == sampled.value());  // bit-exact
}
