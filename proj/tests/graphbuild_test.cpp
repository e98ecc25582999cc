// Copyright 2026 The txfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "support/centrality_oracles.hpp"
#include "txfuse/common/rng.hpp"
#include "txfuse/graphbuild/features.hpp"
#include "txfuse/graphbuild/graph.hpp"

namespace txfuse::graphbuild {
namespace {

using txcorpus::Transfer;
using testing::all_pairs;
using testing::betweenness_by_paths;
using testing::betweenness_oracle;
using testing::dense;
using testing::kInf;
using testing::random_graph;

std::string name(std::size_t i) {
  std::string s = std::to_string(i);
  return "n" + std::string(4 - s.size(), '0') + s;
}

AccountGraph three_node() {
  return AccountGraph::from_transfers(
      {{"A", "B", 2.0, 100}, {"A", "B", 3.0, 200}, {"B", "C", 1.0, 300}});
}

TEST(BuildGraph, AggregatesParallelTransfers) {
  AccountGraph g = three_node();
  EXPECT_EQ(g.num_nodes(), 3u);
  EXPECT_EQ(g.num_edges(), 2u);
  const auto a = g.require("A"), b = g.require("B"), c = g.require("C");
  ASSERT_EQ(g.out_neighbors(a).size(), 1u);
  EXPECT_EQ(g.out_neighbors(a)[0], b);
  EXPECT_EQ(g.out_counts(a)[0], 2u);
  EXPECT_EQ(g.out_counts(b)[0], 1u);
  EXPECT_EQ(g.out_neighbors(b)[0], c);
  EXPECT_DOUBLE_EQ(g.out_values(a)[0], 5.0);
  EXPECT_DOUBLE_EQ(g.out_weights(a)[0], 1.0);
  EXPECT_DOUBLE_EQ(g.out_weights(b)[0], 0.5);
}

TEST(BuildGraph, OppositeDirectionsAreDistinctEdges) {
  AccountGraph g = AccountGraph::from_transfers({{"A", "B", 1.0, 1}, {"B", "A", 1.0, 2}});
  EXPECT_EQ(g.num_edges(), 2u);
  EXPECT_EQ(g.undirected_neighbors(0).size(), 1u);
}

TEST(BuildGraph, EmptyInputThrows) {
  EXPECT_THROW(AccountGraph::from_transfers({}), std::invalid_argument);
}

TEST(BuildGraph, CsrTransposeAndPositiveWeights) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    AccountGraph g = random_graph(40, 2.0, seed);
    std::multiset<std::tuple<std::uint32_t, std::uint32_t, std::uint64_t>> out, in;
    for (std::uint32_t v = 0; v < g.num_nodes(); ++v) {
      for (std::size_t k = 0; k < g.out_neighbors(v).size(); ++k) {
        out.insert({v, g.out_neighbors(v)[k], g.out_counts(v)[k]});
        EXPECT_GT(g.out_weights(v)[k], 0.0);
        EXPECT_LE(g.out_weights(v)[k], 1.0);
      }
      for (std::size_t k = 0; k < g.in_neighbors(v).size(); ++k) {
        in.insert({g.in_neighbors(v)[k], v, g.in_counts(v)[k]});
      }
    }
    EXPECT_EQ(out, in);
  }
}

TEST(BuildGraph, EdgeListParsing) {
  std::istringstream in("from,to,count,value_sum\na,b,3,1.5\nb,c,1,2\n");
  auto rows = parse_edge_list(in);
  ASSERT_EQ(rows.size(), 2u);
  AccountGraph g = AccountGraph::from_edges(rows);
  EXPECT_FALSE(g.has_events());
  EXPECT_EQ(g.num_edges(), 2u);
  EXPECT_DOUBLE_EQ(g.out_weights(g.require("a"))[0], 1.0);
  EXPECT_DOUBLE_EQ(g.out_weights(g.require("b"))[0], 1.0 / 3.0);
}

TEST(TransactionStats, ThreeNodeFixture) {
  AccountGraph g = three_node();
  TransactionStats a = transaction_stats(g, "A");
  EXPECT_EQ(a.out_degree, 2);
  EXPECT_EQ(a.in_degree, 0);
  EXPECT_EQ(a.max_out, 3.0);
  EXPECT_EQ(a.min_out, 2.0);
  EXPECT_EQ(a.avg_out, 2.5);
  EXPECT_EQ(a.balance, -5.0);
  EXPECT_DOUBLE_EQ(a.lifetime_days, 100.0 / 86400.0);
  EXPECT_TRUE(a.no_incoming);
  EXPECT_EQ(a.max_in, 0.0);
  EXPECT_EQ(a.min_in, 0.0);
  EXPECT_EQ(a.avg_in, 0.0);

  TransactionStats c = transaction_stats(g, "C");
  EXPECT_EQ(c.lifetime_days, 0.0);
  EXPECT_TRUE(c.no_outgoing);
  EXPECT_EQ(c.balance, 1.0);
  EXPECT_THROW(transaction_stats(g, "Z"), std::out_of_range);
}

TEST(TransferFrequencies, Windows) {
  const std::int64_t day = 86400;
  std::vector<TxEvent> spaced = {
      {1.0, 0, -1, 0}, {1.0, 10 * day, 1, 0}, {1.0, 20 * day, -1, 0}, {1.0, 30 * day, 1, 0}};
  TransferFrequencies f = transfer_frequencies(spaced);
  // Last at day 30: the long window [0, 30] days holds all four.
  EXPECT_EQ(f.long_in, 2);
  EXPECT_EQ(f.long_out, 2);
  EXPECT_EQ(f.short_in, 0);
  EXPECT_EQ(f.short_out, 1);

  f = transfer_frequencies(spaced, 15 * day, day);
  EXPECT_EQ(f.long_in, 1);
  EXPECT_EQ(f.long_out, 1);

  std::vector<TxEvent> burst = {{1.0, 100, -1, 0}, {1.0, 200, 1, 0}, {1.0, 300, 1, 0}};
  f = transfer_frequencies(burst);
  EXPECT_EQ(f.short_in + f.short_out, 3);
  EXPECT_EQ(f.long_in + f.long_out, 3);

  f = transfer_frequencies({});
  EXPECT_EQ(f.long_in + f.long_out + f.short_in + f.short_out, 0);
  EXPECT_THROW(transfer_frequencies(burst, day, day), std::invalid_argument);
  EXPECT_THROW(transfer_frequencies(burst, day, 0), std::invalid_argument);
}

TEST(Centralities, PathOfThree) {
  AccountGraph g = AccountGraph::from_transfers({{"A", "B", 1.0, 1}, {"B", "C", 1.0, 2}});
  Centralities c = centralities(g);
  const auto b = g.require("B"), a = g.require("A");
  EXPECT_DOUBLE_EQ(c.degree[b], 1.0);
  EXPECT_DOUBLE_EQ(c.betweenness[b], 1.0);
  EXPECT_DOUBLE_EQ(c.closeness[b], 1.0);
  EXPECT_DOUBLE_EQ(c.betweenness[a], 0.0);
  EXPECT_DOUBLE_EQ(c.closeness[a], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.in_degree[b], 0.5);
  EXPECT_DOUBLE_EQ(c.out_degree[b], 0.5);
}

TEST(Centralities, Triangle) {
  AccountGraph g = AccountGraph::from_transfers(
      {{"A", "B", 1.0, 1}, {"B", "C", 1.0, 2}, {"C", "A", 1.0, 3}});
  Centralities c = centralities(g);
  for (std::uint32_t v = 0; v < 3; ++v) {
    EXPECT_DOUBLE_EQ(c.clustering[v], 1.0);
    EXPECT_NEAR(c.eigenvector[v], 1.0 / std::sqrt(3.0), 1e-12);
    EXPECT_NEAR(c.katz[v], 1.0 / std::sqrt(3.0), 1e-12);
  }
  EXPECT_NEAR(c.lambda_max, 2.0, 1e-9);
}

TEST(Centralities, EdgelessGraph) {
  // Isolated nodes only arise through induced subgraphs.
  AccountGraph full = AccountGraph::from_transfers({{"A", "B", 1.0, 1}, {"C", "D", 1.0, 2}});
  AccountGraph g = full.induced({full.require("A"), full.require("C"), full.require("D")})
                       .induced({0, 1});
  ASSERT_EQ(g.num_edges(), 0u);
  double lambda = -1.0;
  auto ev = eigenvector_centrality(g, {}, &lambda);
  EXPECT_EQ(lambda, 0.0);
  auto katz = katz_centrality(g, lambda, 1.0, false);
  for (double k : katz) EXPECT_EQ(k, 1.0);
  for (double b : betweenness(g)) EXPECT_EQ(b, 0.0);
  for (double c : clustering_coefficient(g)) EXPECT_EQ(c, 0.0);
  for (double c : closeness(g)) EXPECT_EQ(c, 0.0);
}

TEST(Centralities, NonConvergenceCarriesIterations) {
  AccountGraph g = random_graph(30, 1.0, 9);
  CentralityOptions opt;
  opt.max_iter = 2;
  try {
    eigenvector_centrality(g, opt);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.iterations(), 2u);
  }
}

TEST(Centralities, LenientModeFlagsNonConvergence) {
  AccountGraph g = random_graph(30, 1.0, 9);
  FeatureOptions opt;
  opt.centrality.max_iter = 2;
  ASSERT_FALSE(opt.centrality.strict);
  NodeFeatureMatrix m = assemble_features(g, {0, 1, 2, 3}, opt);
  EXPECT_FALSE(m.eigenvector_converged);
  for (double x : m.values.data()) EXPECT_TRUE(std::isfinite(x));
  opt.centrality.strict = true;
  EXPECT_THROW(assemble_features(g, {0, 1, 2, 3}, opt), ConvergenceError);
}

TEST(CentralityProperty, BrandesMatchesPathCounting) {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    Rng rng = Rng::stream(seed, "test.sizes");
    const std::size_t n = 3 + rng.below(48);
    AccountGraph g = random_graph(n, rng.uniform() * 2.0, seed, seed % 3 != 0);
    Eigen::MatrixXd a = dense(g);
    const auto oracle = betweenness_oracle(a);
    const auto got = betweenness(g, false);
    const double norm = g.num_nodes() > 2 ? (g.num_nodes() - 1.0) * (g.num_nodes() - 2.0) / 2.0 : 0;
    const auto got_norm = betweenness(g, true);
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      EXPECT_NEAR(got[v], oracle[v], 1e-9) << "seed " << seed << " node " << v;
      if (norm > 0) EXPECT_NEAR(got_norm[v], oracle[v] / norm, 1e-9);
    }
  }
}

TEST(CentralityProperty, BrandesMatchesExplicitPaths) {
  for (std::uint64_t seed = 20; seed <= 27; ++seed) {
    AccountGraph g = random_graph(12, 1.5, seed);
    const auto oracle = betweenness_by_paths(dense(g));
    const auto got = betweenness(g, false);
    for (std::size_t v = 0; v < g.num_nodes(); ++v) EXPECT_NEAR(got[v], oracle[v], 1e-9);
  }
}

TEST(CentralityProperty, PairIdentityOnConnectedGraphs) {
  // Summed over nodes, dependencies count the interior vertices of every
  // shortest path: sum_v b(v) = sum_{s<t} (d(s,t) - 1).
  for (std::uint64_t seed = 30; seed <= 37; ++seed) {
    AccountGraph g = random_graph(35, 1.0, seed);
    std::vector<std::vector<long>> d;
    std::vector<std::vector<double>> sigma;
    all_pairs(dense(g), d, sigma);
    double expect = 0.0;
    for (std::size_t s = 0; s < g.num_nodes(); ++s)
      for (std::size_t t = s + 1; t < g.num_nodes(); ++t) {
        ASSERT_LT(d[s][t], kInf);
        expect += static_cast<double>(d[s][t] - 1);
      }
    const auto b = betweenness(g, false);
    EXPECT_NEAR(std::accumulate(b.begin(), b.end(), 0.0), expect, 1e-8);
  }
}

TEST(CentralityProperty, BetweennessIndependentOfThreads) {
  AccountGraph g = random_graph(50, 2.0, 4);
  CentralityOptions one, four;
  four.threads = 4;
  EXPECT_EQ(betweenness(g, true, one), betweenness(g, true, four));
}

TEST(CentralityProperty, PivotApproximationIsUnbiasedScaleAndFlagged) {
  AccountGraph g = random_graph(60, 1.0, 5);
  CentralityOptions opt;
  opt.exact_betweenness_limit = 10;
  opt.betweenness_pivots = 60;  // all sources: equals exact
  EXPECT_EQ(betweenness(g, false, opt), betweenness(g, false));
  opt.betweenness_pivots = 30;
  Centralities c = centralities(g, opt);
  EXPECT_TRUE(c.approximate_betweenness);
  const auto exact = betweenness(g, true);
  const double se = std::accumulate(exact.begin(), exact.end(), 0.0);
  const double sa = std::accumulate(c.betweenness.begin(), c.betweenness.end(), 0.0);
  EXPECT_NEAR(sa / se, 1.0, 0.35);
}

TEST(CentralityProperty, EigenvectorMatchesDenseOracles) {
  for (std::uint64_t seed = 40; seed <= 49; ++seed) {
    Rng rng = Rng::stream(seed, "test.sizes");
    AccountGraph g = random_graph(5 + rng.below(46), 1.0 + rng.uniform(), seed);
    const Eigen::MatrixXd a = dense(g);
    const std::size_t n = a.rows();
    // Dense power method on A + I.
    Eigen::VectorXd x = Eigen::VectorXd::Ones(n).normalized();
    const Eigen::MatrixXd shifted = a + Eigen::MatrixXd::Identity(n, n);
    for (int it = 0; it < 20000; ++it) x = (shifted * x).normalized();
    // Symmetric eigensolver.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    Eigen::VectorXd top = es.eigenvectors().col(n - 1);
    if (top.sum() < 0) top = -top;
    double lambda = 0.0;
    const auto got = eigenvector_centrality(g, {}, &lambda);
    EXPECT_NEAR(lambda, es.eigenvalues()(n - 1), 1e-6);
    for (std::size_t v = 0; v < n; ++v) {
      EXPECT_NEAR(got[v], x(v), 1e-6) << "seed " << seed;
      EXPECT_NEAR(got[v], top(v), 1e-6) << "seed " << seed;
    }
  }
}

TEST(CentralityProperty, KatzMatchesLinearSolve) {
  for (std::uint64_t seed = 50; seed <= 55; ++seed) {
    AccountGraph g = random_graph(30, 1.5, seed);
    const Eigen::MatrixXd a = dense(g);
    const std::size_t n = a.rows();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const double alpha = 0.9 / es.eigenvalues()(n - 1);
    Eigen::VectorXd x = (Eigen::MatrixXd::Identity(n, n) - alpha * a)
                            .partialPivLu()
                            .solve(Eigen::VectorXd::Ones(n));
    x.normalize();
    const auto got = katz_centrality(g, es.eigenvalues()(n - 1), 1.0, true);
    for (std::size_t v = 0; v < n; ++v) EXPECT_NEAR(got[v], x(v), 1e-8);
  }
}

TEST(CentralityProperty, ClosenessAndClusteringMatchDense) {
  for (std::uint64_t seed = 60; seed <= 65; ++seed) {
    AccountGraph g = random_graph(25, 1.5, seed, false);
    const Eigen::MatrixXd a = dense(g);
    const std::size_t n = a.rows();
    std::vector<std::vector<long>> d;
    std::vector<std::vector<double>> sigma;
    all_pairs(a, d, sigma);
    const auto cl = closeness(g);
    const auto cc = clustering_coefficient(g);
    for (std::size_t v = 0; v < n; ++v) {
      double total = 0, reach = 0;
      for (std::size_t w = 0; w < n; ++w) {
        if (w != v && d[v][w] < kInf) {
          total += d[v][w];
          reach += 1;
        }
      }
      const double expect = total > 0 ? (reach / total) * (reach / (n - 1.0)) : 0.0;
      EXPECT_NEAR(cl[v], expect, 1e-12);
      double deg = a.row(v).sum(), tri = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) tri += a(v, i) * a(v, j) * a(i, j);
      EXPECT_NEAR(cc[v], deg < 2 ? 0.0 : 2 * tri / (deg * (deg - 1)), 1e-12);
    }
  }
}

TEST(FeatureProperty, PermutationEquivariant) {
  for (std::uint64_t seed = 70; seed <= 74; ++seed) {
    AccountGraph g = random_graph(30, 1.5, seed);
    std::vector<std::uint32_t> perm(g.num_nodes());
    std::iota(perm.begin(), perm.end(), 0u);
    Rng rng = Rng::stream(seed, "test.perm");
    rng.shuffle(perm);
    AccountGraph h = g.permuted(perm);
    const auto x = raw_features(g, {});
    const auto y = raw_features(h, {});
    for (std::uint32_t v = 0; v < g.num_nodes(); ++v) {
      EXPECT_EQ(g.id(v), h.id(perm[v]));
      for (std::size_t j = 0; j < kNumFeatures; ++j) {
        EXPECT_NEAR(x.at(v, j), y.at(perm[v], j), 1e-9 * std::max(1.0, std::abs(x.at(v, j))))
            << feature_names()[j];
      }
    }
  }
}

TEST(AssembleFeatures, ShapeNamesAndScaling) {
  AccountGraph g = three_node();
  NodeFeatureMatrix m = assemble_features(g, {0, 1, 2});
  EXPECT_EQ(m.values.rows(), 3u);
  EXPECT_EQ(m.values.cols(), 22u);
  EXPECT_EQ(feature_names().front(), "outdegree");
  EXPECT_EQ(feature_names()[kBetweenness], "betweenness");
  EXPECT_EQ(feature_names().back(), "clustering");
  EXPECT_EQ(m.raw.at(g.require("A"), kBalance), -5.0);
  EXPECT_TRUE(m.degenerate[g.require("A")]);
  EXPECT_THROW(assemble_features(g, {}), std::invalid_argument);
}

TEST(AssembleFeatures, ZScoreOnFitNodes) {
  for (bool log_transform : {false, true}) {
    AccountGraph g = random_graph(80, 2.0, 81);
    std::vector<std::uint32_t> fit;
    for (std::uint32_t v = 0; v < g.num_nodes(); v += 2) fit.push_back(v);
    FeatureOptions opt;
    opt.log_transform = log_transform;
    NodeFeatureMatrix m = assemble_features(g, fit, opt);
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      double mean = 0, sq = 0;
      for (auto v : fit) mean += m.values.at(v, j);
      mean /= fit.size();
      for (auto v : fit) sq += (m.values.at(v, j) - mean) * (m.values.at(v, j) - mean);
      const double sd = std::sqrt(sq / fit.size());
      if (m.zero_variance[j]) continue;
      EXPECT_NEAR(mean, 0.0, 1e-9) << feature_names()[j];
      EXPECT_NEAR(sd, 1.0, 1e-9) << feature_names()[j];
    }
    for (double x : m.values.data()) EXPECT_TRUE(std::isfinite(x));
  }
}

TEST(AssembleFeatures, ConstantColumnPassesThroughFlagged) {
  // Every node in a triangle has clustering 1.
  AccountGraph g = AccountGraph::from_transfers(
      {{"A", "B", 1.0, 1}, {"B", "C", 2.0, 2}, {"C", "A", 4.0, 3}});
  NodeFeatureMatrix m = assemble_features(g, {0, 1, 2});
  EXPECT_TRUE(m.zero_variance[kClustering]);
  for (std::uint32_t v = 0; v < 3; ++v) EXPECT_EQ(m.values.at(v, kClustering), 1.0);
  EXPECT_FALSE(m.zero_variance[kMaxOut]);
}

TEST(AssembleFeatures, EdgeListNodesFlagged) {
  std::istringstream in("a,b,3,1.5\nb,c,1,2\nc,a,2,2\n");
  AccountGraph g = AccountGraph::from_edges(parse_edge_list(in));
  NodeFeatureMatrix m = assemble_features(g, {0, 1, 2});
  for (std::uint32_t v = 0; v < 3; ++v) {
    EXPECT_TRUE(m.degenerate[v]);
    EXPECT_EQ(m.raw.at(v, kLifetime), 0.0);
    EXPECT_EQ(m.raw.at(v, kLongIn), 0.0);
  }
  EXPECT_EQ(m.raw.at(g.require("a"), kOutDegree), 3.0);
  EXPECT_EQ(m.raw.at(g.require("a"), kMaxOut), 0.5);
}

}  // namespace
}  // namespace txfuse::graphbuild
