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

#include <cmath>
#include <numeric>
#include <set>

#include "support/graphs.hpp"
#include "txfuse/labor/labor.hpp"

namespace txfuse::labor {
namespace {

using graphbuild::AccountGraph;
using testing::clustered_graph;
using testing::in_star;
using testing::node_name;

std::vector<std::uint32_t> one(std::uint32_t v) { return {v}; }

TEST(Partition, SizesAndCoverage) {
  Rng rng(1);
  auto p = partition_batches(10, 3, rng);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0].size(), 4u);
  EXPECT_EQ(p[1].size(), 3u);
  EXPECT_EQ(p[2].size(), 3u);
  Rng single(2);
  auto q = partition_batches(7, 1, single);
  ASSERT_EQ(q.size(), 1u);
  EXPECT_EQ(std::set<std::uint32_t>(q[0].begin(), q[0].end()).size(), 7u);
  Rng bad(3);
  EXPECT_THROW(partition_batches(3, 4, bad), std::invalid_argument);
  EXPECT_THROW(partition_batches(3, 0, bad), std::invalid_argument);
}

TEST(Partition, EpochCoverageProperty) {
  Rng gen(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + gen.below(300);
    const std::size_t b = 1 + gen.below(n);
    Rng rng(gen.next_u64());
    auto p = partition_batches(n, b, rng);
    std::vector<std::uint32_t> all;
    std::size_t lo = n, hi = 0;
    for (const auto& part : p) {
      all.insert(all.end(), part.begin(), part.end());
      lo = std::min(lo, part.size());
      hi = std::max(hi, part.size());
    }
    EXPECT_LE(hi - lo, 1u);
    std::sort(all.begin(), all.end());
    std::vector<std::uint32_t> expect(n);
    std::iota(expect.begin(), expect.end(), 0u);
    EXPECT_EQ(all, expect);
  }
}

TEST(Partition, SameSeedSamePartition) {
  Rng a(42), b(42);
  EXPECT_EQ(partition_batches(100, 7, a), partition_batches(100, 7, b));
}

TEST(Neighborhood, Directions) {
  AccountGraph g = AccountGraph::from_transfers(
      {{"a", "b", 1.0, 1}, {"a", "b", 1.0, 2}, {"b", "a", 1.0, 3}, {"c", "b", 1.0, 4}});
  const auto a = g.require("a"), b = g.require("b"), c = g.require("c");
  Neighborhood in = Neighborhood::build(g, Direction::kIn);
  EXPECT_EQ(in.degree(b), 2u);
  EXPECT_EQ(in.degree(c), 0u);
  Neighborhood out = Neighborhood::build(g, Direction::kOut);
  EXPECT_EQ(out.degree(c), 1u);
  Neighborhood both = Neighborhood::build(g, Direction::kBoth);
  ASSERT_EQ(both.degree(a), 1u);
  EXPECT_DOUBLE_EQ(both.weights(a)[0], 1.5);  // w_ab = 1, w_ba = 0.5
  EXPECT_EQ(parse_direction("both"), Direction::kBoth);
  EXPECT_THROW(parse_direction("sideways"), std::invalid_argument);
}

TEST(Labor, LowDegreeFullInclusion) {
  AccountGraph g = in_star(3);
  Neighborhood nb = Neighborhood::build(g);
  const auto hub = g.require("hub");
  for (std::uint64_t t = 0; t < 1000; ++t) {
    Rng rng(t);
    SampledLayer s = labor_sample(nb, one(hub), 10, rng);
    ASSERT_EQ(s.num_edges(), 3u);
    for (double w : s.importance) EXPECT_EQ(w, 1.0);
  }
}

TEST(Labor, InclusionProbabilityMonteCarlo) {
  AccountGraph g = in_star(20);
  Neighborhood nb = Neighborhood::build(g);
  const auto hub = g.require("hub");
  const std::size_t trials = 100000;
  std::vector<double> hits(g.num_nodes(), 0.0);
  double total = 0.0;
  Rng rng = Rng::stream(5, "test.labor");
  for (std::size_t t = 0; t < trials; ++t) {
    SampledLayer s = labor_sample(nb, one(hub), 10, rng);
    total += static_cast<double>(s.sources.size());
    for (std::uint32_t u : s.sources) hits[u] += 1.0;
    for (double w : s.importance) ASSERT_DOUBLE_EQ(w, 2.0);
  }
  EXPECT_NEAR(total / trials, 10.0, 0.1);
  for (std::uint32_t u : nb.neighbors(hub)) EXPECT_NEAR(hits[u] / trials, 0.5, 0.02);
}

TEST(Labor, SharedVariatesGiveIdenticalSets) {
  // Two receivers with the same five senders and fanout 2.
  std::vector<txcorpus::Transfer> t;
  for (int i = 0; i < 5; ++i) {
    t.push_back({node_name(i), "x", 1.0, 1});
    t.push_back({node_name(i), "y", 1.0, 2});
  }
  AccountGraph g = AccountGraph::from_transfers(t);
  Neighborhood nb = Neighborhood::build(g);
  const auto x = g.require("x"), y = g.require("y");
  for (std::uint64_t s = 0; s < 500; ++s) {
    Rng rng(s);
    SampledLayer layer = labor_sample(nb, std::vector<std::uint32_t>{x, y}, 2, rng);
    std::set<std::uint32_t> sx, sy;
    for (std::size_t e = 0; e < layer.num_edges(); ++e) {
      (layer.edge_dst[e] == x ? sx : sy).insert(layer.edge_src[e]);
    }
    EXPECT_EQ(sx, sy);
  }
}

TEST(Labor, MonotoneInFanoutForFixedVariates) {
  AccountGraph g = clustered_graph(3, 30, 20, 3);
  Neighborhood nb = Neighborhood::build(g);
  std::vector<std::uint32_t> seeds = {0, 5, 40, 77};
  for (std::uint64_t key = 0; key < 50; ++key) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> prev;
    for (std::size_t k = 1; k <= 25; ++k) {
      SampledLayer s = labor_sample_with_key(nb, seeds, k, key);
      std::set<std::pair<std::uint32_t, std::uint32_t>> cur;
      for (std::size_t e = 0; e < s.num_edges(); ++e) cur.insert({s.edge_src[e], s.edge_dst[e]});
      EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
      prev = cur;
    }
  }
}

TEST(Labor, ImportanceWeightedAggregationUnbiased) {
  // 20-node fixture: hub receives from 19 senders with unequal counts.
  std::vector<txcorpus::Transfer> t;
  for (std::size_t i = 0; i < 19; ++i) {
    for (std::size_t r = 0; r <= i % 4; ++r) t.push_back({node_name(i), "hub", 1.0, 1});
  }
  AccountGraph g = AccountGraph::from_transfers(t);
  Neighborhood nb = Neighborhood::build(g);
  const auto hub = g.require("hub");
  std::vector<double> x(g.num_nodes());
  for (std::size_t v = 0; v < x.size(); ++v) x[v] = 1.0 + std::sin(3.0 * v);
  double exact = 0.0;
  for (std::size_t k = 0; k < nb.degree(hub); ++k) exact += nb.weights(hub)[k] * x[nb.neighbors(hub)[k]];
  for (bool labor : {true, false}) {
    Rng rng = Rng::stream(9, labor ? "labor" : "ns");
    double mean = 0.0;
    const std::size_t trials = 100000;
    for (std::size_t tr = 0; tr < trials; ++tr) {
      SampledLayer s = labor ? labor_sample(nb, one(hub), 5, rng) : ns_sample(nb, one(hub), 5, rng);
      double est = 0.0;
      for (std::size_t e = 0; e < s.num_edges(); ++e) {
        est += s.importance[e] * s.edge_weight[e] * x[s.edge_src[e]];
      }
      mean += est / trials;
    }
    EXPECT_NEAR(mean / exact, 1.0, 0.02) << (labor ? "labor" : "ns");
  }
}

TEST(Ns, CountsAndIndependence) {
  AccountGraph g = in_star(20);
  Neighborhood nb = Neighborhood::build(g);
  const auto hub = g.require("hub");
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    SampledLayer s = ns_sample(nb, one(hub), 10, rng);
    EXPECT_EQ(s.num_edges(), 10u);
    EXPECT_EQ(s.sources.size(), 10u);
    EXPECT_EQ(ns_sample(nb, one(hub), 25, rng).num_edges(), 20u);
  }

  std::vector<txcorpus::Transfer> t;
  for (int i = 0; i < 5; ++i) {
    t.push_back({node_name(i), "x", 1.0, 1});
    t.push_back({node_name(i), "y", 1.0, 2});
  }
  AccountGraph h = AccountGraph::from_transfers(t);
  Neighborhood nh = Neighborhood::build(h);
  const auto x = h.require("x"), y = h.require("y");
  int differ = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    SampledLayer layer = ns_sample(nh, std::vector<std::uint32_t>{x, y}, 2, rng);
    std::set<std::uint32_t> sx, sy;
    for (std::size_t e = 0; e < layer.num_edges(); ++e) {
      (layer.edge_dst[e] == x ? sx : sy).insert(layer.edge_src[e]);
    }
    differ += sx != sy;
  }
  EXPECT_GT(differ, 0);
}

TEST(Sampler, Errors) {
  AccountGraph g = in_star(3);
  Neighborhood nb = Neighborhood::build(g);
  Rng rng(1);
  EXPECT_THROW(labor_sample(nb, one(99), 2, rng), std::out_of_range);
  EXPECT_THROW(ns_sample(nb, {}, 2, rng), std::invalid_argument);
  EXPECT_THROW(labor_sample(nb, one(0), 0, rng), std::invalid_argument);
}

TEST(BatchAdjacency, SingleSeedSingleLayer) {
  AccountGraph g = in_star(4);
  Neighborhood nb = Neighborhood::build(g);
  const auto hub = g.require("hub");
  SamplerConfig cfg;
  cfg.fanouts = {10};
  SampledBlock block = sample_block(nb, one(hub), cfg, Rng(3));
  BatchAdjacency adj = build_batch_adjacency(block, nb);
  ASSERT_EQ(adj.hops.size(), 1u);
  EXPECT_EQ(adj.prefix, (std::vector<std::size_t>{1, 5}));
  ASSERT_EQ(adj.hops[0].offsets, (std::vector<std::size_t>{0, 4}));
  std::set<std::uint32_t> got, expect(nb.neighbors(hub).begin(), nb.neighbors(hub).end());
  for (std::uint32_t s : adj.hops[0].src) got.insert(adj.nodes[s]);
  EXPECT_EQ(got, expect);
  EXPECT_EQ(adj.hops[0].degree[0], 4u);
}

TEST(BatchAdjacency, RelabelRoundTrip) {
  AccountGraph g = clustered_graph(4, 25, 12, 8);
  Neighborhood nb = Neighborhood::build(g);
  std::vector<std::uint32_t> seeds = {3, 17, 60, 99};
  for (auto kind : {SamplerKind::kLabor, SamplerKind::kNs, SamplerKind::kFull}) {
    SamplerConfig cfg{kind, {4, 3}};
    SampledBlock block = sample_block(nb, seeds, cfg, Rng(5));
    BatchAdjacency adj = build_batch_adjacency(block, nb);
    for (std::uint32_t l = 0; l < adj.nodes.size(); ++l) EXPECT_EQ(adj.local(adj.nodes[l]), l);
    for (std::size_t h = 0; h < block.hops.size(); ++h) {
      std::multiset<std::pair<std::uint32_t, std::uint32_t>> a, b;
      const auto& hop = adj.hops[h];
      for (std::size_t r = 0; r + 1 < hop.offsets.size(); ++r) {
        for (std::size_t e = hop.offsets[r]; e < hop.offsets[r + 1]; ++e) {
          ASSERT_LT(hop.src[e], adj.prefix[h + 1]);
          a.insert({adj.nodes[hop.src[e]], adj.nodes[r]});
        }
      }
      for (std::size_t e = 0; e < block.hops[h].num_edges(); ++e) {
        b.insert({block.hops[h].edge_src[e], block.hops[h].edge_dst[e]});
      }
      EXPECT_EQ(a, b);
    }
  }
}

TEST(BatchAdjacency, DanglingReferenceThrows) {
  AccountGraph g = in_star(4);
  Neighborhood nb = Neighborhood::build(g);
  SamplerConfig cfg;
  SampledBlock block = sample_block(nb, one(g.require("hub")), cfg, Rng(3));
  block.hops[1].edge_src.push_back(g.require("hub"));
  block.hops[1].edge_dst.push_back(12345);
  block.hops[1].edge_weight.push_back(1.0);
  block.hops[1].importance.push_back(1.0);
  EXPECT_THROW(build_batch_adjacency(block, nb), std::logic_error);
}

TEST(BatchAdjacency, TwoLayersOnPath) {
  // a -> b -> c, neighbours are senders: c <- b <- a.
  AccountGraph g = AccountGraph::from_transfers({{"a", "b", 1.0, 1}, {"b", "c", 1.0, 2}});
  Neighborhood nb = Neighborhood::build(g);
  for (auto kind : {SamplerKind::kLabor, SamplerKind::kNs}) {
    SamplerConfig cfg{kind, {10, 10}};
    SampledBlock block = sample_block(nb, one(g.require("c")), cfg, Rng(1));
    ASSERT_EQ(block.hops.size(), 2u);
    EXPECT_EQ(block.hops[0].num_edges(), 1u);        // b -> c
    EXPECT_EQ(block.hops[0].next_seeds().size(), 2u);  // {c, b}
    EXPECT_EQ(block.hops[1].num_edges(), 2u);        // b -> c, a -> b
    EXPECT_EQ(block.hops[1].next_seeds().size(), 3u);
    BatchAdjacency adj = build_batch_adjacency(block, nb);
    EXPECT_EQ(adj.prefix, (std::vector<std::size_t>{1, 2, 3}));
  }
}

TEST(Stats, EdgelessGraphSamplesNothing) {
  AccountGraph full = AccountGraph::from_transfers({{"a", "b", 1.0, 1}, {"c", "d", 1.0, 2}});
  AccountGraph g = full.induced({0, 2});
  Neighborhood nb = Neighborhood::build(g);
  SamplerStats s = sampling_stats(nb, {SamplerKind::kLabor, {1, 1}}, {{0, 1}}, 3, 1);
  EXPECT_EQ(s.sampled, (std::vector<double>{0, 0}));
  EXPECT_EQ(s.edges, (std::vector<double>{0, 0}));
  EXPECT_EQ(s.vertices, (std::vector<double>{2, 2}));
  EXPECT_THROW(sampling_stats(nb, {}, {{0}}, 0, 1), std::invalid_argument);
}

TEST(Stats, VertexCountsGrowAwayFromOutput) {
  AccountGraph g = clustered_graph(20, 50, 20, 1);
  Neighborhood nb = Neighborhood::build(g);
  Rng rng(1);
  auto batches = partition_batches(g.num_nodes(), 10, rng);
  for (auto kind : {SamplerKind::kLabor, SamplerKind::kNs}) {
    SamplerStats a = sampling_stats(nb, {kind, {10, 10}}, batches, 3, 4);
    SamplerStats b = sampling_stats(nb, {kind, {10, 10}}, batches, 3, 4);
    EXPECT_EQ(a.vertices, b.vertices);
    EXPECT_EQ(a.edges, b.edges);
    EXPECT_LE(a.vertices[0], a.vertices[1]);
    EXPECT_GE(a.edges[0], 0.0);
  }
}

TEST(Stats, LaborTouchesFewerVerticesThanNs) {
  AccountGraph g = clustered_graph(20, 50, 20, 2);
  Neighborhood nb = Neighborhood::build(g);
  Rng rng(2);
  auto batches = partition_batches(g.num_nodes(), 10, rng);
  SamplerStats labor = sampling_stats(nb, {SamplerKind::kLabor, {10, 10}}, batches, 10, 6);
  SamplerStats ns = sampling_stats(nb, {SamplerKind::kNs, {10, 10}}, batches, 10, 6);
  EXPECT_LE(labor.vertices[1], 0.9 * ns.vertices[1])
      << "labor " << labor.vertices[1] << " ns " << ns.vertices[1];
  EXPECT_LT(labor.sampled[0], ns.sampled[0]);
}

}  // namespace
}  // namespace txfuse::labor
