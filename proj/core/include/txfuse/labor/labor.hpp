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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "txfuse/common/rng.hpp"
#include "txfuse/graphbuild/graph.hpp"

namespace txfuse::labor {

// Which edges define N(v) for aggregation and sampling.
enum class Direction { kIn, kOut, kBoth };
Direction parse_direction(const std::string& s);
std::string to_string(Direction d);

// Read-only neighbour lists with the normalized edge weight w_uv. With
// kBoth, reciprocal edges merge into one neighbour carrying w_uv + w_vu.
class Neighborhood {
 public:
  static Neighborhood build(const graphbuild::AccountGraph& g, Direction dir = Direction::kIn);

  std::size_t num_nodes() const { return offsets_.size() - 1; }
  std::size_t degree(std::uint32_t v) const { return offsets_[v + 1] - offsets_[v]; }
  std::span<const std::uint32_t> neighbors(std::uint32_t v) const {
    return {targets_.data() + offsets_[v], degree(v)};
  }
  std::span<const double> weights(std::uint32_t v) const {
    return {weights_.data() + offsets_[v], degree(v)};
  }
  double weight_sum(std::uint32_t v) const { return weight_sums_[v]; }
  Direction direction() const { return direction_; }

 private:
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> targets_;
  std::vector<double> weights_;
  std::vector<double> weight_sums_;
  Direction direction_ = Direction::kIn;
};

// Disjoint node sets covering every node once.
using BatchPartition = std::vector<std::vector<std::uint32_t>>;

// Shuffles `nodes` and cuts it into `batches` parts whose sizes differ by at
// most one (larger parts first).
BatchPartition partition_batches(std::vector<std::uint32_t> nodes, std::size_t batches, Rng& rng);
BatchPartition partition_batches(std::size_t num_nodes, std::size_t batches, Rng& rng);

// One hop of sampling: edges run from sampled sources into seeds.
struct SampledLayer {
  std::vector<std::uint32_t> seeds;    // global ids
  std::vector<std::uint32_t> sources;  // distinct sampled neighbours, ascending
  std::vector<std::uint32_t> edge_src, edge_dst;
  std::vector<double> edge_weight;  // w_uv
  std::vector<double> importance;   // 1 / inclusion probability, >= 1

  std::size_t num_edges() const { return edge_src.size(); }
  // seeds followed by sources not already among them.
  std::vector<std::uint32_t> next_seeds() const;
};

// LABOR-0: uniform pi, c_v = min(k, d_v) / d_v and one variate r_u per
// source vertex shared by all seeds of the call.
SampledLayer labor_sample(const Neighborhood& nb, std::span<const std::uint32_t> seeds,
                          std::size_t fanout, Rng& rng);

// Inclusion test with explicit variates; exposed for property tests.
SampledLayer labor_sample_with_key(const Neighborhood& nb, std::span<const std::uint32_t> seeds,
                                   std::size_t fanout, std::uint64_t key);
double labor_variate(std::uint64_t key, std::uint32_t u);

// Node-wise baseline: min(k, d_v) neighbours without replacement per seed,
// fresh randomness for each seed.
SampledLayer ns_sample(const Neighborhood& nb, std::span<const std::uint32_t> seeds,
                       std::size_t fanout, Rng& rng);

enum class SamplerKind { kLabor, kNs, kFull };
SamplerKind parse_sampler(const std::string& s);
std::string to_string(SamplerKind k);

struct SamplerConfig {
  SamplerKind kind = SamplerKind::kLabor;
  std::vector<std::size_t> fanouts{10, 10};  // hop 0 (output side) first
};

// hops[0] samples around the batch seeds, hops[h] around hops[h-1].next_seeds().
struct SampledBlock {
  std::vector<SampledLayer> hops;
};

SampledBlock sample_block(const Neighborhood& nb, std::span<const std::uint32_t> seeds,
                          const SamplerConfig& config, const Rng& batch_rng);

// Samples every batch of an epoch in parallel; batch b, hop h draws from
// root.fork(epoch, b, h).
std::vector<SampledBlock> sample_epoch(const Neighborhood& nb, const BatchPartition& batches,
                                       const SamplerConfig& config, const Rng& root,
                                       std::uint64_t epoch, std::size_t threads = 1);

// Compact relabeled view of a block. Local ids are assigned so that the dst
// set of every hop is a prefix: prefix[0] batch seeds, prefix[h + 1] the
// nodes touched by hops 0..h. nodes[local] is the global id.
struct BatchAdjacency {
  struct Hop {
    std::vector<std::size_t> offsets;  // one row per dst local id in [0, prefix[h])
    std::vector<std::uint32_t> src;    // local ids < prefix[h + 1]
    std::vector<double> edge_weight;
    std::vector<double> importance;
    std::vector<std::uint32_t> degree;  // full |N(v)| per dst row
    std::vector<double> weight_sum;     // full sum of w_uv per dst row
  };
  std::vector<std::uint32_t> nodes;
  std::vector<std::size_t> prefix;
  std::vector<Hop> hops;

  std::uint32_t local(std::uint32_t global) const;
  std::unordered_map<std::uint32_t, std::uint32_t> index;
};

BatchAdjacency build_batch_adjacency(const SampledBlock& block, const Neighborhood& nb);

// Whole-graph adjacency with every hop keeping all neighbours (importance 1).
BatchAdjacency full_adjacency(const Neighborhood& nb, std::size_t num_hops);

struct SamplerStats {
  std::vector<double> vertices;  // mean |V^l|: seeds plus sampled sources at hop l
  std::vector<double> sampled;   // mean distinct sampled sources at hop l
  std::vector<double> edges;     // mean |E^l|
  double iterations_per_second = 0.0;
  std::size_t iterations = 0;
};

SamplerStats sampling_stats(const Neighborhood& nb, const SamplerConfig& config,
                            const BatchPartition& batches, std::size_t trials, std::uint64_t seed);

}  // namespace txfuse::labor
