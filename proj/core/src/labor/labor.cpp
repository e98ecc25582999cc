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

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <stdexcept>

#include "txfuse/common/parallel.hpp"
#include "txfuse/labor/labor.hpp"

namespace txfuse::labor {

Direction parse_direction(const std::string& s) {
  if (s == "in") return Direction::kIn;
  if (s == "out") return Direction::kOut;
  if (s == "both") return Direction::kBoth;
  throw std::invalid_argument("unknown neighbour direction '" + s + "'");
}

std::string to_string(Direction d) {
  switch (d) {
    case Direction::kIn:
      return "in";
    case Direction::kOut:
      return "out";
    case Direction::kBoth:
      return "both";
  }
  return "?";
}

SamplerKind parse_sampler(const std::string& s) {
  if (s == "labor") return SamplerKind::kLabor;
  if (s == "ns") return SamplerKind::kNs;
  if (s == "full") return SamplerKind::kFull;
  throw std::invalid_argument("unknown sampler '" + s + "'");
}

std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::kLabor:
      return "labor";
    case SamplerKind::kNs:
      return "ns";
    case SamplerKind::kFull:
      return "full";
  }
  return "?";
}

Neighborhood Neighborhood::build(const graphbuild::AccountGraph& g, Direction dir) {
  Neighborhood nb;
  nb.direction_ = dir;
  const std::size_t n = g.num_nodes();
  nb.offsets_.reserve(n + 1);
  nb.weight_sums_.assign(n, 0.0);
  std::map<std::uint32_t, double> merged;
  for (std::uint32_t v = 0; v < n; ++v) {
    merged.clear();
    if (dir != Direction::kOut) {
      auto src = g.in_neighbors(v);
      auto w = g.in_weights(v);
      for (std::size_t k = 0; k < src.size(); ++k) merged[src[k]] += w[k];
    }
    if (dir != Direction::kIn) {
      auto dst = g.out_neighbors(v);
      auto w = g.out_weights(v);
      for (std::size_t k = 0; k < dst.size(); ++k) merged[dst[k]] += w[k];
    }
    for (auto [u, w] : merged) {
      nb.targets_.push_back(u);
      nb.weights_.push_back(w);
      nb.weight_sums_[v] += w;
    }
    nb.offsets_.push_back(nb.targets_.size());
  }
  return nb;
}

BatchPartition partition_batches(std::vector<std::uint32_t> nodes, std::size_t batches,
                                 Rng& rng) {
  if (batches == 0 || batches > nodes.size()) {
    throw std::invalid_argument("partition_batches: need 1 <= B <= |V|");
  }
  rng.shuffle(nodes);
  BatchPartition out(batches);
  const std::size_t base = nodes.size() / batches, extra = nodes.size() % batches;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t len = base + (b < extra ? 1 : 0);
    out[b].assign(nodes.begin() + pos, nodes.begin() + pos + len);
    pos += len;
  }
  return out;
}

BatchPartition partition_batches(std::size_t num_nodes, std::size_t batches, Rng& rng) {
  std::vector<std::uint32_t> nodes(num_nodes);
  std::iota(nodes.begin(), nodes.end(), 0u);
  return partition_batches(std::move(nodes), batches, rng);
}

std::vector<std::uint32_t> SampledLayer::next_seeds() const {
  std::vector<std::uint32_t> out = seeds;
  std::vector<std::uint32_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  for (std::uint32_t u : sources) {
    if (!std::binary_search(sorted.begin(), sorted.end(), u)) out.push_back(u);
  }
  return out;
}

namespace {

void check_seeds(const Neighborhood& nb, std::span<const std::uint32_t> seeds,
                 std::size_t fanout) {
  if (fanout == 0) throw std::invalid_argument("sampler: fanout must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("sampler: empty seed set");
  for (std::uint32_t v : seeds) {
    if (v >= nb.num_nodes()) throw std::out_of_range("sampler: seed not in graph");
  }
}

void finish(SampledLayer& layer) {
  layer.sources = layer.edge_src;
  std::sort(layer.sources.begin(), layer.sources.end());
  layer.sources.erase(std::unique(layer.sources.begin(), layer.sources.end()),
                      layer.sources.end());
}

}  // namespace

double labor_variate(std::uint64_t key, std::uint32_t u) {
  return to_unit(mix64(key ^ mix64(0x6a09e667f3bcc909ULL + u)));
}

SampledLayer labor_sample_with_key(const Neighborhood& nb, std::span<const std::uint32_t> seeds,
                                   std::size_t fanout, std::uint64_t key) {
  check_seeds(nb, seeds, fanout);
  SampledLayer layer;
  layer.seeds.assign(seeds.begin(), seeds.end());
  for (std::uint32_t v : seeds) {
    const std::size_t d = nb.degree(v);
    if (d == 0) continue;
    // pi_u = 1 for every neighbour, so c_v * pi_u is the inclusion probability.
    const double p = static_cast<double>(std::min(fanout, d)) / static_cast<double>(d);
    auto nbr = nb.neighbors(v);
    auto w = nb.weights(v);
    for (std::size_t k = 0; k < d; ++k) {
      if (p >= 1.0 || labor_variate(key, nbr[k]) <= p) {
        layer.edge_src.push_back(nbr[k]);
        layer.edge_dst.push_back(v);
        layer.edge_weight.push_back(w[k]);
        layer.importance.push_back(1.0 / p);
      }
    }
  }
  finish(layer);
  return layer;
}

SampledLayer labor_sample(const Neighborhood& nb, std::span<const std::uint32_t> seeds,
                          std::size_t fanout, Rng& rng) {
  return labor_sample_with_key(nb, seeds, fanout, rng.next_u64());
}

SampledLayer ns_sample(const Neighborhood& nb, std::span<const std::uint32_t> seeds,
                       std::size_t fanout, Rng& rng) {
  check_seeds(nb, seeds, fanout);
  SampledLayer layer;
  layer.seeds.assign(seeds.begin(), seeds.end());
  std::vector<std::size_t> idx;
  for (std::uint32_t v : seeds) {
    const std::size_t d = nb.degree(v);
    if (d == 0) continue;
    const std::size_t take = std::min(fanout, d);
    idx.resize(d);
    std::iota(idx.begin(), idx.end(), 0);
    if (take < d) {
      for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng.below(d - i)]);
      idx.resize(take);
      std::sort(idx.begin(), idx.end());
    }
    const double imp = static_cast<double>(d) / static_cast<double>(take);
    auto nbr = nb.neighbors(v);
    auto w = nb.weights(v);
    for (std::size_t k : idx) {
      layer.edge_src.push_back(nbr[k]);
      layer.edge_dst.push_back(v);
      layer.edge_weight.push_back(w[k]);
      layer.importance.push_back(imp);
    }
  }
  finish(layer);
  return layer;
}

namespace {

SampledLayer full_sample(const Neighborhood& nb, std::span<const std::uint32_t> seeds) {
  SampledLayer layer;
  layer.seeds.assign(seeds.begin(), seeds.end());
  for (std::uint32_t v : seeds) {
    auto nbr = nb.neighbors(v);
    auto w = nb.weights(v);
    for (std::size_t k = 0; k < nbr.size(); ++k) {
      layer.edge_src.push_back(nbr[k]);
      layer.edge_dst.push_back(v);
      layer.edge_weight.push_back(w[k]);
      layer.importance.push_back(1.0);
    }
  }
  finish(layer);
  return layer;
}

}  // namespace

SampledBlock sample_block(const Neighborhood& nb, std::span<const std::uint32_t> seeds,
                          const SamplerConfig& config, const Rng& batch_rng) {
  if (config.fanouts.empty()) throw std::invalid_argument("sampler: no fanouts");
  SampledBlock block;
  std::vector<std::uint32_t> current(seeds.begin(), seeds.end());
  for (std::size_t h = 0; h < config.fanouts.size(); ++h) {
    Rng rng = batch_rng.fork(h);
    switch (config.kind) {
      case SamplerKind::kLabor:
        block.hops.push_back(labor_sample(nb, current, config.fanouts[h], rng));
        break;
      case SamplerKind::kNs:
        block.hops.push_back(ns_sample(nb, current, config.fanouts[h], rng));
        break;
      case SamplerKind::kFull:
        check_seeds(nb, current, config.fanouts[h]);
        block.hops.push_back(full_sample(nb, current));
        break;
    }
    current = block.hops.back().next_seeds();
  }
  return block;
}

std::vector<SampledBlock> sample_epoch(const Neighborhood& nb, const BatchPartition& batches,
                                       const SamplerConfig& config, const Rng& root,
                                       std::uint64_t epoch, std::size_t threads) {
  std::vector<SampledBlock> out(batches.size());
  parallel_for(
      batches.size(),
      [&](std::size_t b) { out[b] = sample_block(nb, batches[b], config, root.fork(epoch, b)); },
      threads);
  return out;
}

std::uint32_t BatchAdjacency::local(std::uint32_t global) const {
  auto it = index.find(global);
  if (it == index.end()) throw std::out_of_range("BatchAdjacency: node not in batch");
  return it->second;
}

BatchAdjacency build_batch_adjacency(const SampledBlock& block, const Neighborhood& nb) {
  if (block.hops.empty()) throw std::invalid_argument("build_batch_adjacency: empty block");
  BatchAdjacency adj;
  auto add = [&](std::uint32_t g) {
    if (adj.index.emplace(g, static_cast<std::uint32_t>(adj.nodes.size())).second) {
      adj.nodes.push_back(g);
    }
  };
  for (std::uint32_t v : block.hops[0].seeds) add(v);
  if (adj.nodes.size() != block.hops[0].seeds.size()) {
    throw std::logic_error("build_batch_adjacency: duplicate seed");
  }
  adj.prefix.push_back(adj.nodes.size());
  for (std::size_t h = 0; h < block.hops.size(); ++h) {
    const SampledLayer& layer = block.hops[h];
    // The dst set of this hop must be exactly the current prefix, in order.
    if (layer.seeds.size() != adj.prefix[h]) {
      throw std::logic_error("build_batch_adjacency: hop seeds do not match previous hop");
    }
    for (std::size_t i = 0; i < layer.seeds.size(); ++i) {
      if (adj.nodes[i] != layer.seeds[i]) {
        throw std::logic_error("build_batch_adjacency: hop seeds do not match previous hop");
      }
    }
    for (std::uint32_t u : layer.sources) add(u);
    adj.prefix.push_back(adj.nodes.size());

    BatchAdjacency::Hop hop;
    const std::size_t rows = adj.prefix[h];
    std::vector<std::size_t> count(rows, 0);
    for (std::size_t e = 0; e < layer.num_edges(); ++e) {
      auto dst = adj.index.find(layer.edge_dst[e]);
      auto src = adj.index.find(layer.edge_src[e]);
      if (dst == adj.index.end() || dst->second >= rows || src == adj.index.end()) {
        throw std::logic_error("build_batch_adjacency: dangling edge reference");
      }
      ++count[dst->second];
    }
    hop.offsets.assign(rows + 1, 0);
    for (std::size_t r = 0; r < rows; ++r) hop.offsets[r + 1] = hop.offsets[r] + count[r];
    hop.src.resize(layer.num_edges());
    hop.edge_weight.resize(layer.num_edges());
    hop.importance.resize(layer.num_edges());
    std::vector<std::size_t> fill(hop.offsets.begin(), hop.offsets.end() - 1);
    for (std::size_t e = 0; e < layer.num_edges(); ++e) {
      const std::size_t pos = fill[adj.index.at(layer.edge_dst[e])]++;
      hop.src[pos] = adj.index.at(layer.edge_src[e]);
      hop.edge_weight[pos] = layer.edge_weight[e];
      hop.importance[pos] = layer.importance[e];
    }
    hop.degree.resize(rows);
    hop.weight_sum.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      hop.degree[r] = static_cast<std::uint32_t>(nb.degree(adj.nodes[r]));
      hop.weight_sum[r] = nb.weight_sum(adj.nodes[r]);
    }
    adj.hops.push_back(std::move(hop));
  }
  return adj;
}

BatchAdjacency full_adjacency(const Neighborhood& nb, std::size_t num_hops) {
  if (num_hops == 0) throw std::invalid_argument("full_adjacency: need >= 1 hop");
  BatchAdjacency adj;
  const std::size_t n = nb.num_nodes();
  adj.nodes.resize(n);
  std::iota(adj.nodes.begin(), adj.nodes.end(), 0u);
  for (std::uint32_t v = 0; v < n; ++v) adj.index.emplace(v, v);
  adj.prefix.assign(num_hops + 1, n);
  BatchAdjacency::Hop hop;
  hop.offsets.assign(n + 1, 0);
  for (std::uint32_t v = 0; v < n; ++v) {
    hop.offsets[v + 1] = hop.offsets[v] + nb.degree(v);
    auto nbr = nb.neighbors(v);
    auto w = nb.weights(v);
    hop.src.insert(hop.src.end(), nbr.begin(), nbr.end());
    hop.edge_weight.insert(hop.edge_weight.end(), w.begin(), w.end());
    hop.degree.push_back(static_cast<std::uint32_t>(nb.degree(v)));
    hop.weight_sum.push_back(nb.weight_sum(v));
  }
  hop.importance.assign(hop.src.size(), 1.0);
  adj.hops.assign(num_hops, hop);
  return adj;
}

SamplerStats sampling_stats(const Neighborhood& nb, const SamplerConfig& config,
                            const BatchPartition& batches, std::size_t trials,
                            std::uint64_t seed) {
  if (trials == 0) throw std::invalid_argument("sampling_stats: trials must be >= 1");
  const std::size_t hops = config.fanouts.size();
  SamplerStats stats;
  stats.vertices.assign(hops, 0.0);
  stats.sampled.assign(hops, 0.0);
  stats.edges.assign(hops, 0.0);
  const Rng root = Rng::stream(seed, "labor.bench");
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t b = 0; b < batches.size(); ++b) {
      SampledBlock block = sample_block(nb, batches[b], config, root.fork(t, b));
      for (std::size_t h = 0; h < hops; ++h) {
        const SampledLayer& layer = block.hops[h];
        stats.vertices[h] += static_cast<double>(layer.next_seeds().size());
        stats.sampled[h] += static_cast<double>(layer.sources.size());
        stats.edges[h] += static_cast<double>(layer.num_edges());
      }
      ++stats.iterations;
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (std::size_t h = 0; h < hops; ++h) {
    stats.vertices[h] /= static_cast<double>(stats.iterations);
    stats.sampled[h] /= static_cast<double>(stats.iterations);
    stats.edges[h] /= static_cast<double>(stats.iterations);
  }
  stats.iterations_per_second = secs > 0 ? static_cast<double>(stats.iterations) / secs : 0.0;
  return stats;
}

}  // namespace txfuse::labor
