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
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "txfuse/txcorpus/ingest.hpp"

namespace txfuse::graphbuild {

// One transfer as seen from a node, in time order.
struct TxEvent {
  double value = 0.0;
  std::int64_t timestamp = 0;
  int direction = 1;  // +1 outflow, -1 inflow
  std::uint32_t peer = 0;
};

// Aggregated edge list row: from,to,count,value_sum.
struct EdgeRecord {
  std::string from;
  std::string to;
  std::uint64_t count = 0;
  double value_sum = 0.0;
};

// Directed account graph in CSR form, out- and in-adjacency kept as exact
// transposes. Parallel transfers collapse into one edge carrying their
// count, summed value and count / max_count weight.
class AccountGraph {
 public:
  static AccountGraph from_transfers(const std::vector<txcorpus::Transfer>& transfers);
  static AccountGraph from_edges(const std::vector<EdgeRecord>& edges);

  std::size_t num_nodes() const { return ids_.size(); }
  std::size_t num_edges() const { return out_.targets.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(std::uint32_t v) const { return ids_.at(v); }
  std::optional<std::uint32_t> index_of(const std::string& address) const;
  std::uint32_t require(const std::string& address) const;

  std::span<const std::uint32_t> out_neighbors(std::uint32_t v) const { return out_.row(v); }
  std::span<const std::uint32_t> in_neighbors(std::uint32_t v) const { return in_.row(v); }
  std::span<const std::uint64_t> out_counts(std::uint32_t v) const { return out_.counts_of(v); }
  std::span<const std::uint64_t> in_counts(std::uint32_t v) const { return in_.counts_of(v); }
  std::span<const double> out_values(std::uint32_t v) const { return out_.values_of(v); }
  std::span<const double> in_values(std::uint32_t v) const { return in_.values_of(v); }
  std::span<const double> out_weights(std::uint32_t v) const { return out_.weights_of(v); }
  std::span<const double> in_weights(std::uint32_t v) const { return in_.weights_of(v); }
  // Sorted distinct neighbours ignoring direction.
  std::span<const std::uint32_t> undirected_neighbors(std::uint32_t v) const {
    return und_.row(v);
  }

  // Per-node transfers in time order; empty for edge-list graphs.
  std::span<const TxEvent> events(std::uint32_t v) const;
  bool has_events() const { return has_events_; }

  // Subgraph over `keep` (order defines new ids); edges with an endpoint
  // outside are dropped, events with peers outside are kept.
  AccountGraph induced(const std::vector<std::uint32_t>& keep) const;

  // Returns the same graph with node ids permuted: new id of v is perm[v].
  AccountGraph permuted(const std::vector<std::uint32_t>& perm) const;

 private:
  struct Csr {
    std::vector<std::size_t> offsets{0};
    std::vector<std::uint32_t> targets;
    std::vector<std::uint64_t> counts;
    std::vector<double> values;
    std::vector<double> weights;

    std::span<const std::uint32_t> row(std::uint32_t v) const {
      return {targets.data() + offsets[v], offsets[v + 1] - offsets[v]};
    }
    std::span<const std::uint64_t> counts_of(std::uint32_t v) const {
      return {counts.data() + offsets[v], offsets[v + 1] - offsets[v]};
    }
    std::span<const double> values_of(std::uint32_t v) const {
      return {values.data() + offsets[v], offsets[v + 1] - offsets[v]};
    }
    std::span<const double> weights_of(std::uint32_t v) const {
      return {weights.data() + offsets[v], offsets[v + 1] - offsets[v]};
    }
  };

  struct Edge {
    std::uint32_t src, dst;
    std::uint64_t count;
    double value;
  };
  static AccountGraph assemble(std::vector<std::string> ids, std::vector<Edge> edges,
                               std::vector<std::vector<TxEvent>> events, bool has_events);

  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> index_;
  Csr out_, in_, und_;
  std::vector<std::size_t> event_offsets_{0};
  std::vector<TxEvent> events_;
  bool has_events_ = false;
};

std::vector<EdgeRecord> parse_edge_list(std::istream& in);

}  // namespace txfuse::graphbuild
