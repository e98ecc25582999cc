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

#include "txfuse/graphbuild/graph.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace txfuse::graphbuild {
namespace {

constexpr std::uint32_t kOutside = std::numeric_limits<std::uint32_t>::max();

}  // namespace

AccountGraph AccountGraph::from_transfers(const std::vector<txcorpus::Transfer>& transfers) {
  if (transfers.empty()) throw std::invalid_argument("build_graph: no transfers");
  std::set<std::string> addresses;
  for (const auto& t : transfers) {
    addresses.insert(t.from);
    addresses.insert(t.to);
  }
  std::vector<std::string> ids(addresses.begin(), addresses.end());
  std::unordered_map<std::string, std::uint32_t> index;
  for (std::uint32_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);

  std::vector<std::size_t> order(transfers.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return transfers[a].timestamp < transfers[b].timestamp;
  });

  std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<std::uint64_t, double>> agg;
  std::vector<std::vector<TxEvent>> events(ids.size());
  for (std::size_t i : order) {
    const auto& t = transfers[i];
    if (t.from == t.to) continue;
    const std::uint32_t s = index.at(t.from), d = index.at(t.to);
    auto& e = agg[{s, d}];
    ++e.first;
    e.second += t.value;
    events[s].push_back({t.value, t.timestamp, +1, d});
    events[d].push_back({t.value, t.timestamp, -1, s});
  }
  std::vector<Edge> edges;
  edges.reserve(agg.size());
  for (const auto& [key, val] : agg) edges.push_back({key.first, key.second, val.first, val.second});
  return assemble(std::move(ids), std::move(edges), std::move(events), true);
}

AccountGraph AccountGraph::from_edges(const std::vector<EdgeRecord>& records) {
  if (records.empty()) throw std::invalid_argument("build_graph: no edges");
  std::set<std::string> addresses;
  for (const auto& r : records) {
    addresses.insert(r.from);
    addresses.insert(r.to);
  }
  std::vector<std::string> ids(addresses.begin(), addresses.end());
  std::unordered_map<std::string, std::uint32_t> index;
  for (std::uint32_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<std::uint64_t, double>> agg;
  for (const auto& r : records) {
    if (r.from == r.to || r.count == 0) continue;
    auto& e = agg[{index.at(r.from), index.at(r.to)}];
    e.first += r.count;
    e.second += r.value_sum;
  }
  std::vector<Edge> edges;
  for (const auto& [key, val] : agg) edges.push_back({key.first, key.second, val.first, val.second});
  std::vector<std::vector<TxEvent>> events(ids.size());
  return assemble(std::move(ids), std::move(edges), std::move(events), false);
}

AccountGraph AccountGraph::assemble(std::vector<std::string> ids, std::vector<Edge> edges,
                                    std::vector<std::vector<TxEvent>> events, bool has_events) {
  AccountGraph g;
  const std::size_t n = ids.size();
  g.ids_ = std::move(ids);
  for (std::uint32_t i = 0; i < n; ++i) g.index_.emplace(g.ids_[i], i);
  g.has_events_ = has_events;

  std::uint64_t max_count = 0;
  for (const auto& e : edges) max_count = std::max(max_count, e.count);

  auto fill = [&](Csr& csr, bool by_dst) {
    std::vector<const Edge*> sorted;
    sorted.reserve(edges.size());
    for (const auto& e : edges) sorted.push_back(&e);
    std::sort(sorted.begin(), sorted.end(), [by_dst](const Edge* a, const Edge* b) {
      return by_dst ? std::tie(a->dst, a->src) < std::tie(b->dst, b->src)
                    : std::tie(a->src, a->dst) < std::tie(b->src, b->dst);
    });
    csr.offsets.assign(n + 1, 0);
    for (const Edge* e : sorted) {
      ++csr.offsets[(by_dst ? e->dst : e->src) + 1];
      csr.targets.push_back(by_dst ? e->src : e->dst);
      csr.counts.push_back(e->count);
      csr.values.push_back(e->value);
      csr.weights.push_back(static_cast<double>(e->count) / static_cast<double>(max_count));
    }
    for (std::size_t v = 0; v < n; ++v) csr.offsets[v + 1] += csr.offsets[v];
  };
  fill(g.out_, false);
  fill(g.in_, true);

  g.und_.offsets.assign(n + 1, 0);
  std::vector<std::uint32_t> scratch;
  for (std::uint32_t v = 0; v < n; ++v) {
    scratch.clear();
    auto o = g.out_.row(v);
    auto i = g.in_.row(v);
    std::set_union(o.begin(), o.end(), i.begin(), i.end(), std::back_inserter(scratch));
    g.und_.targets.insert(g.und_.targets.end(), scratch.begin(), scratch.end());
    g.und_.offsets[v + 1] = g.und_.targets.size();
  }

  for (std::uint32_t v = 0; v < n; ++v) {
    g.events_.insert(g.events_.end(), events[v].begin(), events[v].end());
    g.event_offsets_.push_back(g.events_.size());
  }
  return g;
}

std::optional<std::uint32_t> AccountGraph::index_of(const std::string& address) const {
  auto it = index_.find(address);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t AccountGraph::require(const std::string& address) const {
  auto v = index_of(address);
  if (!v) throw std::out_of_range("unknown account " + address);
  return *v;
}

std::span<const TxEvent> AccountGraph::events(std::uint32_t v) const {
  return {events_.data() + event_offsets_[v], event_offsets_[v + 1] - event_offsets_[v]};
}

AccountGraph AccountGraph::induced(const std::vector<std::uint32_t>& keep) const {
  std::vector<std::uint32_t> remap(num_nodes(), kOutside);
  for (std::uint32_t i = 0; i < keep.size(); ++i) {
    if (remap.at(keep[i]) != kOutside) throw std::invalid_argument("induced: duplicate node");
    remap[keep[i]] = i;
  }
  std::vector<std::string> ids;
  std::vector<Edge> edges;
  std::vector<std::vector<TxEvent>> events(keep.size());
  for (std::uint32_t i = 0; i < keep.size(); ++i) {
    const std::uint32_t v = keep[i];
    ids.push_back(ids_[v]);
    auto nb = out_neighbors(v);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      if (remap[nb[k]] == kOutside) continue;
      edges.push_back({i, remap[nb[k]], out_counts(v)[k], out_values(v)[k]});
    }
    for (TxEvent e : this->events(v)) {
      e.peer = e.peer == kOutside ? kOutside : remap[e.peer];
      events[i].push_back(e);
    }
  }
  return assemble(std::move(ids), std::move(edges), std::move(events), has_events_);
}

AccountGraph AccountGraph::permuted(const std::vector<std::uint32_t>& perm) const {
  if (perm.size() != num_nodes()) throw std::invalid_argument("permuted: size mismatch");
  std::vector<bool> seen(num_nodes(), false);
  for (std::uint32_t p : perm) {
    if (p >= num_nodes() || seen[p]) throw std::invalid_argument("permuted: not a permutation");
    seen[p] = true;
  }
  std::vector<std::string> ids(num_nodes());
  std::vector<Edge> edges;
  std::vector<std::vector<TxEvent>> events(num_nodes());
  for (std::uint32_t v = 0; v < num_nodes(); ++v) {
    ids[perm[v]] = ids_[v];
    auto nb = out_neighbors(v);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      edges.push_back({perm[v], perm[nb[k]], out_counts(v)[k], out_values(v)[k]});
    }
    for (TxEvent e : this->events(v)) {
      if (e.peer != kOutside) e.peer = perm[e.peer];
      events[perm[v]].push_back(e);
    }
  }
  return assemble(std::move(ids), std::move(edges), std::move(events), has_events_);
}

std::vector<EdgeRecord> parse_edge_list(std::istream& in) {
  std::vector<EdgeRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line.rfind("from,", 0) == 0)) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 4) {
      throw std::runtime_error("edge list line " + std::to_string(lineno) + ": expected 4 columns");
    }
    EdgeRecord r;
    r.from = txcorpus::normalize_address(cols[0]);
    r.to = txcorpus::normalize_address(cols[1]);
    try {
      r.count = std::stoull(cols[2]);
      r.value_sum = std::stod(cols[3]);
    } catch (const std::exception&) {
      throw std::runtime_error("edge list line " + std::to_string(lineno) + ": bad number");
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace txfuse::graphbuild
