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

#include "txfuse/harness/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "txfuse/common/rng.hpp"

namespace txfuse::harness {

namespace {

void check_ratios(const Ratios& r) {
  for (double x : r) {
    if (!(x >= 0.0)) throw std::invalid_argument("split: ratios must be non-negative");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw std::invalid_argument("split: ratios must sum to 1");
  }
}

}  // namespace

std::array<std::size_t, 3> apportion(std::size_t n, const Ratios& ratios) {
  check_ratios(ratios);
  std::array<std::size_t, 3> out{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (int s = 0; s < 3; ++s) {
    const double exact = static_cast<double>(n) * ratios[s];
    out[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[s] = exact - static_cast<double>(out[s]);
    used += out[s];
  }
  while (used < n) {
    int best = 0;
    for (int s = 1; s < 3; ++s) {
      if (rem[s] > rem[best] + 1e-12) best = s;
    }
    ++out[best];
    rem[best] = -1.0;
    ++used;
  }
  return out;
}

Split split_random(const std::vector<int>& labels, const Ratios& ratios, std::uint64_t seed) {
  check_ratios(ratios);
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("split: labels must be 0/1");
    by_class[labels[i]].push_back(i);
  }
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < 3) {
      throw std::invalid_argument("split_random: class " + std::to_string(c) + " has only " +
                                  std::to_string(by_class[c].size()) + " members (need 3)");
    }
  }
  const auto total = apportion(labels.size(), ratios);
  const auto fraud = apportion(by_class[1].size(), ratios);
  Rng rng = Rng::stream(seed, "harness.split");
  rng.shuffle(by_class[0]);
  rng.shuffle(by_class[1]);
  Split out;
  std::vector<std::size_t>* parts[3] = {&out.train, &out.val, &out.test};
  std::size_t pos[2] = {0, 0};
  for (int s = 0; s < 3; ++s) {
    const std::size_t f = std::min(fraud[s], total[s]);
    const std::size_t b = total[s] - f;
    for (std::size_t k = 0; k < f; ++k) parts[s]->push_back(by_class[1][pos[1]++]);
    for (std::size_t k = 0; k < b; ++k) parts[s]->push_back(by_class[0][pos[0]++]);
    std::sort(parts[s]->begin(), parts[s]->end());
  }
  return out;
}

std::vector<std::uint32_t> connected_components(const graphbuild::AccountGraph& g,
                                                std::size_t* count) {
  const std::size_t n = g.num_nodes();
  constexpr auto kNone = static_cast<std::uint32_t>(-1);
  std::vector<std::uint32_t> comp(n, kNone), stack;
  std::uint32_t next = 0;
  for (std::uint32_t s = 0; s < n; ++s) {
    if (comp[s] != kNone) continue;
    comp[s] = next;
    stack.assign(1, s);
    while (!stack.empty()) {
      const std::uint32_t v = stack.back();
      stack.pop_back();
      for (std::uint32_t u : g.undirected_neighbors(v)) {
        if (comp[u] == kNone) {
          comp[u] = next;
          stack.push_back(u);
        }
      }
    }
    ++next;
  }
  if (count) *count = next;
  return comp;
}

ComponentSplit split_components(const graphbuild::AccountGraph& g,
                                const std::vector<std::uint32_t>& accounts,
                                const std::vector<int>& labels, const Ratios& ratios,
                                std::uint64_t seed, double max_component_share) {
  check_ratios(ratios);
  if (accounts.size() != labels.size()) {
    throw std::invalid_argument("split_components: accounts and labels differ in length");
  }
  std::size_t n_comp = 0;
  const auto comp = connected_components(g, &n_comp);
  std::vector<std::size_t> size(n_comp, 0);
  for (auto c : comp) ++size[c];
  const std::size_t largest = n_comp ? *std::max_element(size.begin(), size.end()) : 0;
  if (static_cast<double>(largest) > max_component_share * static_cast<double>(g.num_nodes())) {
    throw GiantComponentError("split_components: largest component holds " +
                              std::to_string(largest) + " of " + std::to_string(g.num_nodes()) +
                              " nodes; use the random split instead");
  }
  std::vector<std::vector<std::size_t>> members(n_comp);
  for (std::size_t i = 0; i < accounts.size(); ++i) members[comp.at(accounts[i])].push_back(i);
  std::vector<std::uint32_t> labelled;
  for (std::uint32_t c = 0; c < n_comp; ++c) {
    if (!members[c].empty()) labelled.push_back(c);
  }
  Rng rng = Rng::stream(seed, "harness.split_components");
  rng.shuffle(labelled);

  ComponentSplit out;
  out.components = labelled.size();
  std::vector<int> comp_split(n_comp, -1);
  for (std::size_t j = 0; j < labelled.size(); ++j) {
    int best = 0;
    double best_gap = -1e300;
    for (int s = 0; s < 3; ++s) {
      if (ratios[s] == 0.0) continue;
      const double gap = ratios[s] * static_cast<double>(j + 1) -
                         static_cast<double>(out.component_counts[s]);
      if (gap > best_gap + 1e-12) {
        best_gap = gap;
        best = s;
      }
    }
    comp_split[labelled[j]] = best;
    ++out.component_counts[best];
  }
  std::vector<std::size_t>* parts[3] = {&out.split.train, &out.split.val, &out.split.test};
  for (std::size_t i = 0; i < accounts.size(); ++i) {
    parts[comp_split[comp[accounts[i]]]]->push_back(i);
  }
  out.node_split.resize(g.num_nodes());
  for (std::size_t v = 0; v < g.num_nodes(); ++v) out.node_split[v] = comp_split[comp[v]];
  return out;
}

std::vector<std::size_t> downsample_benign(const std::vector<int>& labels, double ratio,
                                           std::uint64_t seed) {
  if (!(ratio > 0.0)) throw std::invalid_argument("downsample_benign: ratio must be positive");
  std::vector<std::size_t> fraud, benign;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? fraud : benign).push_back(i);
  Rng rng = Rng::stream(seed, "harness.downsample");
  rng.shuffle(benign);
  const auto keep = std::min(benign.size(), static_cast<std::size_t>(std::llround(
                                                 ratio * static_cast<double>(fraud.size()))));
  std::vector<std::size_t> out = fraud;
  out.insert(out.end(), benign.begin(), benign.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t cross_split_edges(const graphbuild::AccountGraph& g,
                              const std::vector<int>& node_split) {
  if (node_split.size() != g.num_nodes()) {
    throw std::invalid_argument("cross_split_edges: one split entry per node expected");
  }
  std::size_t cross = 0;
  for (std::uint32_t v = 0; v < g.num_nodes(); ++v) {
    for (std::uint32_t u : g.out_neighbors(v)) {
      if (node_split[v] >= 0 && node_split[u] >= 0 && node_split[v] != node_split[u]) ++cross;
    }
  }
  return cross;
}

}  // namespace txfuse::harness
