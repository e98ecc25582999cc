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

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "txfuse/graphbuild/graph.hpp"

namespace txfuse::harness {

// Positions into the caller's account list.
struct Split {
  std::vector<std::size_t> train, val, test;
};

using Ratios = std::array<double, 3>;
inline constexpr Ratios kDefaultRatios = {0.7, 0.1, 0.2};

// Largest-remainder apportionment of n items to the three ratios.
std::array<std::size_t, 3> apportion(std::size_t n, const Ratios& ratios);

// Stratified shuffle split. Split sizes match apportion(n) exactly; each
// class is apportioned separately inside those sizes.
Split split_random(const std::vector<int>& labels, const Ratios& ratios, std::uint64_t seed);

class GiantComponentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ComponentSplit {
  Split split;
  std::vector<int> node_split;  // per graph node: 0/1/2, or -1 for unlabelled components
  std::size_t components = 0;   // components holding at least one labelled account
  std::array<std::size_t, 3> component_counts{};
};

// Undirected connected components, label per node in [0, count).
std::vector<std::uint32_t> connected_components(const graphbuild::AccountGraph& g,
                                                std::size_t* count = nullptr);

// Whole components go to one split, assigned in shuffled order to the split
// furthest below its ratio of the components seen so far. `accounts` are
// graph node ids with parallel `labels`.
ComponentSplit split_components(const graphbuild::AccountGraph& g,
                                const std::vector<std::uint32_t>& accounts,
                                const std::vector<int>& labels, const Ratios& ratios,
                                std::uint64_t seed, double max_component_share = 0.7);

// Keeps every fraud account plus up to `ratio` times as many benign ones,
// drawn at random. Returns positions into `labels`, ascending.
std::vector<std::size_t> downsample_benign(const std::vector<int>& labels, double ratio,
                                           std::uint64_t seed);

// Edges whose endpoints sit in different splits (unassigned nodes excluded).
std::size_t cross_split_edges(const graphbuild::AccountGraph& g, const std::vector<int>& node_split);

}  // namespace txfuse::harness
