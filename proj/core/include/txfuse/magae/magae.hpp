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

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "txfuse/common/rng.hpp"
#include "txfuse/labor/labor.hpp"
#include "txfuse/numcore/params.hpp"
#include "txfuse/numcore/tape.hpp"
#include "txfuse/numcore/tensor.hpp"

namespace txfuse::magae {

using numcore::Tape;
using numcore::Tensor;
using numcore::Var;

struct MagaeConfig {
  std::size_t d_node = 22;
  std::size_t d_h = 64;
  std::size_t layers = 2;
};

// How neighbour rows enter the mean. Relative edge weights are rescaled to
// average 1 per node, so with uniform weights the layer is a plain mean
// over the node and its neighbours.
struct AggregationOptions {
  bool edge_weights = true;
  // Scale sampled edges by their importance and divide by the full
  // neighbourhood size; when false, take the mean over what was sampled.
  bool debias = true;
};

struct MagaeParams {
  MagaeConfig config;
  Tensor x_mask;  // 1 x d_node
  std::vector<Tensor> enc_w, enc_b, enc_slope;
  Tensor h_dmask;  // 1 x d_h
  Tensor dec_w, dec_b;
  bool trained = false;

  static MagaeParams init(const MagaeConfig& config, Rng& rng);
  numcore::ParamList params();
  void validate() const;
  void save(const std::filesystem::path& dir) const;
  static MagaeParams load(const std::filesystem::path& dir);
};

// Masked node rows, as local ids inside the batch prefix.
struct NodeMaskPlan {
  std::vector<std::size_t> rows;
  double ratio = 0.0;
  bool empty() const { return rows.empty(); }
};

// Chooses round(ratio * num_seeds) of the first num_seeds rows.
NodeMaskPlan plan_node_mask(std::size_t num_seeds, double ratio, Rng& rng);

// Masked rows of x replaced by x_mask.
Var mask_nodes(Var x, const NodeMaskPlan& plan, Var x_mask);
Tensor mask_nodes(const Tensor& x, const NodeMaskPlan& plan, const Tensor& x_mask);

// One mean-aggregation over `hop`: rows [0, prefix[h]) from rows of x.
Var aggregate(Var x, const labor::BatchAdjacency::Hop& hop, std::size_t rows,
              const AggregationOptions& opt);

// Encoder over hops [first_hop, first_hop + layers), deepest hop first.
// x holds a row for every node up to prefix[first_hop + layers]; the result
// has prefix[first_hop] rows.
Var encode(Tape& tape, MagaeParams& p, const labor::BatchAdjacency& adj, Var x,
           std::size_t first_hop, const AggregationOptions& opt = {});

Var remask(Var h, const NodeMaskPlan& plan, Var h_dmask);

// Linear message-passing layer d_h -> d_node over hop `hop`.
Var decode(Tape& tape, MagaeParams& p, const labor::BatchAdjacency& adj, Var h, std::size_t hop,
           const AggregationOptions& opt = {});

struct SceValue {
  Var loss;
  std::size_t skipped = 0;  // masked rows with an all-zero target
};

// Mean over the masked rows of (1 - cos(x_i, z_i))^gamma.
SceValue sce_loss(Var x, Var z, std::span<const std::size_t> masked, double gamma);

struct GaeTrainConfig {
  double mask_ratio = 0.6;
  double gamma = 2.0;
  std::vector<std::size_t> fanouts{10, 10, 10};  // decoder hop first
  labor::SamplerKind sampler = labor::SamplerKind::kLabor;
  labor::Direction direction = labor::Direction::kIn;
  AggregationOptions aggregation;
  std::size_t batch_size = 256;
  std::size_t epochs = 30;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path checkpoint_dir;
};

struct GaeEpochLog {
  std::size_t epoch = 0;
  double sce = 0.0;
  std::size_t skipped = 0;
};

struct GaeResult {
  MagaeParams params;
  std::vector<GaeEpochLog> log;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Self-supervised training on every node of the graph.
GaeResult pretrain(const labor::Neighborhood& nb, const Tensor& features,
                   const MagaeConfig& model, const GaeTrainConfig& config);

// Mask-free encoder output over full neighbourhoods, one row per node.
Tensor infer_embeddings(const labor::Neighborhood& nb, const Tensor& features,
                        const MagaeParams& params, const AggregationOptions& opt = {});

void write_log_csv(const std::filesystem::path& path, const std::vector<GaeEpochLog>& log);

}  // namespace txfuse::magae
