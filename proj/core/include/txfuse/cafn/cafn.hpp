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
#include <string>
#include <vector>

#include "txfuse/common/rng.hpp"
#include "txfuse/numcore/params.hpp"
#include "txfuse/numcore/tape.hpp"
#include "txfuse/numcore/tensor.hpp"

namespace txfuse::cafn {

using numcore::Tape;
using numcore::Tensor;
using numcore::Var;

// kAdd: F = mean(S) W_s + x W_g.  kLinear: F = tanh([mean(S), x] W_lin + b).
// kNoGraph: W_g pinned at zero.  kNoLm: semantic rows pinned at zero.
enum class Ablation { kNone, kAdd, kLinear, kNoGraph, kNoLm };
Ablation parse_ablation(const std::string& s);
std::string to_string(Ablation a);

struct CafnConfig {
  std::size_t d_s = 64;  // semantic width
  std::size_t d_h = 64;  // graph embedding width
  std::size_t d_f = 64;
  std::size_t k_s = 8;
  std::size_t k_f = 4;
  Ablation ablation = Ablation::kNone;
};

// Row-vector convention throughout: projections multiply on the right, so
// W_s is stored d_s x d_f and W_g d_h x d_f.
struct CafnParams {
  CafnConfig config;
  Tensor a_s, wq_s, wk_s, wv_s;
  Tensor w_s, w_g, b;
  Tensor a_f, wq_f, wk_f, wv_f;
  Tensor lin_w;  // (d_s + d_h) x d_f, linear ablation only
  Tensor mlp1_w, mlp1_b, mlp2_w, mlp2_b;

  static CafnParams init(const CafnConfig& config, Rng& rng);
  // Trainable parameters for the configured ablation, in checkpoint order.
  numcore::ParamList params();
  void validate() const;
  void save(const std::filesystem::path& dir) const;
  static CafnParams load(const std::filesystem::path& dir);
};

// softmax((A W_Q)(S W_K)^T / sqrt(d_s)) S W_V, k_s x d_s.
Var aggregate_semantic(Tape& tape, CafnParams& p, Var s);
// tanh(Z^s W_s + x W_g + b) with x (1 x d_h) broadcast over rows, k_s x d_f.
Var cross_perspective_fuse(Tape& tape, CafnParams& p, Var zs, Var x);
// Fusion-token attention over Z^sg, mean-pooled to 1 x d_f.
Var fuse(Tape& tape, CafnParams& p, Var zsg);
// Two-layer MLP, 1 x 2 logits.
Var classify_logits(Tape& tape, CafnParams& p, Var f);
// Full forward for one account under the configured ablation.
Var forward(Tape& tape, CafnParams& p, Var s, Var x);

// Frozen inputs: per-account token representations and graph embeddings.
struct FusionDataset {
  std::vector<Tensor> semantic;  // N_i x d_s
  Tensor graph;                  // n x d_h
  std::vector<int> labels;       // 1 = fraud
  std::vector<bool> degenerate;  // empty token set replaced by one zero row

  std::size_t size() const { return labels.size(); }
  void validate(const CafnConfig& config) const;
};

// Probability of {normal, fraud} for each listed account.
Tensor predict_proba(const CafnParams& p, const FusionDataset& data,
                     std::span<const std::size_t> ids, std::size_t threads = 1);
std::vector<int> predict(const Tensor& proba);

struct Metrics {
  double precision = 0, recall = 0, f1 = 0, bacc = 0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  bool precision_undefined = false;  // no positive predictions
  bool recall_undefined = false;     // no positive labels
};
Metrics metrics(std::span<const int> predictions, std::span<const int> labels);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t patience = 10;
  bool class_weighting = true;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path checkpoint_dir;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
};

struct TrainResult {
  CafnParams params;  // best validation F1
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  std::vector<EpochLog> log;
  std::vector<double> class_weights;
};

// weight * cross entropy of one account.
Var account_loss(Tape& tape, CafnParams& p, const FusionDataset& data, std::size_t id,
                 double weight);

// Inverse class frequency N / (2 N_c) over `ids`.
std::vector<double> class_weights(const FusionDataset& data, std::span<const std::size_t> ids);

TrainResult train(const FusionDataset& data, std::span<const std::size_t> train_ids,
                  std::span<const std::size_t> val_ids, const CafnConfig& model,
                  const TrainConfig& config);

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

}  // namespace txfuse::cafn
