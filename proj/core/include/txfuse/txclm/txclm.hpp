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
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "txfuse/common/rng.hpp"
#include "txfuse/numcore/ops.hpp"
#include "txfuse/numcore/params.hpp"
#include "txfuse/txcorpus/vocab.hpp"

namespace txfuse::txclm {

using numcore::ParamList;
using numcore::Tape;
using numcore::Tensor;
using numcore::Var;

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_lm = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t max_seq_len = 128;
};

struct EncoderLayer {
  Tensor ln1_g, ln1_b;
  Tensor wq, wk, wv, wo;
  Tensor ln2_g, ln2_b;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
};

// Pre-norm transformer encoder with learned positions and an MLM head.
struct EncoderParams {
  EncoderConfig config;
  Tensor tok_emb;  // |V| x d
  Tensor pos_emb;  // max_seq_len x d
  std::vector<EncoderLayer> layers;
  Tensor mlm_w;  // d x |V|
  Tensor mlm_b;  // 1 x |V|
  bool trained = false;

  static EncoderParams init(const EncoderConfig& config, Rng& rng);
  EncoderParams clone() const;
  ParamList params();
  void set_trainable(bool on);
  void validate() const;

  void save(const std::filesystem::path& dir) const;
  static EncoderParams load(const std::filesystem::path& dir);
};

// Contextual representations, one row per input token.
Var encode(Tape& tape, EncoderParams& p, std::span<const std::uint32_t> ids);
Tensor encode(const EncoderParams& p, std::span<const std::uint32_t> ids);

enum class MaskAction : std::uint8_t { kMaskToken, kRandomToken, kKeep };

struct MaskPlan {
  std::vector<std::size_t> positions;  // ascending
  std::vector<std::uint32_t> original;
  std::vector<MaskAction> actions;
  bool empty() const { return positions.empty(); }
};

// Picks round(ratio * maskable) positions among non-special tokens and
// applies the 80/10/10 replacement rule. Random replacements are drawn
// from the non-reserved vocabulary.
std::pair<std::vector<std::uint32_t>, MaskPlan> apply_mask(std::span<const std::uint32_t> ids,
                                                           double mask_ratio,
                                                           std::size_t vocab_size, Rng& rng);

struct LossValue {
  Var loss;
  bool degenerate = false;  // no masked positions; loss is 0
};

// Mean negative log-likelihood of `targets` under row-wise logits.
LossValue mlm_loss(Var logits, std::span<const std::uint32_t> targets);

// Token-aware contrastive loss. Row r of `enhanced` is matched against all
// rows of `anchors` using cosine / tau logits, with anchors[targets[r]] as
// the positive. Anchors should be constants. Mean over rows.
LossValue token_contrastive_loss(Var enhanced, Var anchors,
                                 std::span<const std::size_t> targets, double tau);

struct PretrainConfig {
  double mask_ratio = 0.15;
  double tau = 0.1;
  double contrastive_weight = 1.0;
  bool contrastive = true;
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  // Directory for the final and last-good checkpoints; empty disables.
  std::filesystem::path checkpoint_dir;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mlm = 0.0;
  double contrastive = 0.0;
  double combined = 0.0;
};

struct PretrainResult {
  EncoderParams params;       // enhanced model
  EncoderParams anchor;       // frozen copy of the initialization
  std::vector<EpochLog> log;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Trains the enhanced encoder on L_MLM + w * L_Ta against a frozen anchor
// that sees the unmasked sentence.
PretrainResult pretrain(const std::vector<txcorpus::TransactionSentence>& corpus,
                        const EncoderConfig& encoder, const PretrainConfig& config);

// Sentence loss used by pretrain, exposed for gradient checks. `anchor_reps`
// is the anchor encoding of the unmasked sentence.
struct SentenceLoss {
  Var total;
  double mlm = 0.0;
  double contrastive = 0.0;
};
SentenceLoss sentence_loss(Tape& tape, EncoderParams& enhanced, const Tensor& anchor_reps,
                           std::span<const std::uint32_t> ids, const MaskPlan& plan,
                           std::span<const std::uint32_t> masked_ids,
                           const PretrainConfig& config);

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

// Token-level representation matrix of one account. Throws if the
// parameters are not marked trained.
Tensor account_embedding(const EncoderParams& p, std::span<const std::uint32_t> ids);

// Mean pairwise cosine over non-special token rows.
double self_similarity(const Tensor& reps, std::span<const std::uint32_t> ids);
double self_similarity(const Tensor& reps);

}  // namespace txfuse::txclm
