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
#include <cmath>
#include <fstream>

#include "txfuse/common/parallel.hpp"
#include "txfuse/numcore/adam.hpp"
#include "txfuse/numcore/batch.hpp"
#include "txfuse/txclm/txclm.hpp"

namespace txfuse::txclm {

std::pair<std::vector<std::uint32_t>, MaskPlan> apply_mask(std::span<const std::uint32_t> ids,
                                                           double mask_ratio,
                                                           std::size_t vocab_size, Rng& rng) {
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) {
    throw std::invalid_argument("apply_mask: mask_ratio must be in [0, 1]");
  }
  std::vector<std::size_t> maskable;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!txcorpus::is_special(ids[i])) maskable.push_back(i);
  }
  const auto count = static_cast<std::size_t>(
      std::llround(mask_ratio * static_cast<double>(maskable.size())));
  // Partial Fisher-Yates: the first `count` slots become the sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(maskable[i], maskable[i + rng.below(maskable.size() - i)]);
  }
  maskable.resize(count);
  std::sort(maskable.begin(), maskable.end());

  std::vector<std::uint32_t> out(ids.begin(), ids.end());
  MaskPlan plan;
  plan.positions = maskable;
  const std::size_t ordinary = vocab_size > txcorpus::kNumReserved
                                   ? vocab_size - txcorpus::kNumReserved
                                   : 0;
  for (std::size_t pos : plan.positions) {
    plan.original.push_back(ids[pos]);
    const double u = rng.uniform();
    if (u < 0.8 || ordinary == 0) {
      plan.actions.push_back(MaskAction::kMaskToken);
      out[pos] = txcorpus::kMask;
    } else if (u < 0.9) {
      plan.actions.push_back(MaskAction::kRandomToken);
      out[pos] = static_cast<std::uint32_t>(txcorpus::kNumReserved + rng.below(ordinary));
    } else {
      plan.actions.push_back(MaskAction::kKeep);
    }
  }
  return {std::move(out), std::move(plan)};
}

LossValue mlm_loss(Var logits, std::span<const std::uint32_t> targets) {
  Tape& tape = *logits.tape();
  if (targets.empty()) {
    if (logits.rows() != 0 && logits.value().size() != 0) {
      throw numcore::ShapeError("mlm_loss: logits given for an empty mask");
    }
    return {tape.constant(Tensor::scalar(0.0)), true};
  }
  if (logits.rows() != targets.size()) {
    throw numcore::ShapeError("mlm_loss: one logit row per masked position expected");
  }
  std::vector<std::size_t> cols(targets.begin(), targets.end());
  for (std::size_t c : cols) {
    if (c >= logits.cols()) throw std::out_of_range("mlm_loss: target id out of range");
  }
  Var picked = numcore::pick(numcore::log_softmax_rows(logits), cols);
  return {numcore::scale(numcore::mean(picked), -1.0), false};
}

LossValue token_contrastive_loss(Var enhanced, Var anchors, std::span<const std::size_t> targets,
                                 double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("token_contrastive_loss: tau must be positive");
  Tape& tape = *enhanced.tape();
  if (targets.empty()) return {tape.constant(Tensor::scalar(0.0)), true};
  if (enhanced.rows() != targets.size() || enhanced.cols() != anchors.cols()) {
    throw numcore::ShapeError("token_contrastive_loss: shape mismatch");
  }
  for (std::size_t t : targets) {
    if (t >= anchors.rows()) throw std::out_of_range("token_contrastive_loss: bad target");
  }
  Var logp = numcore::log_softmax_rows(numcore::cosine_matrix(enhanced, anchors), tau);
  return {numcore::scale(numcore::mean(numcore::pick(logp, targets)), -1.0), false};
}

SentenceLoss sentence_loss(Tape& tape, EncoderParams& enhanced, const Tensor& anchor_reps,
                           std::span<const std::uint32_t> ids, const MaskPlan& plan,
                           std::span<const std::uint32_t> masked_ids,
                           const PretrainConfig& config) {
  SentenceLoss out;
  if (plan.empty()) {
    out.total = tape.constant(Tensor::scalar(0.0));
    return out;
  }
  if (anchor_reps.rows() != ids.size() || masked_ids.size() != ids.size()) {
    throw numcore::ShapeError("sentence_loss: anchor/sentence length mismatch");
  }
  Var h = encode(tape, enhanced, masked_ids);
  Var hm = numcore::gather_rows(h, plan.positions);
  Var logits = numcore::add(numcore::matmul(hm, tape.param(enhanced.mlm_w)),
                            tape.param(enhanced.mlm_b));
  Var total = mlm_loss(logits, plan.original).loss;
  out.mlm = total.value().item();
  if (config.contrastive && config.contrastive_weight != 0.0) {
    // Candidates are every token after [CLS].
    const std::size_t n = ids.size();
    Tensor cand({n - 1, anchor_reps.cols()});
    std::copy(anchor_reps.data().begin() + static_cast<std::ptrdiff_t>(anchor_reps.cols()),
              anchor_reps.data().end(), cand.data().begin());
    std::vector<std::size_t> targets;
    for (std::size_t p : plan.positions) targets.push_back(p - 1);
    Var ta = token_contrastive_loss(hm, tape.constant(std::move(cand)), targets, config.tau).loss;
    out.contrastive = ta.value().item();
    total = numcore::add(total, numcore::scale(ta, config.contrastive_weight));
  }
  out.total = total;
  return out;
}

PretrainResult pretrain(const std::vector<txcorpus::TransactionSentence>& corpus,
                        const EncoderConfig& encoder, const PretrainConfig& config) {
  if (corpus.empty()) throw std::invalid_argument("txclm::pretrain: empty corpus");
  if (config.batch_size == 0) throw std::invalid_argument("txclm::pretrain: batch_size is 0");
  if (!(config.tau > 0.0)) throw std::invalid_argument("txclm::pretrain: tau must be positive");

  Rng init_rng = Rng::stream(config.seed, "txclm.init");
  PretrainResult result{EncoderParams::init(encoder, init_rng), {}, {}};
  result.anchor = result.params.clone();
  result.anchor.set_trainable(false);
  EncoderParams& model = result.params;
  ParamList params = model.params();

  const std::size_t n = corpus.size();
  std::vector<Tensor> anchor_reps(n);
  parallel_for(
      n, [&](std::size_t i) { anchor_reps[i] = encode(result.anchor, corpus[i].ids); },
      config.threads);

  numcore::AdamState adam(params, numcore::AdamConfig{.lr = config.lr});
  const Rng order_root = Rng::stream(config.seed, "txclm.order");
  const Rng mask_root = Rng::stream(config.seed, "txclm.mask");
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng order_rng = order_root.fork(epoch);
    order_rng.shuffle(order);
    double sum_mlm = 0.0, sum_ta = 0.0, sum_total = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t b = std::min(config.batch_size, n - start);
      std::vector<std::vector<std::uint32_t>> masked(b);
      std::vector<MaskPlan> plans(b);
      for (std::size_t j = 0; j < b; ++j) {
        const std::size_t idx = order[start + j];
        Rng r = mask_root.fork(epoch, idx);
        std::tie(masked[j], plans[j]) =
            apply_mask(corpus[idx].ids, config.mask_ratio, encoder.vocab_size, r);
      }
      std::vector<double> mlm(b, 0.0), ta(b, 0.0), totals;
      numcore::GradBuffer grads = numcore::batch_gradients(
          params, b,
          [&](std::size_t j, Tape& tape) {
            const std::size_t idx = order[start + j];
            SentenceLoss l = sentence_loss(tape, model, anchor_reps[idx], corpus[idx].ids,
                                           plans[j], masked[j], config);
            mlm[j] = l.mlm;
            ta[j] = l.contrastive;
            return l.total;
          },
          &totals, config.threads);
      double batch_total = 0.0;
      for (std::size_t j = 0; j < b; ++j) {
        batch_total += totals[j];
        if (plans[j].empty()) continue;
        sum_mlm += mlm[j];
        sum_ta += ta[j];
        sum_total += totals[j];
        ++counted;
      }
      if (!std::isfinite(batch_total)) {
        if (!config.checkpoint_dir.empty()) model.save(config.checkpoint_dir / "last_good");
        throw DivergenceError("txclm::pretrain: non-finite loss in epoch " +
                              std::to_string(epoch + 1));
      }
      grads.scale(1.0 / static_cast<double>(b));
      numcore::adam_step(params, grads, adam);
    }
    const double denom = counted ? static_cast<double>(counted) : 1.0;
    result.log.push_back({epoch + 1, sum_mlm / denom, sum_ta / denom, sum_total / denom});
  }
  model.trained = true;
  model.validate();
  if (!config.checkpoint_dir.empty()) {
    model.save(config.checkpoint_dir / "final");
    write_log_csv(config.checkpoint_dir / "pretrain_log.csv", result.log);
  }
  return result;
}

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_log_csv: cannot write " + path.string());
  out.precision(17);
  out << "epoch,mlm,contrastive,combined\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.mlm << ',' << e.contrastive << ',' << e.combined << '\n';
  }
}

}  // namespace txfuse::txclm
