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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "support/gradcheck.hpp"
#include "support/toy_corpus.hpp"
#include "txfuse/txclm/txclm.hpp"

namespace txfuse::txclm {
namespace {

using txcorpus::kCls;
using txcorpus::kSep;

EncoderConfig tiny_config(std::size_t vocab = 12) {
  EncoderConfig c;
  c.vocab_size = vocab;
  c.d_lm = 8;
  c.layers = 2;
  c.heads = 2;
  c.max_seq_len = 12;
  return c;
}

std::vector<std::uint32_t> random_sentence(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<std::uint32_t> ids(n);
  ids[0] = kCls;
  for (std::size_t i = 1; i < n; ++i) {
    ids[i] = i % 8 == 0 ? kSep
                        : static_cast<std::uint32_t>(txcorpus::kNumReserved +
                                                     rng.below(vocab - txcorpus::kNumReserved));
  }
  return ids;
}

struct Corpus {
  txcorpus::Vocabulary vocab;
  std::vector<txcorpus::TransactionSentence> sentences;
};

Corpus toy(std::size_t n, std::uint64_t seed) {
  auto tokens = testing::toy_corpus(n, seed);
  Corpus c{txcorpus::Vocabulary::build(tokens), {}};
  c.sentences = txcorpus::encode_corpus(tokens, c.vocab);
  return c;
}

TEST(Encode, DeterministicAndShaped) {
  Rng rng(1);
  auto p = EncoderParams::init(tiny_config(), rng);
  auto ids = random_sentence(10, 12, rng);
  Tensor a = encode(p, ids);
  Tensor b = encode(p, ids);
  EXPECT_EQ(a.shape(), (numcore::Shape{10, 8}));
  EXPECT_EQ(a.storage(), b.storage());
  Tape tape;
  EXPECT_EQ(encode(tape, p, ids).value().storage(), a.storage());
}

TEST(Encode, ZeroedBlocksGiveEmbeddingPlusPosition) {
  Rng rng(2);
  auto p = EncoderParams::init(tiny_config(), rng);
  for (auto& l : p.layers) {
    for (Tensor* t : {&l.wq, &l.wk, &l.wv, &l.wo, &l.ff1_w, &l.ff1_b, &l.ff2_w, &l.ff2_b}) {
      std::fill(t->data().begin(), t->data().end(), 0.0);
    }
  }
  auto ids = random_sentence(9, 12, rng);
  Tensor h = encode(p, ids);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t k = 0; k < 8; ++k) {
      EXPECT_EQ(h.at(i, k), p.tok_emb.at(ids[i], k) + p.pos_emb.at(i, k));
    }
  }
}

TEST(Encode, SwappingTwoTokensChangesBothRows) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = EncoderParams::init(tiny_config(), rng);
    auto ids = random_sentence(7, 12, rng);
    ids[2] = 6;
    ids[5] = 9;
    auto swapped = ids;
    std::swap(swapped[2], swapped[5]);
    Tensor a = encode(p, ids);
    Tensor b = encode(p, swapped);
    double d2 = 0.0, d5 = 0.0;
    for (std::size_t k = 0; k < 8; ++k) {
      d2 += std::abs(a.at(2, k) - b.at(5, k));
      d5 += std::abs(a.at(5, k) - b.at(2, k));
    }
    // The same token at a different position gets a different vector.
    EXPECT_GT(d2, 1e-6);
    EXPECT_GT(d5, 1e-6);
  }
}

TEST(Encode, RejectsBadInput) {
  Rng rng(4);
  auto p = EncoderParams::init(tiny_config(), rng);
  std::vector<std::uint32_t> bad = {kCls, 12};
  EXPECT_THROW(encode(p, bad), std::out_of_range);
  std::vector<std::uint32_t> longer(13, 5);
  EXPECT_THROW(encode(p, longer), std::invalid_argument);
  auto cfg = tiny_config();
  cfg.heads = 3;
  EXPECT_THROW(EncoderParams::init(cfg, rng), std::invalid_argument);
}

TEST(Mask, RatioZeroAndOne) {
  Rng rng(5);
  std::vector<std::uint32_t> ids = {kCls, 5, 6, 7, 8, 9, 10, 11, kSep, 5, 6, 7};
  auto [same, empty] = apply_mask(ids, 0.0, 12, rng);
  EXPECT_EQ(same, ids);
  EXPECT_TRUE(empty.empty());
  // 10 maskable tokens.
  auto [all, plan] = apply_mask(ids, 1.0, 12, rng);
  EXPECT_EQ(plan.positions.size(), 10u);
  for (std::size_t pos : plan.positions) {
    EXPECT_NE(pos, 0u);
    EXPECT_NE(pos, 8u);
  }
  EXPECT_EQ(all[0], kCls);
  EXPECT_EQ(all[8], kSep);
  EXPECT_THROW(apply_mask(ids, 1.5, 12, rng), std::invalid_argument);
}

TEST(Mask, CountRoundingAndDeterminism) {
  std::vector<std::uint32_t> ids(41, 7);
  ids[0] = kCls;
  Rng a(9), b(9);
  auto [ma, pa] = apply_mask(ids, 0.15, 20, a);
  auto [mb, pb] = apply_mask(ids, 0.15, 20, b);
  EXPECT_EQ(pa.positions.size(), 6u);  // round(0.15 * 40)
  EXPECT_EQ(pa.positions, pb.positions);
  EXPECT_EQ(ma, mb);
  for (std::size_t i = 0; i < pa.positions.size(); ++i) EXPECT_EQ(pa.original[i], 7u);
}

TEST(Mask, ActionsFollowEightyTenTen) {
  Rng rng(10);
  std::vector<std::uint32_t> ids(101, 7);
  ids[0] = kCls;
  std::size_t counts[3] = {0, 0, 0};
  std::size_t altered = 0, planned_changes = 0;
  for (int t = 0; t < 400; ++t) {
    auto [m, plan] = apply_mask(ids, 0.5, 30, rng);
    for (std::size_t i = 0; i < plan.positions.size(); ++i) {
      ++counts[static_cast<int>(plan.actions[i])];
      if (plan.actions[i] != MaskAction::kKeep) ++planned_changes;
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (m[i] != ids[i]) ++altered;
      if (!std::binary_search(plan.positions.begin(), plan.positions.end(), i)) {
        EXPECT_EQ(m[i], ids[i]);
      }
    }
  }
  const double total = static_cast<double>(counts[0] + counts[1] + counts[2]);
  EXPECT_NEAR(counts[0] / total, 0.8, 0.01);
  EXPECT_NEAR(counts[1] / total, 0.1, 0.01);
  EXPECT_NEAR(counts[2] / total, 0.1, 0.01);
  EXPECT_LE(altered, planned_changes);
}

TEST(MlmLoss, UniformLogitsGiveLogV) {
  Tape tape;
  Var logits = tape.constant(Tensor::zeros(3, 10));
  std::vector<std::uint32_t> targets = {1, 4, 9};
  auto l = mlm_loss(logits, targets);
  EXPECT_FALSE(l.degenerate);
  EXPECT_NEAR(l.loss.value().item(), std::log(10.0), 1e-12);
}

TEST(MlmLoss, LargeMarginDrivesLossToZero) {
  const double margin = 20.0;
  double prev = INFINITY;
  for (std::size_t v : {2u, 5u, 10u}) {
    for (double m : {1.0, 5.0, margin}) {
      Tensor t = Tensor::zeros(1, v);
      t[1] = m;
      Tape tape;
      std::vector<std::uint32_t> targets = {1};
      const double got = mlm_loss(tape.constant(t), targets).loss.value().item();
      // -log(e^m / (e^m + v - 1)) = log(1 + (v - 1) e^-m)
      const double oracle = std::log1p(static_cast<double>(v - 1) * std::exp(-m));
      EXPECT_NEAR(got, oracle, 1e-9 * oracle);
      if (v == 5) {
        EXPECT_LT(got, prev);
        prev = got;
      }
    }
  }
  // At margin 20 the loss is below 1e-8 for vocabularies of up to 5 entries.
  Tensor t = Tensor::zeros(1, 5);
  t[0] = margin;
  Tape tape;
  std::vector<std::uint32_t> targets = {0};
  EXPECT_LT(mlm_loss(tape.constant(t), targets).loss.value().item(), 1e-8);
}

TEST(MlmLoss, EmptyMaskAndShapeErrors) {
  Tape tape;
  auto l = mlm_loss(tape.constant(Tensor({0, 10})), {});
  EXPECT_TRUE(l.degenerate);
  EXPECT_EQ(l.loss.value().item(), 0.0);
  std::vector<std::uint32_t> two = {1, 2};
  EXPECT_THROW(mlm_loss(tape.constant(Tensor::zeros(3, 10)), two), numcore::ShapeError);
}

TEST(ContrastiveLoss, ThreeTokenExample) {
  // cos(h~_i, h_i) = 1, cos(h~_i, h_j) = 0 otherwise, tau = 1.
  const double oracle = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  EXPECT_NEAR(oracle, 0.551445, 1e-6);
  Tape tape;
  Var enhanced = tape.constant(Tensor::matrix(1, 3, {0.0, 2.0, 0.0}));
  Var anchors = tape.constant(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  std::vector<std::size_t> target = {1};
  auto l = token_contrastive_loss(enhanced, anchors, target, 1.0);
  EXPECT_NEAR(l.loss.value().item(), oracle, 1e-12);
}

TEST(ContrastiveLoss, EquidistantAnchorsGiveLogN) {
  Rng rng(12);
  for (std::size_t n : {2u, 5u, 12u}) {
    // Anchors orthogonal to the query: all logits equal.
    Tensor anchors({n, n + 1});
    for (std::size_t i = 0; i < n; ++i) anchors.at(i, i) = 1.0 + rng.uniform();
    Tensor q({1, n + 1});
    q.at(0, n) = 1.0;
    Tape tape;
    std::vector<std::size_t> target = {n / 2};
    auto l = token_contrastive_loss(tape.constant(q), tape.constant(anchors), target, 0.1);
    EXPECT_NEAR(l.loss.value().item(), std::log(static_cast<double>(n)), 1e-12);
  }
}

TEST(ContrastiveLoss, EmptyAndInvalid) {
  Tape tape;
  Var a = tape.constant(Tensor::zeros(2, 3));
  auto l = token_contrastive_loss(tape.constant(Tensor({0, 3})), a, {}, 0.1);
  EXPECT_TRUE(l.degenerate);
  EXPECT_EQ(l.loss.value().item(), 0.0);
  std::vector<std::size_t> t = {0};
  EXPECT_THROW(token_contrastive_loss(tape.constant(Tensor::zeros(1, 3)), a, t, 0.0),
               std::invalid_argument);
}

TEST(ContrastiveLoss, BoundedByLogitRange) {
  // Cosine logits lie in [-1/tau, 1/tau], so the loss is at most ln n + 2/tau.
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(11), m = 1 + rng.below(4), d = 1 + rng.below(6);
    const double tau = rng.uniform(0.05, 2.0);
    Tensor e({m, d}), a({n, d});
    for (double& x : e.data()) x = rng.normal();
    for (double& x : a.data()) x = rng.normal();
    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < m; ++i) targets.push_back(rng.below(n));
    Tape tape;
    const double l = token_contrastive_loss(tape.constant(e), tape.constant(a), targets, tau)
                         .loss.value()
                         .item();
    EXPECT_LE(l, std::log(static_cast<double>(n)) + 2.0 / tau + 1e-12);
    EXPECT_GE(l, 0.0);
  }
}

class SentenceGradient : public ::testing::TestWithParam<int> {};

TEST_P(SentenceGradient, MatchesFiniteDifferences) {
  Rng rng(500 + GetParam());
  auto cfg = tiny_config();
  auto model = EncoderParams::init(cfg, rng);
  auto anchor = EncoderParams::init(cfg, rng);
  const std::size_t n = 3 + rng.below(10);
  auto ids = random_sentence(n, cfg.vocab_size, rng);
  Tensor anchor_reps = encode(anchor, ids);
  auto [masked, plan] = apply_mask(ids, 0.4, cfg.vocab_size, rng);
  ASSERT_FALSE(plan.empty());
  PretrainConfig pc;
  pc.tau = 0.5;
  auto res = testing::grad_check(model.params(), [&](Tape& t) {
    return sentence_loss(t, model, anchor_reps, ids, plan, masked, pc).total;
  });
  EXPECT_LE(res.worst_rel_error, 1e-4) << res.worst_param;
}

INSTANTIATE_TEST_SUITE_P(RandomSentences, SentenceGradient, ::testing::Range(0, 5));

TEST(Pretrain, LossDecreasesAndAnchorStaysFrozen) {
  auto c = toy(200, 21);
  EncoderConfig ec;
  ec.vocab_size = c.vocab.size();
  PretrainConfig pc;
  pc.epochs = 5;
  pc.seed = 77;
  auto r = pretrain(c.sentences, ec, pc);
  ASSERT_EQ(r.log.size(), 5u);
  EXPECT_LT(r.log.back().combined, r.log.front().combined);
  EXPECT_GT(r.log.front().contrastive, 0.0);
  // The anchor equals a fresh initialization from the same stream.
  Rng init = Rng::stream(77, "txclm.init");
  auto fresh = EncoderParams::init(ec, init);
  EXPECT_EQ(numcore::checksum(r.anchor.params()), numcore::checksum(fresh.params()));
  EXPECT_NE(numcore::checksum(r.params.params()), numcore::checksum(fresh.params()));
  EXPECT_TRUE(r.params.trained);
}

TEST(Pretrain, ZeroWeightEqualsDisabledAndRunsRepeat) {
  auto c = toy(40, 22);
  EncoderConfig ec;
  ec.vocab_size = c.vocab.size();
  ec.d_lm = 16;
  PretrainConfig zero;
  zero.epochs = 2;
  zero.contrastive_weight = 0.0;
  PretrainConfig off = zero;
  off.contrastive_weight = 1.0;
  off.contrastive = false;
  auto a = pretrain(c.sentences, ec, zero);
  auto b = pretrain(c.sentences, ec, off);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t e = 0; e < a.log.size(); ++e) {
    EXPECT_EQ(a.log[e].combined, b.log[e].combined);
    EXPECT_EQ(a.log[e].mlm, b.log[e].mlm);
  }
  EXPECT_EQ(numcore::checksum(a.params.params()), numcore::checksum(b.params.params()));
  auto again = pretrain(c.sentences, ec, zero);
  EXPECT_EQ(numcore::checksum(a.params.params()), numcore::checksum(again.params.params()));
}

TEST(Pretrain, CheckpointRoundTrip) {
  auto c = toy(20, 23);
  EncoderConfig ec;
  ec.vocab_size = c.vocab.size();
  ec.d_lm = 8;
  ec.heads = 2;
  PretrainConfig pc;
  pc.epochs = 1;
  pc.checkpoint_dir = std::filesystem::temp_directory_path() / "txfuse_txclm_test";
  auto r = pretrain(c.sentences, ec, pc);
  auto back = EncoderParams::load(pc.checkpoint_dir / "final");
  EXPECT_TRUE(back.trained);
  EXPECT_EQ(numcore::checksum(back.params()), numcore::checksum(r.params.params()));
  EXPECT_TRUE(std::filesystem::exists(pc.checkpoint_dir / "pretrain_log.csv"));
  std::filesystem::remove_all(pc.checkpoint_dir);
  EXPECT_THROW(pretrain({}, ec, pc), std::invalid_argument);
}

TEST(AccountEmbedding, ShapeAndTrainedFlag) {
  Rng rng(30);
  auto p = EncoderParams::init(tiny_config(), rng);
  auto ids = random_sentence(9, 12, rng);
  EXPECT_THROW(account_embedding(p, ids), std::logic_error);
  p.trained = true;
  Tensor s = account_embedding(p, ids);
  EXPECT_EQ(s.rows(), ids.size());
  EXPECT_EQ(s.storage(), account_embedding(p, ids).storage());
}

TEST(SelfSimilarity, Definitions) {
  EXPECT_DOUBLE_EQ(self_similarity(Tensor::matrix(3, 2, {1, 2, 1, 2, 1, 2})), 1.0);
  EXPECT_DOUBLE_EQ(self_similarity(Tensor::matrix(3, 3, {1, 0, 0, 0, 2, 0, 0, 0, 3})), 0.0);
  // cos = 0.5 at 60 degrees.
  EXPECT_NEAR(self_similarity(Tensor::matrix(2, 2, {1, 0, 0.5, std::sqrt(3.0) / 2})), 0.5,
              1e-15);
  EXPECT_THROW(self_similarity(Tensor::matrix(1, 2, {1, 0})), std::invalid_argument);
  // [CLS] and [SEP] rows are ignored.
  std::vector<std::uint32_t> ids = {kCls, 5, kSep, 6};
  Tensor reps = Tensor::matrix(4, 2, {9, -3, 1, 0, -4, 7, 0, 1});
  EXPECT_DOUBLE_EQ(self_similarity(reps, ids), 0.0);
}

}  // namespace
}  // namespace txfuse::txclm
