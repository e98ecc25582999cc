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
#include <functional>

#include "support/gradcheck.hpp"
#include "txfuse/common/rng.hpp"
#include "txfuse/numcore/adam.hpp"
#include "txfuse/numcore/checkpoint.hpp"
#include "txfuse/numcore/ops.hpp"

namespace txfuse::numcore {
namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  t.set_requires_grad(true);
  return t;
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Tape tape;
  Tensor a = Tensor::matrix(2, 2, {1.5, -2.0, 0.25, 4.0});
  Var out = matmul(tape.constant(Tensor::identity(2)), tape.constant(a));
  EXPECT_EQ(out.value().storage(), a.storage());
}

TEST(Matmul, HandComputedProduct) {
  Tape tape;
  Var out = matmul(tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4})),
                   tape.constant(Tensor::matrix(2, 1, {0, 1})));
  EXPECT_EQ(out.value().shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(out.value()[0], 2.0);
  EXPECT_DOUBLE_EQ(out.value()[1], 4.0);
}

TEST(Matmul, ZeroMatrixGivesZero) {
  Rng rng(3);
  Tape tape;
  Var out = matmul(tape.constant(Tensor::zeros(3, 4)), tape.constant(random_matrix(4, 5, rng)));
  for (double v : out.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, ShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(matmul(tape.constant(Tensor::zeros(2, 3)), tape.constant(Tensor::zeros(2, 3))),
               ShapeError);
}

TEST(Softmax, SymmetricRowIsUniform) {
  Tensor y = softmax_rows(Tensor::matrix(1, 2, {0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Softmax, ClosedFormLn3) {
  Tensor y = softmax_rows(Tensor::matrix(1, 2, {std::log(3.0), 0.0}), 1.0);
  EXPECT_NEAR(y[0], 0.75, 1e-15);
  EXPECT_NEAR(y[1], 0.25, 1e-15);
}

TEST(Softmax, HighTemperatureApproachesUniform) {
  Rng rng(11);
  Tensor x = random_matrix(3, 6, rng);
  Tensor y = softmax_rows(x, 1e6);
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 6.0, 1e-5);
}

TEST(Softmax, NonPositiveTemperatureRejected) {
  EXPECT_THROW(softmax_rows(Tensor::matrix(1, 2, {0, 0}), 0.0), std::invalid_argument);
  EXPECT_THROW(softmax_rows(Tensor::matrix(1, 2, {0, 0}), -1.0), std::invalid_argument);
}

TEST(Softmax, RowsSumToOneAndStayPositive) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.below(8), n = 1 + rng.below(8);
    Tensor x({m, n});
    for (double& v : x.data()) v = rng.uniform(-30.0, 30.0);
    Tensor y = softmax_rows(x, rng.uniform(0.05, 5.0));
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (double v : y.row(i)) {
        EXPECT_GT(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Backward, SquareAtThree) {
  Tensor x = make_param(Tensor::scalar(3.0));
  Tape tape;
  Var xv = tape.param(x);
  Var loss = mul(xv, xv);
  tape.backward(loss);
  tape.accumulate_param_grads();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, ConstantLossGivesZeroGradients) {
  Tensor w = make_param(Tensor::matrix(1, 2, {1.0, 2.0}));
  Tape tape;
  tape.param(w);
  Var loss = sum(tape.constant(Tensor::matrix(1, 2, {4.0, 5.0})));
  tape.backward(loss);
  tape.accumulate_param_grads();
  for (double g : w.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarLossRejected) {
  Tensor w = make_param(Tensor::zeros(2, 2));
  Tape tape;
  Var v = tape.param(w);
  EXPECT_THROW(tape.backward(v), ShapeError);
}

TEST(Backward, SumOfMatrixVectorMatchesFiniteDifferences) {
  Rng rng(21);
  Tensor w = random_matrix(4, 3, rng);
  Tensor v = random_matrix(3, 1, rng);
  ParamList params{{"w", &w}, {"v", &v}};
  auto res = testing::grad_check(params, [&](Tape& t) {
    return sum(matmul(t.param(w), t.param(v)));
  });
  EXPECT_LE(res.worst_rel_error, 1e-4) << res.worst_param;
  // d/dW sum(W v) = 1 v^T: every row equals v.
  Tape tape;
  Var loss = sum(matmul(tape.param(w), tape.constant(v)));
  tape.backward(loss);
  auto g = tape.grad_of(w);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(g[i * 3 + j], v[j]);
  }
}

TEST(Backward, IdenticalTapesGiveBitIdenticalGradients) {
  Rng rng(8);
  Tensor a = random_matrix(5, 4, rng), b = random_matrix(4, 6, rng);
  auto run = [&] {
    Tape tape;
    Var loss = mean(tanh(matmul(tape.param(a), tape.param(b))));
    tape.backward(loss);
    auto g = tape.grad_of(a);
    return std::vector<double>(g.begin(), g.end());
  };
  EXPECT_EQ(run(), run());
}

// Every differentiable op against central differences on random inputs in
// [-1, 1] with dimensions up to 8.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  Rng rng(1000 + GetParam());
  const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 2 + rng.below(6);
  Tensor a = random_matrix(m, k, rng);
  Tensor b = random_matrix(k, n, rng);
  Tensor c = random_matrix(m, n, rng);
  Tensor row = random_matrix(1, n, rng);
  Tensor col = random_matrix(m, 1, rng);
  Tensor pos = random_matrix(m, n, rng);
  for (double& v : pos.data()) v = 0.5 + std::abs(v);
  Tensor gain = random_matrix(1, n, rng);
  Tensor slope = random_matrix(1, n, rng);
  std::vector<std::size_t> ids, rows, src, dst, picks;
  std::vector<double> coef;
  for (std::size_t i = 0; i < m + 2; ++i) ids.push_back(rng.below(m));
  rows.push_back(rng.below(m));
  for (std::size_t e = 0; e < 2 * m; ++e) {
    src.push_back(rng.below(m));
    dst.push_back(rng.below(3));
    coef.push_back(rng.uniform(-1.0, 1.0));
  }
  for (std::size_t i = 0; i < m; ++i) picks.push_back(rng.below(n));

  ParamList params{{"a", &a},     {"b", &b},       {"c", &c},       {"row", &row},
                   {"col", &col}, {"pos", &pos},   {"gain", &gain}, {"slope", &slope}};
  struct Vars {
    Var A, B, C, R, Co, P, G, S, y;
  };
  auto bind = [&](Tape& t) {
    Vars v{t.param(a), t.param(b), t.param(c), t.param(row), t.param(col),
           t.param(pos), t.param(gain), t.param(slope), {}};
    v.y = matmul(v.A, v.B);
    return v;
  };
  using Fn = std::function<Var(const Vars&)>;
  const std::vector<std::pair<std::string, Fn>> cases = {
      {"matmul", [](const Vars& v) { return sum(mul(v.y, v.C)); }},
      {"matmul_nt", [](const Vars& v) { return sum(matmul_nt(v.y, v.C)); }},
      {"transpose", [](const Vars& v) { return sum(mul(transpose(v.y), transpose(v.C))); }},
      {"add_row", [](const Vars& v) { return sum(mul(add(v.y, v.R), v.C)); }},
      {"sub_col", [](const Vars& v) { return sum(mul(sub(v.y, v.Co), v.C)); }},
      {"add_scalar_broadcast",
       [](const Vars& v) { return sum(mul(add(v.C, slice_cols(slice_rows(v.y, 0, 1), 0, 1)), v.C)); }},
      {"div", [](const Vars& v) { return sum(div(v.y, v.P)); }},
      {"scale", [](const Vars& v) { return sum(mul(scale(v.y, -1.7), v.C)); }},
      {"exp", [](const Vars& v) { return sum(exp(v.y)); }},
      {"log", [](const Vars& v) { return sum(log(v.P)); }},
      {"tanh", [](const Vars& v) { return sum(mul(tanh(v.y), v.C)); }},
      {"relu", [](const Vars& v) { return sum(mul(relu(v.y), v.C)); }},
      {"prelu", [](const Vars& v) { return sum(mul(prelu(v.y, v.S), v.C)); }},
      {"pow", [](const Vars& v) { return sum(pow_scalar(v.P, 2.5)); }},
      {"gelu", [](const Vars& v) { return sum(mul(gelu(v.y), v.C)); }},
      {"layer_norm", [](const Vars& v) { return sum(mul(layer_norm(v.y, v.G, v.R), v.C)); }},
      {"softmax", [](const Vars& v) { return sum(mul(softmax_rows(v.y, 0.7), v.C)); }},
      {"log_softmax", [](const Vars& v) { return sum(mul(log_softmax_rows(v.y, 1.3), v.C)); }},
      {"gather", [&](const Vars& v) { return sum(mul(gather_rows(v.y, ids), gather_rows(v.C, ids))); }},
      {"replace", [&](const Vars& v) { return sum(mul(replace_rows(v.y, rows, v.R), v.C)); }},
      {"segment_sum",
       [&](const Vars& v) { return sum(tanh(segment_sum(v.y, src, dst, coef, 3))); }},
      {"concat_cols",
       [](const Vars& v) { return sum(mul(concat_cols({v.y, v.C}), concat_cols({v.C, v.y}))); }},
      {"concat_rows",
       [](const Vars& v) { return sum(mul(concat_rows({v.y, v.C}), concat_rows({v.C, v.y}))); }},
      {"slice_cols", [n](const Vars& v) { return sum(mul(slice_cols(v.y, 1, n), slice_cols(v.C, 0, n - 1))); }},
      {"slice_rows", [m](const Vars& v) { return sum(tanh(slice_rows(v.y, m / 2, m))); }},
      {"mean", [](const Vars& v) { return mean(mul(v.y, v.y)); }},
      {"mean_rows", [](const Vars& v) { return sum(mul(mean_rows(v.y), v.R)); }},
      {"sum_cols", [](const Vars& v) { return sum(mul(sum_cols(v.y), v.Co)); }},
      {"pick", [&](const Vars& v) { return sum(mul(pick(v.y, picks), v.Co)); }},
      {"cosine_rows", [](const Vars& v) { return sum(mul(cosine_rows(v.y, v.C), v.Co)); }},
      {"cosine_matrix",
       [](const Vars& v) { return sum(mul(cosine_matrix(v.y, v.C), matmul_nt(v.Co, v.Co))); }},
  };
  for (const auto& [name, fn] : cases) {
    auto res = testing::grad_check(params, [&](Tape& t) { return fn(bind(t)); });
    EXPECT_LE(res.worst_rel_error, 1e-4) << name << ", worst parameter: " << res.worst_param;
  }
}

INSTANTIATE_TEST_SUITE_P(RandomFixtures, OpGradient, ::testing::Range(0, 12));

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = make_param(Tensor::scalar(1.0));
  ParamList params{{"p", &p}};
  GradBuffer g(params);
  g[0][0] = 0.5;
  AdamState state(params, AdamConfig{.lr = 0.001});
  adam_step(params, g, state);
  EXPECT_EQ(state.t, 1u);
  EXPECT_NEAR(p[0], 0.999, 1e-8);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor p = make_param(Tensor::matrix(1, 3, {0.3, -2.0, 7.5}));
  const auto before = p.storage();
  ParamList params{{"p", &p}};
  GradBuffer g(params);
  AdamState state(params, AdamConfig{});
  for (int i = 0; i < 5; ++i) adam_step(params, g, state);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p[k], before[k], 1e-12);
}

TEST(Adam, SeededRunsAreBitIdentical) {
  auto run = [] {
    Rng rng(99);
    Tensor w = init_uniform(4, 3, 4, rng);
    ParamList params{{"w", &w}};
    AdamState state(params, AdamConfig{});
    for (int step = 0; step < 20; ++step) {
      Tape tape;
      Var loss = mean(pow_scalar(tanh(tape.param(w)), 2.0));
      tape.backward(loss);
      GradBuffer g(params);
      collect_grads(tape, params, g);
      adam_step(params, g, state);
    }
    return w.storage();
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ShapeMismatchRejected) {
  Tensor p = make_param(Tensor::zeros(2, 2));
  Tensor q = make_param(Tensor::zeros(1, 1));
  ParamList params{{"p", &p}};
  ParamList other{{"q", &q}};
  AdamState state(params, AdamConfig{});
  GradBuffer wrong(other);
  EXPECT_THROW(adam_step(params, wrong, state), ShapeError);
}

TEST(Init, FanInBounds) {
  Rng rng(4);
  Tensor w = init_uniform(16, 16, 16, rng);
  for (double v : w.data()) EXPECT_LE(std::abs(v), 0.25);
  EXPECT_TRUE(w.requires_grad());
}

TEST(Checkpoint, RoundTripPreservesNamesShapesAndBits) {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_matrix(1 + rng.below(5), 1 + rng.below(5), rng);
    Tensor b({2, 3, 4});
    for (double& v : b.data()) v = rng.normal() * 1e10;
    ParamList params{{"layer.a", &a}, {"tensor3", &b}};
    NamedTensors back = decode_checkpoint(encode_checkpoint(params));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].first, "layer.a");
    EXPECT_EQ(back[0].second.shape(), a.shape());
    EXPECT_EQ(back[0].second.storage(), a.storage());
    EXPECT_EQ(back[1].second.storage(), b.storage());
  }
}

TEST(Checkpoint, HeaderIsLittleEndianAndVersioned) {
  Tensor a = Tensor::scalar(1.0);
  ParamList params{{"x", &a}};
  const std::string bytes = encode_checkpoint(params);
  EXPECT_EQ(bytes.substr(0, 7), "TXFCKPT");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), kCheckpointVersion);
  // 1.0 = 0x3ff0000000000000: high byte last.
  EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 0x3f);
}

TEST(Checkpoint, FileRoundTripAndLoadErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "txfuse_ckpt_test";
  std::filesystem::create_directories(dir);
  Tensor a = Tensor::matrix(1, 2, {1.0, 2.0});
  ParamList params{{"a", &a}};
  save_checkpoint(dir / "m.ckpt", params);
  EXPECT_FALSE(std::filesystem::exists(dir / "m.ckpt.tmp"));
  Tensor b = Tensor::zeros(1, 2);
  load_checkpoint(dir / "m.ckpt", ParamList{{"a", &b}});
  EXPECT_EQ(b.storage(), a.storage());
  Tensor wrong = Tensor::zeros(2, 2);
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", ParamList{{"a", &wrong}}), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", ParamList{{"b", &b}}), CheckpointError);
  EXPECT_THROW(decode_checkpoint("garbage!"), CheckpointError);
  std::filesystem::remove_all(dir);
}

TEST(Finiteness, LossCheckRaises) {
  EXPECT_THROW(require_finite(Tensor::scalar(NAN), "loss"), NonFiniteError);
  EXPECT_NO_THROW(require_finite(Tensor::scalar(1.0), "loss"));
#ifndef NDEBUG
  Tape tape;
  EXPECT_THROW(log(tape.constant(Tensor::scalar(-1.0))), NonFiniteError);
#endif
}

TEST(Tensor, ShapeInvariant) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1.0}), ShapeError);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad().size(), 6u);
  EXPECT_TRUE(t.has_grad());
}

}  // namespace
}  // namespace txfuse::numcore
