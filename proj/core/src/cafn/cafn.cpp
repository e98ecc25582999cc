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
#include <nlohmann/json.hpp>

#include "txfuse/cafn/cafn.hpp"
#include "txfuse/common/parallel.hpp"
#include "txfuse/numcore/adam.hpp"
#include "txfuse/numcore/batch.hpp"
#include "txfuse/numcore/checkpoint.hpp"
#include "txfuse/numcore/ops.hpp"

namespace txfuse::cafn {

namespace ops = numcore;

Ablation parse_ablation(const std::string& s) {
  if (s == "none") return Ablation::kNone;
  if (s == "add") return Ablation::kAdd;
  if (s == "linear") return Ablation::kLinear;
  if (s == "no-graph") return Ablation::kNoGraph;
  if (s == "no-lm") return Ablation::kNoLm;
  throw std::invalid_argument("unknown ablation '" + s + "'");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kNone:
      return "none";
    case Ablation::kAdd:
      return "add";
    case Ablation::kLinear:
      return "linear";
    case Ablation::kNoGraph:
      return "no-graph";
    case Ablation::kNoLm:
      return "no-lm";
  }
  return "?";
}

CafnParams CafnParams::init(const CafnConfig& c, Rng& rng) {
  if (c.k_s == 0 || c.k_f == 0 || c.d_s == 0 || c.d_h == 0 || c.d_f < 2) {
    throw std::invalid_argument("CafnParams: need k_s, k_f >= 1 and d_f >= 2");
  }
  auto u = [&](std::size_t r, std::size_t cols, std::size_t fan_in) {
    return ops::make_param(ops::init_uniform(r, cols, fan_in, rng));
  };
  auto zeros = [](std::size_t r, std::size_t cols) { return ops::make_param(Tensor({r, cols})); };
  CafnParams p;
  p.config = c;
  p.a_s = u(c.k_s, c.d_s, 1);
  p.wq_s = u(c.d_s, c.d_s, c.d_s);
  p.wk_s = u(c.d_s, c.d_s, c.d_s);
  p.wv_s = u(c.d_s, c.d_s, c.d_s);
  p.w_s = u(c.d_s, c.d_f, c.d_s);
  p.w_g = u(c.d_h, c.d_f, c.d_h);
  p.b = zeros(1, c.d_f);
  p.a_f = u(c.k_f, c.d_f, 1);
  p.wq_f = u(c.d_f, c.d_f, c.d_f);
  p.wk_f = u(c.d_f, c.d_f, c.d_f);
  p.wv_f = u(c.d_f, c.d_f, c.d_f);
  p.lin_w = u(c.d_s + c.d_h, c.d_f, c.d_s + c.d_h);
  p.mlp1_w = u(c.d_f, c.d_f / 2, c.d_f);
  p.mlp1_b = zeros(1, c.d_f / 2);
  p.mlp2_w = u(c.d_f / 2, 2, c.d_f / 2);
  p.mlp2_b = zeros(1, 2);
  if (c.ablation == Ablation::kNoGraph) {
    std::fill(p.w_g.data().begin(), p.w_g.data().end(), 0.0);
    p.w_g.set_requires_grad(false);
  }
  return p;
}

numcore::ParamList CafnParams::params() {
  numcore::ParamList out;
  const Ablation a = config.ablation;
  const bool attention = a == Ablation::kNone || a == Ablation::kNoGraph || a == Ablation::kNoLm;
  if (attention) {
    if (a != Ablation::kNoLm) {
      out.insert(out.end(), {{"a_s", &a_s}, {"wq_s", &wq_s}, {"wk_s", &wk_s}, {"wv_s", &wv_s},
                             {"w_s", &w_s}});
    }
    if (a != Ablation::kNoGraph) out.push_back({"w_g", &w_g});
    out.insert(out.end(),
               {{"b", &b}, {"a_f", &a_f}, {"wq_f", &wq_f}, {"wk_f", &wk_f}, {"wv_f", &wv_f}});
  } else if (a == Ablation::kAdd) {
    out.insert(out.end(), {{"w_s", &w_s}, {"w_g", &w_g}});
  } else {
    out.insert(out.end(), {{"lin_w", &lin_w}, {"b", &b}});
  }
  out.insert(out.end(), {{"mlp1_w", &mlp1_w},
                         {"mlp1_b", &mlp1_b},
                         {"mlp2_w", &mlp2_w},
                         {"mlp2_b", &mlp2_b}});
  return out;
}

void CafnParams::validate() const {
  for (const auto& [name, t] : const_cast<CafnParams*>(this)->params()) {
    ops::require_finite(*t, "cafn." + name);
  }
}

void CafnParams::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  ops::save_checkpoint(dir / "cafn.ckpt", const_cast<CafnParams*>(this)->params());
  nlohmann::json meta = {{"d_s", config.d_s}, {"d_h", config.d_h}, {"d_f", config.d_f},
                         {"k_s", config.k_s}, {"k_f", config.k_f},
                         {"ablation", to_string(config.ablation)}};
  std::ofstream(dir / "cafn.json") << meta.dump(2) << '\n';
}

CafnParams CafnParams::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "cafn.json");
  if (!in) throw std::runtime_error("CafnParams: missing " + (dir / "cafn.json").string());
  const auto meta = nlohmann::json::parse(in);
  CafnConfig c;
  c.d_s = meta.at("d_s").get<std::size_t>();
  c.d_h = meta.at("d_h").get<std::size_t>();
  c.d_f = meta.at("d_f").get<std::size_t>();
  c.k_s = meta.at("k_s").get<std::size_t>();
  c.k_f = meta.at("k_f").get<std::size_t>();
  c.ablation = parse_ablation(meta.at("ablation").get<std::string>());
  Rng rng(0);
  CafnParams p = init(c, rng);
  ops::load_checkpoint(dir / "cafn.ckpt", p.params());
  return p;
}

namespace {

// softmax((Q K_src^T)) V with K_src = X W_K and V = X W_V, evaluated as
// ((Q W_K^T) X^T) so each account only pays for its own rows.
Var attend(Var q, Var x, Var wk, Var wv, double scale) {
  Var qk = ops::matmul_nt(q, wk);                                 // k x d_in
  Var attn = ops::softmax_rows(ops::matmul_nt(qk, x), scale);  // k x N
  return ops::matmul(ops::matmul(attn, x), wv);
}

}  // namespace

Var aggregate_semantic(Tape& tape, CafnParams& p, Var s) {
  if (s.cols() != p.config.d_s || s.rows() == 0) {
    throw ops::ShapeError("aggregate_semantic: expected N x d_s token matrix");
  }
  Var q = ops::matmul(tape.param(p.a_s), tape.param(p.wq_s));
  return attend(q, s, tape.param(p.wk_s), tape.param(p.wv_s),
                std::sqrt(static_cast<double>(p.config.d_s)));
}

Var cross_perspective_fuse(Tape& tape, CafnParams& p, Var zs, Var x) {
  if (zs.cols() != p.config.d_s || x.rows() != 1 || x.cols() != p.config.d_h) {
    throw ops::ShapeError("cross_perspective_fuse: dimension mismatch");
  }
  Var g = ops::matmul(x, tape.param(p.w_g));  // 1 x d_f, broadcast over rows
  Var pre = ops::add(ops::add(ops::matmul(zs, tape.param(p.w_s)), g), tape.param(p.b));
  return ops::tanh(pre);
}

Var fuse(Tape& tape, CafnParams& p, Var zsg) {
  if (zsg.cols() != p.config.d_f || zsg.rows() == 0) {
    throw ops::ShapeError("fuse: expected k x d_f rows");
  }
  Var q = ops::matmul(tape.param(p.a_f), tape.param(p.wq_f));
  Var f = attend(q, zsg, tape.param(p.wk_f), tape.param(p.wv_f),
                 std::sqrt(static_cast<double>(p.config.d_f)));
  return ops::mean_rows(f);
}

Var classify_logits(Tape& tape, CafnParams& p, Var f) {
  Var h = ops::relu(ops::add(ops::matmul(f, tape.param(p.mlp1_w)), tape.param(p.mlp1_b)));
  return ops::add(ops::matmul(h, tape.param(p.mlp2_w)), tape.param(p.mlp2_b));
}

Var forward(Tape& tape, CafnParams& p, Var s, Var x) {
  const CafnConfig& c = p.config;
  switch (c.ablation) {
    case Ablation::kNone:
    case Ablation::kNoGraph: {
      Var zsg = cross_perspective_fuse(tape, p, aggregate_semantic(tape, p, s), x);
      return classify_logits(tape, p, fuse(tape, p, zsg));
    }
    case Ablation::kNoLm: {
      // Semantic rows are zero, so every Z^sg row is tanh(x W_g + b).
      Var zsg = ops::tanh(ops::add(ops::matmul(x, tape.param(p.w_g)), tape.param(p.b)));
      return classify_logits(tape, p, fuse(tape, p, zsg));
    }
    case Ablation::kAdd: {
      Var f = ops::add(ops::matmul(ops::mean_rows(s), tape.param(p.w_s)),
                       ops::matmul(x, tape.param(p.w_g)));
      return classify_logits(tape, p, f);
    }
    case Ablation::kLinear: {
      Var joined = ops::concat_cols({ops::mean_rows(s), x});
      Var f = ops::tanh(ops::add(ops::matmul(joined, tape.param(p.lin_w)), tape.param(p.b)));
      return classify_logits(tape, p, f);
    }
  }
  throw std::logic_error("cafn::forward: unknown ablation");
}

void FusionDataset::validate(const CafnConfig& config) const {
  if (semantic.size() != labels.size() || graph.rows() != labels.size()) {
    throw ops::ShapeError("FusionDataset: semantic, graph and label counts differ");
  }
  if (graph.cols() != config.d_h) throw ops::ShapeError("FusionDataset: graph width != d_h");
  for (std::size_t i = 0; i < semantic.size(); ++i) {
    if (semantic[i].rows() == 0 || semantic[i].cols() != config.d_s) {
      throw ops::ShapeError("FusionDataset: token matrix " + std::to_string(i) +
                            " is not N x d_s");
    }
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("FusionDataset: labels must be 0 or 1");
  }
}

namespace {

Tensor graph_row(const FusionDataset& data, std::size_t id) {
  Tensor x({1, data.graph.cols()});
  auto src = data.graph.row(id);
  std::copy(src.begin(), src.end(), x.data().begin());
  return x;
}

}  // namespace

Tensor predict_proba(const CafnParams& params, const FusionDataset& data,
                     std::span<const std::size_t> ids, std::size_t threads) {
  Tensor out({ids.size(), 2});
  parallel_for(
      ids.size(),
      [&](std::size_t i) {
        CafnParams p = params;
        Tape tape;
        Var logits = forward(tape, p, tape.constant(data.semantic.at(ids[i])),
                             tape.constant(graph_row(data, ids[i])));
        Tensor prob = ops::softmax_rows(logits.value());
        out.at(i, 0) = prob.at(0, 0);
        out.at(i, 1) = prob.at(0, 1);
      },
      threads);
  return out;
}

std::vector<int> predict(const Tensor& proba) {
  std::vector<int> out(proba.rows());
  for (std::size_t i = 0; i < proba.rows(); ++i) out[i] = proba.at(i, 1) > proba.at(i, 0) ? 1 : 0;
  return out;
}

Metrics metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("metrics: predictions and labels differ in length");
  }
  if (labels.empty()) throw std::invalid_argument("metrics: empty input");
  Metrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] == 1, y = labels[i] == 1;
    if (p && y) ++m.tp;
    if (p && !y) ++m.fp;
    if (!p && !y) ++m.tn;
    if (!p && y) ++m.fn;
  }
  m.precision_undefined = m.tp + m.fp == 0;
  m.recall_undefined = m.tp + m.fn == 0;
  m.precision = m.precision_undefined ? 0.0 : static_cast<double>(m.tp) / (m.tp + m.fp);
  m.recall = m.recall_undefined ? 0.0 : static_cast<double>(m.tp) / (m.tp + m.fn);
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  const double tnr = m.tn + m.fp == 0 ? 0.0 : static_cast<double>(m.tn) / (m.tn + m.fp);
  m.bacc = (m.recall + tnr) / 2.0;
  return m;
}

Var account_loss(Tape& tape, CafnParams& p, const FusionDataset& data, std::size_t id,
                 double weight) {
  Var logits = forward(tape, p, tape.constant(data.semantic.at(id)),
                       tape.constant(graph_row(data, id)));
  const std::size_t y = static_cast<std::size_t>(data.labels.at(id));
  Var nll = ops::scale(ops::pick(ops::log_softmax_rows(logits), std::span(&y, 1)), -1.0);
  return weight == 1.0 ? nll : ops::scale(nll, weight);
}

std::vector<double> class_weights(const FusionDataset& data, std::span<const std::size_t> ids) {
  std::size_t counts[2] = {0, 0};
  for (std::size_t id : ids) ++counts[data.labels.at(id)];
  if (counts[0] == 0 || counts[1] == 0) {
    throw std::invalid_argument("cafn: training set contains a single class");
  }
  const double n = static_cast<double>(ids.size());
  return {n / (2.0 * counts[0]), n / (2.0 * counts[1])};
}

TrainResult train(const FusionDataset& data, std::span<const std::size_t> train_ids,
                  std::span<const std::size_t> val_ids, const CafnConfig& model,
                  const TrainConfig& config) {
  data.validate(model);
  if (config.batch_size == 0) throw std::invalid_argument("cafn::train: batch_size is 0");
  TrainResult result;
  result.class_weights = class_weights(data, train_ids);
  if (!config.class_weighting) result.class_weights = {1.0, 1.0};
  const auto& w = result.class_weights;

  Rng init_rng = Rng::stream(config.seed, "cafn.init");
  CafnParams p = CafnParams::init(model, init_rng);
  numcore::ParamList params = p.params();
  numcore::AdamState adam(params, numcore::AdamConfig{.lr = config.lr});
  const Rng order_root = Rng::stream(config.seed, "cafn.order");
  std::vector<std::size_t> order(train_ids.begin(), train_ids.end());
  // Without a validation split, select on training F1.
  std::span<const std::size_t> select = val_ids.empty() ? train_ids : val_ids;
  std::vector<int> select_labels;
  for (std::size_t id : select) select_labels.push_back(data.labels.at(id));

  result.params = p;
  result.best_val_f1 = -1.0;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::copy(train_ids.begin(), train_ids.end(), order.begin());
    Rng order_rng = order_root.fork(epoch);
    order_rng.shuffle(order);
    double epoch_loss = 0.0, epoch_weight = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t bsz = std::min(config.batch_size, order.size() - start);
      std::vector<double> losses;
      numcore::GradBuffer grads = numcore::batch_gradients(
          params, bsz,
          [&](std::size_t j, Tape& tape) {
            const std::size_t id = order[start + j];
            return account_loss(tape, p, data, id, w[data.labels[id]]);
          },
          &losses, config.threads);
      double total = 0.0, weight = 0.0;
      for (std::size_t j = 0; j < bsz; ++j) {
        total += losses[j];
        weight += w[data.labels[order[start + j]]];
      }
      if (!std::isfinite(total)) {
        throw std::runtime_error("cafn::train: non-finite loss in epoch " +
                                 std::to_string(epoch + 1));
      }
      grads.scale(1.0 / weight);
      numcore::adam_step(params, grads, adam);
      epoch_loss += total;
      epoch_weight += weight;
    }
    const Metrics m =
        metrics(predict(predict_proba(p, data, select, config.threads)), select_labels);
    result.log.push_back({epoch + 1, epoch_loss / epoch_weight, m.f1});
    if (m.f1 > result.best_val_f1) {
      result.best_val_f1 = m.f1;
      result.best_epoch = epoch + 1;
      result.params = p;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  result.params.validate();
  if (!config.checkpoint_dir.empty()) {
    result.params.save(config.checkpoint_dir / "best");
    write_log_csv(config.checkpoint_dir / "fuse_log.csv", result.log);
  }
  return result;
}

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_log_csv: cannot write " + path.string());
  out.precision(17);
  out << "epoch,train_loss,val_f1\n";
  for (const auto& e : log) out << e.epoch << ',' << e.train_loss << ',' << e.val_f1 << '\n';
}

}  // namespace txfuse::cafn
