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

#include "txfuse/magae/magae.hpp"
#include "txfuse/numcore/adam.hpp"
#include "txfuse/numcore/checkpoint.hpp"
#include "txfuse/numcore/ops.hpp"

namespace txfuse::magae {

using numcore::ParamList;

MagaeParams MagaeParams::init(const MagaeConfig& config, Rng& rng) {
  if (config.d_node == 0 || config.d_h == 0 || config.layers == 0) {
    throw std::invalid_argument("MagaeParams: dimensions must be positive");
  }
  MagaeParams p;
  p.config = config;
  p.x_mask = numcore::make_param(Tensor({1, config.d_node}));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::size_t in = l == 0 ? config.d_node : config.d_h;
    p.enc_w.push_back(numcore::make_param(numcore::init_uniform(in, config.d_h, in, rng)));
    p.enc_b.push_back(numcore::make_param(Tensor({1, config.d_h})));
    Tensor slope({1, config.d_h});
    std::fill(slope.data().begin(), slope.data().end(), 0.25);
    p.enc_slope.push_back(numcore::make_param(std::move(slope)));
  }
  p.h_dmask = numcore::make_param(Tensor({1, config.d_h}));
  p.dec_w = numcore::make_param(
      numcore::init_uniform(config.d_h, config.d_node, config.d_h, rng));
  p.dec_b = numcore::make_param(Tensor({1, config.d_node}));
  return p;
}

ParamList MagaeParams::params() {
  ParamList out{{"x_mask", &x_mask}};
  for (std::size_t l = 0; l < enc_w.size(); ++l) {
    const std::string pre = "enc" + std::to_string(l) + ".";
    out.push_back({pre + "w", &enc_w[l]});
    out.push_back({pre + "b", &enc_b[l]});
    out.push_back({pre + "slope", &enc_slope[l]});
  }
  out.push_back({"h_dmask", &h_dmask});
  out.push_back({"dec_w", &dec_w});
  out.push_back({"dec_b", &dec_b});
  return out;
}

void MagaeParams::validate() const {
  for (const auto& [name, t] : const_cast<MagaeParams*>(this)->params()) {
    numcore::require_finite(*t, "magae." + name);
  }
}

void MagaeParams::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  numcore::save_checkpoint(dir / "magae.ckpt", const_cast<MagaeParams*>(this)->params());
  nlohmann::json meta = {{"d_node", config.d_node},
                         {"d_h", config.d_h},
                         {"layers", config.layers},
                         {"trained", trained}};
  std::ofstream(dir / "magae.json") << meta.dump(2) << '\n';
}

MagaeParams MagaeParams::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "magae.json");
  if (!in) throw std::runtime_error("MagaeParams: missing " + (dir / "magae.json").string());
  const auto meta = nlohmann::json::parse(in);
  MagaeConfig c;
  c.d_node = meta.at("d_node").get<std::size_t>();
  c.d_h = meta.at("d_h").get<std::size_t>();
  c.layers = meta.at("layers").get<std::size_t>();
  Rng rng(0);
  MagaeParams p = init(c, rng);
  numcore::load_checkpoint(dir / "magae.ckpt", p.params());
  p.trained = meta.value("trained", false);
  return p;
}

NodeMaskPlan plan_node_mask(std::size_t num_seeds, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("mask ratio outside [0, 1]");
  NodeMaskPlan plan;
  plan.ratio = ratio;
  const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(num_seeds)));
  std::vector<std::size_t> idx(num_seeds);
  for (std::size_t i = 0; i < num_seeds; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(num_seeds - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  plan.rows = std::move(idx);
  return plan;
}

Var mask_nodes(Var x, const NodeMaskPlan& plan, Var x_mask) {
  if (plan.empty()) return x;
  return numcore::replace_rows(x, plan.rows, x_mask);
}

Tensor mask_nodes(const Tensor& x, const NodeMaskPlan& plan, const Tensor& x_mask) {
  if (x_mask.rows() != 1 || x_mask.cols() != x.cols()) {
    throw numcore::ShapeError("mask_nodes: token width differs from feature width");
  }
  Tensor out = x;
  for (std::size_t r : plan.rows) {
    std::copy(x_mask.data().begin(), x_mask.data().end(), out.row(r).begin());
  }
  return out;
}

Var aggregate(Var x, const labor::BatchAdjacency::Hop& hop, std::size_t rows,
              const AggregationOptions& opt) {
  if (hop.offsets.size() != rows + 1) {
    throw std::invalid_argument("aggregate: hop does not match the row count");
  }
  std::vector<std::size_t> src, dst;
  std::vector<double> coef;
  src.reserve(rows + hop.src.size());
  dst.reserve(rows + hop.src.size());
  coef.reserve(rows + hop.src.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double d = hop.degree[r];
    const double w_sum = hop.weight_sum[r];
    auto rel = [&](std::size_t e) {
      return opt.edge_weights && w_sum > 0.0 ? d * hop.edge_weight[e] / w_sum : 1.0;
    };
    double denom = 1.0 + d;
    if (!opt.debias) {
      denom = 1.0;
      for (std::size_t e = hop.offsets[r]; e < hop.offsets[r + 1]; ++e) denom += rel(e);
    }
    src.push_back(r);
    dst.push_back(r);
    coef.push_back(1.0 / denom);
    for (std::size_t e = hop.offsets[r]; e < hop.offsets[r + 1]; ++e) {
      src.push_back(hop.src[e]);
      dst.push_back(r);
      coef.push_back((opt.debias ? hop.importance[e] : 1.0) * rel(e) / denom);
    }
  }
  return numcore::segment_sum(x, src, dst, coef, rows);
}

Var encode(Tape& tape, MagaeParams& p, const labor::BatchAdjacency& adj, Var x,
           std::size_t first_hop, const AggregationOptions& opt) {
  const std::size_t layers = p.config.layers;
  if (adj.hops.size() < first_hop + layers) {
    throw std::invalid_argument("magae::encode: block has fewer hops than encoder layers");
  }
  if (x.rows() < adj.prefix[first_hop + layers] || x.cols() != p.config.d_node) {
    throw numcore::ShapeError("magae::encode: feature block has the wrong shape");
  }
  Var h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t hop = first_hop + layers - 1 - l;
    Var agg = aggregate(h, adj.hops[hop], adj.prefix[hop], opt);
    Var lin = numcore::add(numcore::matmul(agg, tape.param(p.enc_w[l])), tape.param(p.enc_b[l]));
    h = numcore::prelu(lin, tape.param(p.enc_slope[l]));
  }
  return h;
}

Var remask(Var h, const NodeMaskPlan& plan, Var h_dmask) {
  if (plan.empty()) return h;
  return numcore::replace_rows(h, plan.rows, h_dmask);
}

Var decode(Tape& tape, MagaeParams& p, const labor::BatchAdjacency& adj, Var h, std::size_t hop,
           const AggregationOptions& opt) {
  if (hop >= adj.hops.size()) throw std::invalid_argument("magae::decode: missing hop");
  if (h.rows() < adj.prefix[hop + 1] || h.cols() != p.config.d_h) {
    throw numcore::ShapeError("magae::decode: hidden block has the wrong shape");
  }
  Var agg = aggregate(h, adj.hops[hop], adj.prefix[hop], opt);
  return numcore::add(numcore::matmul(agg, tape.param(p.dec_w)), tape.param(p.dec_b));
}

SceValue sce_loss(Var x, Var z, std::span<const std::size_t> masked, double gamma) {
  if (masked.empty()) throw std::invalid_argument("sce_loss: empty masked set");
  if (!(gamma >= 1.0)) throw std::invalid_argument("sce_loss: gamma must be >= 1");
  if (x.rows() != z.rows() || x.cols() != z.cols()) {
    throw numcore::ShapeError("sce_loss: target and reconstruction differ in shape");
  }
  SceValue out;
  std::vector<std::size_t> rows;
  const Tensor& xv = x.value();
  for (std::size_t r : masked) {
    if (r >= xv.rows()) throw std::out_of_range("sce_loss: masked row out of range");
    bool zero = true;
    for (double v : xv.row(r)) zero = zero && v == 0.0;
    if (zero) {
      ++out.skipped;
    } else {
      rows.push_back(r);
    }
  }
  if (rows.empty()) {
    out.loss = x.tape()->constant(Tensor({1, 1}));
    return out;
  }
  Var c = numcore::cosine_rows(numcore::gather_rows(x, rows), numcore::gather_rows(z, rows));
  // relu guards the power against 1 - cos rounding below zero.
  Var err = numcore::relu(numcore::add_scalar(numcore::scale(c, -1.0), 1.0));
  out.loss = numcore::mean(gamma == 1.0 ? err : numcore::pow_scalar(err, gamma));
  return out;
}

namespace {

Tensor gather(const Tensor& x, std::span<const std::uint32_t> rows) {
  Tensor out({rows.size(), x.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

GaeResult pretrain(const labor::Neighborhood& nb, const Tensor& features,
                   const MagaeConfig& model, const GaeTrainConfig& config) {
  if (!(config.mask_ratio > 0.0 && config.mask_ratio <= 1.0)) {
    throw std::invalid_argument("magae::pretrain: mask ratio must be in (0, 1]");
  }
  if (!(config.gamma >= 1.0)) throw std::invalid_argument("magae::pretrain: gamma must be >= 1");
  if (config.batch_size == 0) throw std::invalid_argument("magae::pretrain: batch_size is 0");
  if (features.rows() != nb.num_nodes() || features.cols() != model.d_node) {
    throw numcore::ShapeError("magae::pretrain: feature matrix does not match the graph");
  }
  labor::SamplerConfig sampler{config.sampler, config.fanouts};
  if (sampler.fanouts.size() == 1) sampler.fanouts.assign(model.layers + 1, config.fanouts[0]);
  if (sampler.fanouts.size() != model.layers + 1) {
    throw std::invalid_argument("magae::pretrain: need one fanout per layer plus the decoder");
  }

  Rng init_rng = Rng::stream(config.seed, "magae.init");
  GaeResult result{MagaeParams::init(model, init_rng), {}};
  MagaeParams& p = result.params;
  ParamList params = p.params();
  numcore::AdamState adam(params, numcore::AdamConfig{.lr = config.lr});
  const Rng part_root = Rng::stream(config.seed, "magae.partition");
  const Rng sample_root = Rng::stream(config.seed, "magae.sample");
  const Rng mask_root = Rng::stream(config.seed, "magae.mask");
  const std::size_t n = nb.num_nodes();
  const std::size_t num_batches = std::max<std::size_t>(1, (n + config.batch_size - 1) / config.batch_size);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng part_rng = part_root.fork(epoch);
    const labor::BatchPartition batches = labor::partition_batches(n, num_batches, part_rng);
    const std::vector<labor::SampledBlock> blocks =
        labor::sample_epoch(nb, batches, sampler, sample_root, epoch, config.threads);
    double total = 0.0;
    std::size_t counted = 0, skipped = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const labor::BatchAdjacency adj = labor::build_batch_adjacency(blocks[b], nb);
      Rng mask_rng = mask_root.fork(epoch, b);
      const NodeMaskPlan plan = plan_node_mask(adj.prefix[0], config.mask_ratio, mask_rng);
      if (plan.empty()) continue;
      Tape tape;
      Var x = tape.constant(gather(features, adj.nodes));
      Var xm = mask_nodes(x, plan, tape.param(p.x_mask));
      Var h = encode(tape, p, adj, xm, 1, config.aggregation);
      Var z = decode(tape, p, adj, remask(h, plan, tape.param(p.h_dmask)), 0, config.aggregation);
      SceValue sce = sce_loss(numcore::slice_rows(x, 0, adj.prefix[0]), z, plan.rows, config.gamma);
      const double value = sce.loss.value().item();
      skipped += sce.skipped;
      if (!std::isfinite(value)) {
        if (!config.checkpoint_dir.empty()) p.save(config.checkpoint_dir / "last_good");
        throw DivergenceError("magae::pretrain: non-finite loss in epoch " +
                              std::to_string(epoch + 1));
      }
      total += value;
      ++counted;
      tape.backward(sce.loss);
      numcore::GradBuffer grads(params);
      numcore::collect_grads(tape, params, grads);
      numcore::adam_step(params, grads, adam);
    }
    result.log.push_back({epoch + 1, counted ? total / counted : 0.0, skipped});
  }
  p.trained = true;
  p.validate();
  if (!config.checkpoint_dir.empty()) {
    p.save(config.checkpoint_dir / "final");
    write_log_csv(config.checkpoint_dir / "gae_log.csv", result.log);
  }
  return result;
}

Tensor infer_embeddings(const labor::Neighborhood& nb, const Tensor& features,
                        const MagaeParams& params, const AggregationOptions& opt) {
  if (!params.trained) throw std::logic_error("magae::infer_embeddings: model is untrained");
  if (features.rows() != nb.num_nodes() || features.cols() != params.config.d_node) {
    throw numcore::ShapeError("magae::infer_embeddings: feature matrix does not match the graph");
  }
  MagaeParams p = params;
  const labor::BatchAdjacency adj = labor::full_adjacency(nb, p.config.layers);
  Tape tape;
  Var h = encode(tape, p, adj, tape.constant(features), 0, opt);
  return h.value();
}

void write_log_csv(const std::filesystem::path& path, const std::vector<GaeEpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_log_csv: cannot write " + path.string());
  out.precision(17);
  out << "epoch,sce,skipped_rows\n";
  for (const auto& e : log) out << e.epoch << ',' << e.sce << ',' << e.skipped << '\n';
}

}  // namespace txfuse::magae
