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

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "txfuse/numcore/checkpoint.hpp"
#include "txfuse/txclm/txclm.hpp"

namespace txfuse::txclm {
namespace {

Tensor ones(std::size_t cols) { return numcore::make_param(Tensor({1, cols}, 1.0)); }
Tensor zeros(std::size_t rows, std::size_t cols) {
  return numcore::make_param(Tensor::zeros(rows, cols));
}

// Shared forward; `leaf` turns a parameter tensor into a tape value.
template <typename Leaf>
Var forward(const EncoderParams& p, std::span<const std::uint32_t> ids, Leaf leaf) {
  const auto& cfg = p.config;
  const std::size_t n = ids.size();
  if (n == 0) throw std::invalid_argument("txclm::encode: empty sequence");
  if (n > cfg.max_seq_len) throw std::invalid_argument("txclm::encode: sequence too long");
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  for (std::size_t id : rows) {
    if (id >= cfg.vocab_size) throw std::out_of_range("txclm::encode: token id out of range");
  }
  Var x = numcore::add(numcore::gather_rows(leaf(p.tok_emb), rows),
                       numcore::slice_rows(leaf(p.pos_emb), 0, n));
  const std::size_t dh = cfg.d_lm / cfg.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const auto& l : p.layers) {
    Var h = numcore::layer_norm(x, leaf(l.ln1_g), leaf(l.ln1_b));
    Var q = numcore::matmul(h, leaf(l.wq));
    Var k = numcore::matmul(h, leaf(l.wk));
    Var v = numcore::matmul(h, leaf(l.wv));
    std::vector<Var> heads;
    heads.reserve(cfg.heads);
    for (std::size_t a = 0; a < cfg.heads; ++a) {
      const std::size_t lo = a * dh, hi = lo + dh;
      Var s = numcore::scale(
          numcore::matmul_nt(numcore::slice_cols(q, lo, hi), numcore::slice_cols(k, lo, hi)),
          inv_sqrt);
      heads.push_back(numcore::matmul(numcore::softmax_rows(s), numcore::slice_cols(v, lo, hi)));
    }
    Var att = cfg.heads == 1 ? heads[0] : numcore::concat_cols(heads);
    x = numcore::add(x, numcore::matmul(att, leaf(l.wo)));
    Var h2 = numcore::layer_norm(x, leaf(l.ln2_g), leaf(l.ln2_b));
    Var f = numcore::gelu(numcore::add(numcore::matmul(h2, leaf(l.ff1_w)), leaf(l.ff1_b)));
    x = numcore::add(x, numcore::add(numcore::matmul(f, leaf(l.ff2_w)), leaf(l.ff2_b)));
  }
  return x;
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& config, Rng& rng) {
  if (config.vocab_size <= txcorpus::kNumReserved) {
    throw std::invalid_argument("EncoderParams: vocabulary has no ordinary tokens");
  }
  if (config.d_lm == 0 || config.heads == 0 || config.d_lm % config.heads != 0) {
    throw std::invalid_argument("EncoderParams: d_lm must be divisible by heads");
  }
  const std::size_t d = config.d_lm, v = config.vocab_size;
  EncoderParams p;
  p.config = config;
  p.tok_emb = numcore::init_uniform(v, d, d, rng);
  p.pos_emb = numcore::init_uniform(config.max_seq_len, d, d, rng);
  for (std::size_t i = 0; i < config.layers; ++i) {
    EncoderLayer l;
    l.ln1_g = ones(d);
    l.ln1_b = zeros(1, d);
    l.wq = numcore::init_uniform(d, d, d, rng);
    l.wk = numcore::init_uniform(d, d, d, rng);
    l.wv = numcore::init_uniform(d, d, d, rng);
    l.wo = numcore::init_uniform(d, d, d, rng);
    l.ln2_g = ones(d);
    l.ln2_b = zeros(1, d);
    l.ff1_w = numcore::init_uniform(d, 4 * d, d, rng);
    l.ff1_b = zeros(1, 4 * d);
    l.ff2_w = numcore::init_uniform(4 * d, d, 4 * d, rng);
    l.ff2_b = zeros(1, d);
    p.layers.push_back(std::move(l));
  }
  p.mlm_w = numcore::init_uniform(d, v, d, rng);
  p.mlm_b = zeros(1, v);
  return p;
}

EncoderParams EncoderParams::clone() const {
  EncoderParams out = *this;
  for (auto& np : out.params()) {
    np.tensor->zero_grad();
  }
  return out;
}

ParamList EncoderParams::params() {
  ParamList out{{"tok_emb", &tok_emb}, {"pos_emb", &pos_emb}};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string pre = "layer" + std::to_string(i) + ".";
    for (auto [name, t] : std::initializer_list<std::pair<const char*, Tensor*>>{
             {"ln1_g", &l.ln1_g}, {"ln1_b", &l.ln1_b}, {"wq", &l.wq},       {"wk", &l.wk},
             {"wv", &l.wv},       {"wo", &l.wo},       {"ln2_g", &l.ln2_g}, {"ln2_b", &l.ln2_b},
             {"ff1_w", &l.ff1_w}, {"ff1_b", &l.ff1_b}, {"ff2_w", &l.ff2_w}, {"ff2_b", &l.ff2_b}}) {
      out.push_back({pre + name, t});
    }
  }
  out.push_back({"mlm_w", &mlm_w});
  out.push_back({"mlm_b", &mlm_b});
  return out;
}

void EncoderParams::set_trainable(bool on) {
  for (auto& np : params()) np.tensor->set_requires_grad(on);
}

void EncoderParams::validate() const {
  for (auto& np : const_cast<EncoderParams*>(this)->params()) {
    numcore::require_finite(*np.tensor, "encoder parameter " + np.name);
  }
}

void EncoderParams::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  numcore::save_checkpoint(dir / "encoder.ckpt", const_cast<EncoderParams*>(this)->params());
  nlohmann::json meta = {{"vocab_size", config.vocab_size}, {"d_lm", config.d_lm},
                         {"layers", config.layers},         {"heads", config.heads},
                         {"max_seq_len", config.max_seq_len}, {"trained", trained}};
  std::ofstream(dir / "encoder.json") << meta.dump(2) << '\n';
}

EncoderParams EncoderParams::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "encoder.json");
  if (!in) throw std::runtime_error("EncoderParams: missing " + (dir / "encoder.json").string());
  const auto meta = nlohmann::json::parse(in);
  EncoderConfig cfg;
  cfg.vocab_size = meta.at("vocab_size");
  cfg.d_lm = meta.at("d_lm");
  cfg.layers = meta.at("layers");
  cfg.heads = meta.at("heads");
  cfg.max_seq_len = meta.at("max_seq_len");
  Rng rng(0);
  EncoderParams p = init(cfg, rng);
  numcore::load_checkpoint(dir / "encoder.ckpt", p.params());
  p.trained = meta.value("trained", false);
  return p;
}

Var encode(Tape& tape, EncoderParams& p, std::span<const std::uint32_t> ids) {
  return forward(p, ids, [&](const Tensor& t) { return tape.param(const_cast<Tensor&>(t)); });
}

Tensor encode(const EncoderParams& p, std::span<const std::uint32_t> ids) {
  Tape tape;
  return forward(p, ids, [&](const Tensor& t) {
           return tape.constant(Tensor(t.shape(), t.storage()));
         }).value();
}

Tensor account_embedding(const EncoderParams& p, std::span<const std::uint32_t> ids) {
  if (!p.trained) throw std::logic_error("account_embedding: encoder is not trained");
  return encode(p, ids);
}

double self_similarity(const Tensor& reps, std::span<const std::uint32_t> ids) {
  if (ids.size() != reps.rows()) throw std::invalid_argument("self_similarity: length mismatch");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!txcorpus::is_special(ids[i])) keep.push_back(i);
  }
  Tensor sub({keep.size(), reps.cols()});
  for (std::size_t r = 0; r < keep.size(); ++r) {
    std::copy(reps.row(keep[r]).begin(), reps.row(keep[r]).end(), sub.row(r).begin());
  }
  return self_similarity(sub);
}

double self_similarity(const Tensor& reps) {
  const std::size_t n = reps.rows(), d = reps.cols();
  if (n < 2) throw std::invalid_argument("self_similarity: need at least two tokens");
  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double x : reps.row(i)) s += x * x;
    norm[i] = std::sqrt(s);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (norm[i] == 0.0 || norm[j] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += reps.at(i, k) * reps.at(j, k);
      total += 2.0 * dot / (norm[i] * norm[j]);
    }
  }
  return total / static_cast<double>(n * (n - 1));
}

}  // namespace txfuse::txclm
