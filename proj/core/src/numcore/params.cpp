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

#include "txfuse/numcore/params.hpp"

#include <cmath>
#include <cstring>

#include "txfuse/numcore/tape.hpp"

namespace txfuse::numcore {

Tensor init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  Tensor t({rows, cols});
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

Tensor make_param(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

GradBuffer::GradBuffer(const ParamList& params) {
  grads_.reserve(params.size());
  for (const auto& p : params) grads_.emplace_back(p.tensor->size(), 0.0);
}

void GradBuffer::zero() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0);
}

void GradBuffer::add(const GradBuffer& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    for (std::size_t k = 0; k < grads_[i].size(); ++k) grads_[i][k] += other.grads_[i][k];
  }
}

void GradBuffer::scale(double s) {
  for (auto& g : grads_) {
    for (double& v : g) v *= s;
  }
}

void collect_grads(const Tape& tape, const ParamList& params, GradBuffer& out) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = tape.grad_of(*params[i].tensor);
    if (g.empty()) continue;
    auto& dst = out[i];
    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
  }
}

std::uint64_t checksum(const ParamList& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    for (double v : p.tensor->data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace txfuse::numcore
