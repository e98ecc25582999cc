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
#include <span>
#include <string>
#include <vector>

#include "txfuse/common/rng.hpp"
#include "txfuse/numcore/tensor.hpp"

namespace txfuse::numcore {

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

// Ordered view over a model's parameters. Order is the checkpoint order and
// the gradient-buffer order.
using ParamList = std::vector<NamedParam>;

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);
Tensor make_param(Tensor t);

// Per-parameter gradient storage aligned with a ParamList.
class GradBuffer {
 public:
  GradBuffer() = default;
  explicit GradBuffer(const ParamList& params);

  std::vector<double>& operator[](std::size_t i) { return grads_[i]; }
  const std::vector<double>& operator[](std::size_t i) const { return grads_[i]; }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void add(const GradBuffer& other);
  void scale(double s);

 private:
  std::vector<std::vector<double>> grads_;
};

class Tape;
// Adds the tape's adjoints for every listed parameter into `out`.
void collect_grads(const Tape& tape, const ParamList& params, GradBuffer& out);

// FNV-1a over the raw bytes of every parameter, in list order.
std::uint64_t checksum(const ParamList& params);

}  // namespace txfuse::numcore
