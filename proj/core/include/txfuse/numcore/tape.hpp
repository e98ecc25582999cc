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
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "txfuse/numcore/tensor.hpp"

namespace txfuse::numcore {

class Tape;

// Handle to a value recorded on a tape. Cheap to copy; valid while the tape
// lives and has not been cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Records primitive ops in execution order; backward() walks them once in
// reverse. Parameter leaves refer to caller-owned tensors, so several tapes
// may read the same parameters from different threads as long as nobody
// writes to them meanwhile.
class Tape {
 public:
  // Receives the output adjoint. Input adjoints are reached through
  // Tape::grad_slot(), which returns nullptr for inputs that need no gradient.
  using BackwardFn = std::function<void(Tape&, std::span<const double>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Tensor& parameter);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward,
             const char* op);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward,
             const char* op);

  void backward(Var loss);

  std::span<const double> adjoint(Var v) const;
  // Gradient reached for a parameter leaf, empty if it was not used.
  std::span<const double> grad_of(const Tensor& parameter) const;
  // Adds every parameter leaf's adjoint into the parameter's grad slot.
  void accumulate_param_grads();

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  double* grad_slot(std::uint32_t id);

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Tensor value;
    std::vector<double> adjoint;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    Tensor* parameter = nullptr;
    const char* op = "";
    bool needs_grad = false;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Tensor*, std::uint32_t> param_ids_;
  bool backward_done_ = false;
};

}  // namespace txfuse::numcore
