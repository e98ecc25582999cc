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

#include "txfuse/numcore/tape.hpp"

#include <string>

namespace txfuse::numcore {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("use of an empty Var");
  return tape_->value(id_);
}

Var Tape::push(Node node) {
#ifndef NDEBUG
  if (!node.value.all_finite()) {
    throw NonFiniteError(std::string("non-finite output from op '") + node.op +
                         "'");
  }
#endif
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.op = "constant";
  return push(std::move(node));
}

Var Tape::param(Tensor& parameter) {
  if (auto it = param_ids_.find(&parameter); it != param_ids_.end()) {
    return Var(this, it->second);
  }
  Node node;
  // Snapshot of the values only; parameters are not mutated mid-tape.
  node.value = Tensor(parameter.shape(), parameter.storage());
  node.parameter = &parameter;
  node.needs_grad = parameter.requires_grad();
  node.op = "param";
  Var v = push(std::move(node));
  param_ids_.emplace(&parameter, v.id());
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward, const char* op) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward),
                op);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs,
                 BackwardFn backward, const char* op) {
  Node node;
  node.value = std::move(value);
  node.op = op;
  for (const Var& in : inputs) {
    if (in.tape() != this) {
      throw std::logic_error(std::string("op '") + op +
                             "' mixes values from different tapes");
    }
    node.inputs.push_back(in.id());
    node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

double* Tape::grad_slot(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return nullptr;
  if (n.adjoint.size() != n.value.size()) n.adjoint.assign(n.value.size(), 0.0);
  return n.adjoint.data();
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::logic_error("loss recorded on another tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     shape_string(loss.value().shape()));
  }
  if (backward_done_) throw std::logic_error("backward() already ran on this tape");
  backward_done_ = true;
  if (!nodes_[loss.id()].needs_grad) return;
  grad_slot(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.adjoint.empty() || !n.backward) continue;
    n.backward(*this, n.adjoint);
  }
}

std::span<const double> Tape::adjoint(Var v) const {
  return nodes_[v.id()].adjoint;
}

std::span<const double> Tape::grad_of(const Tensor& parameter) const {
  auto it = param_ids_.find(&parameter);
  if (it == param_ids_.end()) return {};
  return nodes_[it->second].adjoint;
}

void Tape::accumulate_param_grads() {
  for (auto& [ptr, id] : param_ids_) {
    Node& n = nodes_[id];
    if (n.adjoint.empty() || !n.parameter) continue;
    auto g = n.parameter->grad();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.adjoint[k];
  }
}

void Tape::clear() {
  nodes_.clear();
  param_ids_.clear();
  backward_done_ = false;
}

}  // namespace txfuse::numcore
