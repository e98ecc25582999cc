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

#include <functional>
#include <vector>

#include "txfuse/common/parallel.hpp"
#include "txfuse/numcore/params.hpp"
#include "txfuse/numcore/tape.hpp"

namespace txfuse::numcore {

// Builds one tape per sample, runs backward on each and sums the gradients
// in sample order, so the result does not depend on the thread count.
// `loss_fn(i, tape)` returns sample i's scalar loss. Returns the summed
// gradient; per-sample loss values are written to `losses` when given.
inline GradBuffer batch_gradients(const ParamList& params, std::size_t n,
                                  const std::function<Var(std::size_t, Tape&)>& loss_fn,
                                  std::vector<double>* losses = nullptr,
                                  std::size_t threads = 1) {
  std::vector<GradBuffer> per(n, GradBuffer(params));
  std::vector<double> values(n, 0.0);
  parallel_for(
      n,
      [&](std::size_t i) {
        Tape tape;
        Var loss = loss_fn(i, tape);
        values[i] = loss.value().item();
        tape.backward(loss);
        collect_grads(tape, params, per[i]);
      },
      threads);
  GradBuffer total(params);
  for (const auto& g : per) total.add(g);
  if (losses) *losses = std::move(values);
  return total;
}

}  // namespace txfuse::numcore
