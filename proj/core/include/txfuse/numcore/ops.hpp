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

#include <cstddef>
#include <span>
#include <vector>

#include "txfuse/numcore/tape.hpp"

// The closed set of differentiable primitives every model is built from.
// All operands are rank-2. Binary elementwise ops broadcast the right-hand
// operand when it is 1x1, 1xN (per row) or Mx1 (per column).
namespace txfuse::numcore {

Var matmul(Var a, Var b);     // [m,k] x [k,n]
Var matmul_nt(Var a, Var b);  // [m,k] x [n,k]^T
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var relu(Var a);
Var prelu(Var a, Var slope);  // slope is 1xN or 1x1
Var pow_scalar(Var a, double p);  // a >= 0
Var gelu(Var a);  // tanh approximation, composed from primitives above

Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

Var softmax_rows(Var x, double temperature = 1.0);
Var log_softmax_rows(Var x, double temperature = 1.0);

Var gather_rows(Var table, std::span<const std::size_t> ids);
// Rows listed in `rows` are replaced by the 1xN `token`.
Var replace_rows(Var x, std::span<const std::size_t> rows, Var token);
// out[dst[e]] += coef[e] * x[src[e]], out has n_out rows.
Var segment_sum(Var x, std::span<const std::size_t> src,
                std::span<const std::size_t> dst, std::span<const double> coef,
                std::size_t n_out);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var slice_rows(Var x, std::size_t begin, std::size_t end);

Var sum(Var x);          // 1x1
Var mean(Var x);         // 1x1
Var mean_rows(Var x);    // 1xN, average of the rows
Var sum_cols(Var x);     // Mx1, per-row sum
Var pick(Var x, std::span<const std::size_t> cols);  // Mx1, x[i, cols[i]]

// Row-wise cosine of a[i] and b[i] (Mx1) and all-pairs cosine (MxN).
// Zero-norm rows give cosine 0.
Var cosine_rows(Var a, Var b);
Var cosine_matrix(Var a, Var b);

// Plain (tape-free) helpers used by inference paths and tests.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x, double temperature = 1.0);

}  // namespace txfuse::numcore
