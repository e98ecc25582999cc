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

#include "txfuse/numcore/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace txfuse::numcore {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC view(const Tensor& t) {
  return MapC(t.data().data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}
Map view(double* p, std::size_t r, std::size_t c) {
  return Map(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 operand, got " +
                     shape_string(t.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

// Broadcast layout of the right operand of an elementwise op.
struct Broadcast {
  std::size_t rows, cols;   // of the output
  bool row_step, col_step;  // whether b advances along rows / cols
  std::size_t b_cols;
  std::size_t b_index(std::size_t i, std::size_t j) const {
    return (row_step ? i : 0) * b_cols + (col_step ? j : 0);
  }
};

Broadcast broadcast(const Tensor& a, const Tensor& b, const char* op) {
  require_matrix(a, op);
  require_matrix(b, op);
  const bool rows_ok = b.rows() == a.rows() || b.rows() == 1;
  const bool cols_ok = b.cols() == a.cols() || b.cols() == 1;
  if (!rows_ok || !cols_ok) mismatch(op, a, b);
  return {a.rows(), a.cols(), b.rows() != 1 || a.rows() == 1,
          b.cols() != 1 || a.cols() == 1, b.cols()};
}

// f(x, y) with partials dfx(x, y, out) and dfy(x, y, out).
template <typename F, typename Dx, typename Dy>
Var binary(Var a, Var b, const char* op, F f, Dx dfx, Dy dfy) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = broadcast(av, bv, op);
  Tensor out({bc.rows, bc.cols});
  for (std::size_t i = 0; i < bc.rows; ++i) {
    for (std::size_t j = 0; j < bc.cols; ++j) {
      out[i * bc.cols + j] = f(av[i * bc.cols + j], bv[bc.b_index(i, j)]);
    }
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(
      std::move(out), {a, b},
      [ia, ib, bc, dfx, dfy](Tape& t, std::span<const double> g) {
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(ib);
        double* gx = t.grad_slot(ia);
        double* gy = t.grad_slot(ib);
        for (std::size_t i = 0; i < bc.rows; ++i) {
          for (std::size_t j = 0; j < bc.cols; ++j) {
            const std::size_t k = i * bc.cols + j;
            const std::size_t kb = bc.b_index(i, j);
            if (gx) gx[k] += g[k] * dfx(x[k], y[kb]);
            if (gy) gy[kb] += g[k] * dfy(x[k], y[kb]);
          }
        }
      },
      op);
}

// Elementwise unary op; df(x, y) gets the input and the output value.
template <typename F, typename D>
Var unary(Var a, const char* op, F f, D df) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t k = 0; k < av.size(); ++k) out[k] = f(av[k]);
  const auto ia = a.id();
  const auto io = static_cast<std::uint32_t>(a.tape()->size());
  return a.tape()->record(
      std::move(out), {a},
      [ia, io, df](Tape& t, std::span<const double> g) {
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(io);
        double* gx = t.grad_slot(ia);
        for (std::size_t k = 0; k < x.size(); ++k) gx[k] += g[k] * df(x[k], y[k]);
      },
      op);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) mismatch("matmul", a, b);
  Tensor out({a.rows(), b.cols()});
  view(out.data().data(), a.rows(), b.cols()).noalias() = view(a) * view(b);
  return out;
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out = matmul(av, bv);
  const auto ia = a.id(), ib = b.id();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  return a.tape()->record(
      std::move(out), {a, b},
      [ia, ib, m, k, n](Tape& t, std::span<const double> g) {
        MapC G(g.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        if (double* ga = t.grad_slot(ia)) {
          view(ga, m, k).noalias() += G * view(t.value(ib)).transpose();
        }
        if (double* gb = t.grad_slot(ib)) {
          view(gb, k, n).noalias() += view(t.value(ia)).transpose() * G;
        }
      },
      "matmul");
}

Var matmul_nt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul_nt");
  require_matrix(bv, "matmul_nt");
  if (av.cols() != bv.cols()) mismatch("matmul_nt", av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out({m, n});
  view(out.data().data(), m, n).noalias() = view(av) * view(bv).transpose();
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(
      std::move(out), {a, b},
      [ia, ib, m, k, n](Tape& t, std::span<const double> g) {
        MapC G(g.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        if (double* ga = t.grad_slot(ia)) {
          view(ga, m, k).noalias() += G * view(t.value(ib));
        }
        if (double* gb = t.grad_slot(ib)) {
          view(gb, n, k).noalias() += G.transpose() * view(t.value(ia));
        }
      },
      "matmul_nt");
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_matrix(av, "transpose");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({n, m});
  view(out.data().data(), n, m) = view(av).transpose();
  const auto ia = a.id();
  return a.tape()->record(
      std::move(out), {a},
      [ia, m, n](Tape& t, std::span<const double> g) {
        MapC G(g.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
        view(t.grad_slot(ia), m, n) += G.transpose();
      },
      "transpose");
}

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Var scale(Var a, double s) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t k = 0; k < av.size(); ++k) out[k] = av[k] * s;
  const auto ia = a.id();
  return a.tape()->record(
      std::move(out), {a},
      [ia, s](Tape& t, std::span<const double> g) {
        double* gx = t.grad_slot(ia);
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * s;
      },
      "scale");
}

Var add_scalar(Var a, double s) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t k = 0; k < av.size(); ++k) out[k] = av[k] + s;
  const auto ia = a.id();
  return a.tape()->record(
      std::move(out), {a},
      [ia](Tape& t, std::span<const double> g) {
        double* gx = t.grad_slot(ia);
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
      },
      "add_scalar");
}

Var exp(Var a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var pow_scalar(Var a, double p) {
  return unary(
      a, "pow", [p](double x) { return std::pow(x, p); },
      [p](double x, double) { return p == 1.0 ? 1.0 : p * std::pow(x, p - 1.0); });
}

Var prelu(Var a, Var slope) {
  return binary(
      a, slope, "prelu", [](double x, double s) { return x > 0.0 ? x : s * x; },
      [](double x, double s) { return x > 0.0 ? 1.0 : s; },
      [](double x, double) { return x > 0.0 ? 0.0 : x; });
}

Var gelu(Var a) {
  // 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
  constexpr double kC = 0.7978845608028654;
  Var cube = mul(mul(a, a), a);
  Var inner = scale(add(a, scale(cube, 0.044715)), kC);
  return mul(scale(a, 0.5), add_scalar(tanh(inner), 1.0));
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    mismatch("layer_norm", xv, gain.value());
  }
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor out({m, n});
  std::vector<double> xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xv[i * n + j] - mu) * inv_std[i];
      xhat[i * n + j] = h;
      out[i * n + j] = gv[j] * h + bv[j];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape()->record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, std::span<const double> g) {
        const Tensor& gv = t.value(ig);
        double* gx = t.grad_slot(ix);
        double* gg = t.grad_slot(ig);
        double* gb = t.grad_slot(ib);
        std::vector<double> dxhat(n);
        for (std::size_t i = 0; i < m; ++i) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t k = i * n + j;
            if (gg) gg[j] += g[k] * xhat[k];
            if (gb) gb[j] += g[k];
            dxhat[j] = g[k] * gv[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat[k];
          }
          if (!gx) continue;
          mean_d /= static_cast<double>(n);
          mean_dx /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t k = i * n + j;
            gx[k] += inv_std[i] * (dxhat[j] - mean_d - xhat[k] * mean_dx);
          }
        }
      },
      "layer_norm");
}

Tensor softmax_rows(const Tensor& x, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("softmax temperature must be positive");
  }
  require_matrix(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp((x[i * n + j] - mx) / temperature);
      out[i * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return out;
}

Var softmax_rows(Var x, double temperature) {
  Tensor out = softmax_rows(x.value(), temperature);
  const std::size_t m = out.rows(), n = out.cols();
  const auto ix = x.id();
  const auto io = static_cast<std::uint32_t>(x.tape()->size());
  return x.tape()->record(
      std::move(out), {x},
      [ix, io, m, n, temperature](Tape& t, std::span<const double> g) {
        const Tensor& y = t.value(io);
        double* gx = t.grad_slot(ix);
        for (std::size_t i = 0; i < m; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t k = i * n + j;
            gx[k] += y[k] * (g[k] - dot) / temperature;
          }
        }
      },
      "softmax_rows");
}

Var log_softmax_rows(Var x, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("softmax temperature must be positive");
  }
  const Tensor& xv = x.value();
  require_matrix(xv, "log_softmax_rows");
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -INFINITY;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (xv[i * n + j] / temperature > mx) {
        mx = xv[i * n + j] / temperature;
        arg = j;
      }
    }
    // log1p over the non-max terms keeps precision when one entry dominates.
    double rest = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != arg) rest += std::exp(xv[i * n + j] / temperature - mx);
    }
    const double log_rest = std::log1p(rest);
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = (xv[i * n + j] / temperature - mx) - log_rest;
    }
  }
  const auto ix = x.id();
  const auto io = static_cast<std::uint32_t>(x.tape()->size());
  return x.tape()->record(
      std::move(out), {x},
      [ix, io, m, n, temperature](Tape& t, std::span<const double> g) {
        const Tensor& y = t.value(io);
        double* gx = t.grad_slot(ix);
        for (std::size_t i = 0; i < m; ++i) {
          double gsum = 0.0;
          for (std::size_t j = 0; j < n; ++j) gsum += g[i * n + j];
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t k = i * n + j;
            gx[k] += (g[k] - std::exp(y[k]) * gsum) / temperature;
          }
        }
      },
      "log_softmax_rows");
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  const Tensor& tv = table.value();
  require_matrix(tv, "gather_rows");
  const std::size_t n = tv.cols();
  Tensor out({ids.size(), n});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows()) {
      throw std::out_of_range("gather_rows: row " + std::to_string(ids[r]) +
                              " out of range " + std::to_string(tv.rows()));
    }
    std::copy_n(tv.data().data() + ids[r] * n, n, out.data().data() + r * n);
  }
  const auto it = table.id();
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return table.tape()->record(
      std::move(out), {table},
      [it, n, idx = std::move(idx)](Tape& t, std::span<const double> g) {
        double* gt = t.grad_slot(it);
        for (std::size_t r = 0; r < idx.size(); ++r) {
          for (std::size_t j = 0; j < n; ++j) gt[idx[r] * n + j] += g[r * n + j];
        }
      },
      "gather_rows");
}

Var replace_rows(Var x, std::span<const std::size_t> rows, Var token) {
  const Tensor& xv = x.value();
  const Tensor& tv = token.value();
  require_matrix(xv, "replace_rows");
  const std::size_t n = xv.cols();
  if (tv.size() != n) mismatch("replace_rows", xv, tv);
  Tensor out = xv;
  out.set_requires_grad(false);
  std::vector<char> replaced(xv.rows(), 0);
  for (std::size_t r : rows) {
    if (r >= xv.rows()) throw std::out_of_range("replace_rows: row out of range");
    replaced[r] = 1;
    std::copy_n(tv.data().data(), n, out.data().data() + r * n);
  }
  const auto ix = x.id(), itok = token.id();
  return x.tape()->record(
      std::move(out), {x, token},
      [ix, itok, n, replaced = std::move(replaced)](Tape& t, std::span<const double> g) {
        double* gx = t.grad_slot(ix);
        double* gt = t.grad_slot(itok);
        for (std::size_t r = 0; r < replaced.size(); ++r) {
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t k = r * n + j;
            if (replaced[r]) {
              if (gt) gt[j] += g[k];
            } else if (gx) {
              gx[k] += g[k];
            }
          }
        }
      },
      "replace_rows");
}

Var segment_sum(Var x, std::span<const std::size_t> src,
                std::span<const std::size_t> dst, std::span<const double> coef,
                std::size_t n_out) {
  const Tensor& xv = x.value();
  require_matrix(xv, "segment_sum");
  if (src.size() != dst.size() || src.size() != coef.size()) {
    throw ShapeError("segment_sum: src/dst/coef lengths differ");
  }
  const std::size_t n = xv.cols();
  Tensor out({n_out, n});
  for (std::size_t e = 0; e < src.size(); ++e) {
    if (src[e] >= xv.rows() || dst[e] >= n_out) {
      throw std::out_of_range("segment_sum: edge endpoint out of range");
    }
    const double c = coef[e];
    const double* xs = xv.data().data() + src[e] * n;
    double* od = out.data().data() + dst[e] * n;
    for (std::size_t j = 0; j < n; ++j) od[j] += c * xs[j];
  }
  const auto ix = x.id();
  return x.tape()->record(
      std::move(out), {x},
      [ix, n, s = std::vector<std::size_t>(src.begin(), src.end()),
       d = std::vector<std::size_t>(dst.begin(), dst.end()),
       c = std::vector<double>(coef.begin(), coef.end())](Tape& t,
                                                          std::span<const double> g) {
        double* gx = t.grad_slot(ix);
        for (std::size_t e = 0; e < s.size(); ++e) {
          const double* gd = g.data() + d[e] * n;
          double* gs = gx + s[e] * n;
          for (std::size_t j = 0; j < n; ++j) gs[j] += c[e] * gd[j];
        }
      },
      "segment_sum");
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t m = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != m) mismatch("concat_cols", parts[0].value(), p.value());
    widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor out({m, total});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(v.data().data() + i * v.cols(), v.cols(),
                  out.data().data() + i * total + off);
    }
    off += v.cols();
  }
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts[0].tape()->record(
      std::move(out), parts,
      [ids, widths, m, total](Tape& t, std::span<const double> g) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (double* gp = t.grad_slot(ids[p])) {
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t j = 0; j < widths[p]; ++j) {
                gp[i * widths[p] + j] += g[i * total + off + j];
              }
            }
          }
          off += widths[p];
        }
      },
      "concat_cols");
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t n = parts[0].value().cols();
  std::size_t total = 0;
  std::vector<std::size_t> sizes;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_rows");
    if (p.value().cols() != n) mismatch("concat_rows", parts[0].value(), p.value());
    sizes.push_back(p.value().size());
    total += p.value().rows();
  }
  Tensor out({total, n});
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.value().size();
  }
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts[0].tape()->record(
      std::move(out), parts,
      [ids, sizes](Tape& t, std::span<const double> g) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (double* gp = t.grad_slot(ids[p])) {
            for (std::size_t k = 0; k < sizes[p]; ++k) gp[k] += g[off + k];
          }
          off += sizes[p];
        }
      },
      "concat_rows");
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_cols");
  if (begin > end || end > xv.cols()) throw std::out_of_range("slice_cols: bad range");
  const std::size_t m = xv.rows(), n = xv.cols(), w = end - begin;
  Tensor out({m, w});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(xv.data().data() + i * n + begin, w, out.data().data() + i * w);
  }
  const auto ix = x.id();
  return x.tape()->record(
      std::move(out), {x},
      [ix, m, n, w, begin](Tape& t, std::span<const double> g) {
        double* gx = t.grad_slot(ix);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < w; ++j) gx[i * n + begin + j] += g[i * w + j];
        }
      },
      "slice_cols");
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_rows");
  if (begin > end || end > xv.rows()) throw std::out_of_range("slice_rows: bad range");
  const std::size_t n = xv.cols();
  Tensor out({end - begin, n});
  std::copy_n(xv.data().data() + begin * n, (end - begin) * n, out.data().data());
  const auto ix = x.id();
  return x.tape()->record(
      std::move(out), {x},
      [ix, n, begin](Tape& t, std::span<const double> g) {
        double* gx = t.grad_slot(ix);
        for (std::size_t k = 0; k < g.size(); ++k) gx[begin * n + k] += g[k];
      },
      "slice_rows");
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const auto ix = x.id();
  return x.tape()->record(
      Tensor::scalar(s), {x},
      [ix](Tape& t, std::span<const double> g) {
        double* gx = t.grad_slot(ix);
        const std::size_t n = t.value(ix).size();
        for (std::size_t k = 0; k < n; ++k) gx[k] += g[0];
      },
      "sum");
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var mean_rows(Var x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "mean_rows");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (m == 0) throw ShapeError("mean_rows of empty tensor");
  Tensor out({1, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += xv[i * n + j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(m);
  const auto ix = x.id();
  return x.tape()->record(
      std::move(out), {x},
      [ix, m, n](Tape& t, std::span<const double> g) {
        double* gx = t.grad_slot(ix);
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j] * inv;
        }
      },
      "mean_rows");
}

Var sum_cols(Var x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "sum_cols");
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out({m, 1});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i] += xv[i * n + j];
  }
  const auto ix = x.id();
  return x.tape()->record(
      std::move(out), {x},
      [ix, m, n](Tape& t, std::span<const double> g) {
        double* gx = t.grad_slot(ix);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i];
        }
      },
      "sum_cols");
}

Var pick(Var x, std::span<const std::size_t> cols) {
  const Tensor& xv = x.value();
  require_matrix(xv, "pick");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (cols.size() != m) throw ShapeError("pick: one column index per row required");
  Tensor out({m, 1});
  for (std::size_t i = 0; i < m; ++i) {
    if (cols[i] >= n) throw std::out_of_range("pick: column out of range");
    out[i] = xv[i * n + cols[i]];
  }
  const auto ix = x.id();
  return x.tape()->record(
      std::move(out), {x},
      [ix, n, c = std::vector<std::size_t>(cols.begin(), cols.end())](
          Tape& t, std::span<const double> g) {
        double* gx = t.grad_slot(ix);
        for (std::size_t i = 0; i < c.size(); ++i) gx[i * n + c[i]] += g[i];
      },
      "pick");
}

namespace {

constexpr double kNormFloor = 1e-12;

// Unit-normalizes each row; rows with norm below the floor become zero.
void normalize(const Tensor& x, std::vector<double>& unit, std::vector<double>& norm) {
  const std::size_t m = x.rows(), n = x.cols();
  unit.assign(m * n, 0.0);
  norm.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x[i * n + j] * x[i * n + j];
    norm[i] = std::sqrt(s);
    if (norm[i] < kNormFloor) continue;
    for (std::size_t j = 0; j < n; ++j) unit[i * n + j] = x[i * n + j] / norm[i];
  }
}

// Pulls a gradient w.r.t. unit rows back through the normalization.
void normalize_backward(const std::vector<double>& unit, const std::vector<double>& norm,
                        const std::vector<double>& dunit, std::size_t n, double* gx) {
  const std::size_t m = norm.size();
  for (std::size_t i = 0; i < m; ++i) {
    if (norm[i] < kNormFloor) continue;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += unit[i * n + j] * dunit[i * n + j];
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = i * n + j;
      gx[k] += (dunit[k] - unit[k] * dot) / norm[i];
    }
  }
}

}  // namespace

Var cosine_rows(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "cosine_rows");
  if (av.shape() != bv.shape()) mismatch("cosine_rows", av, bv);
  const std::size_t m = av.rows(), n = av.cols();
  std::vector<double> ua, na, ub, nb;
  normalize(av, ua, na);
  normalize(bv, ub, nb);
  Tensor out({m, 1});
  for (std::size_t i = 0; i < m; ++i) {
    double c = 0.0;
    for (std::size_t j = 0; j < n; ++j) c += ua[i * n + j] * ub[i * n + j];
    out[i] = c;
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(
      std::move(out), {a, b},
      [ia, ib, m, n, ua = std::move(ua), na = std::move(na), ub = std::move(ub),
       nb = std::move(nb)](Tape& t, std::span<const double> g) {
        std::vector<double> d(m * n);
        if (double* ga = t.grad_slot(ia)) {
          for (std::size_t k = 0; k < m * n; ++k) d[k] = g[k / n] * ub[k];
          normalize_backward(ua, na, d, n, ga);
        }
        if (double* gb = t.grad_slot(ib)) {
          for (std::size_t k = 0; k < m * n; ++k) d[k] = g[k / n] * ua[k];
          normalize_backward(ub, nb, d, n, gb);
        }
      },
      "cosine_rows");
}

Var cosine_matrix(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "cosine_matrix");
  require_matrix(bv, "cosine_matrix");
  if (av.cols() != bv.cols()) mismatch("cosine_matrix", av, bv);
  const std::size_t m = av.rows(), p = bv.rows(), n = av.cols();
  std::vector<double> ua, na, ub, nb;
  normalize(av, ua, na);
  normalize(bv, ub, nb);
  Tensor out({m, p});
  view(out.data().data(), m, p).noalias() =
      MapC(ua.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)) *
      MapC(ub.data(), static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n))
          .transpose();
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(
      std::move(out), {a, b},
      [ia, ib, m, p, n, ua = std::move(ua), na = std::move(na), ub = std::move(ub),
       nb = std::move(nb)](Tape& t, std::span<const double> g) {
        MapC G(g.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
        MapC UA(ua.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        MapC UB(ub.data(), static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
        if (double* ga = t.grad_slot(ia)) {
          std::vector<double> d(m * n);
          view(d.data(), m, n).noalias() = G * UB;
          normalize_backward(ua, na, d, n, ga);
        }
        if (double* gb = t.grad_slot(ib)) {
          std::vector<double> d(p * n);
          view(d.data(), p, n).noalias() = G.transpose() * UA;
          normalize_backward(ub, nb, d, n, gb);
        }
      },
      "cosine_matrix");
}

}  // namespace txfuse::numcore
