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
#include <deque>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "txfuse/common/parallel.hpp"
#include "txfuse/common/rng.hpp"
#include "txfuse/graphbuild/features.hpp"

namespace txfuse::graphbuild {
namespace {

// Fixed reduction granularity so sums do not depend on the thread count.
constexpr std::size_t kReduceChunks = 64;

// Unweighted single-source shortest paths on the undirected projection.
struct Bfs {
  std::vector<std::int64_t> dist;
  std::vector<std::uint32_t> order;
  std::deque<std::uint32_t> queue;

  void run(const AccountGraph& g, std::uint32_t s) {
    dist.assign(g.num_nodes(), -1);
    order.clear();
    queue.clear();
    dist[s] = 0;
    queue.push_back(s);
    while (!queue.empty()) {
      const std::uint32_t v = queue.front();
      queue.pop_front();
      order.push_back(v);
      for (std::uint32_t w : g.undirected_neighbors(v)) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          queue.push_back(w);
        }
      }
    }
  }
};

double l1_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

void l2_normalize(std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  s = std::sqrt(s);
  if (s > 0.0) {
    for (double& v : x) v /= s;
  }
}

}  // namespace

const std::array<std::string, kNumFeatures>& feature_names() {
  static const std::array<std::string, kNumFeatures> names = {
      "outdegree",          "indegree",           "max_outgoing",        "min_outgoing",
      "max_incoming",       "min_incoming",       "avg_outgoing",        "avg_incoming",
      "balance",            "lifetime_days",      "long_incoming_freq",  "short_incoming_freq",
      "long_outgoing_freq", "short_outgoing_freq", "degree_centrality",  "indegree_centrality",
      "outdegree_centrality", "betweenness",      "closeness",           "eigenvector",
      "katz",               "clustering"};
  return names;
}

TransactionStats transaction_stats(const AccountGraph& g, const std::string& account) {
  return transaction_stats(g, g.require(account));
}

TransactionStats transaction_stats(const AccountGraph& g, std::uint32_t v) {
  if (v >= g.num_nodes()) throw std::out_of_range("transaction_stats: unknown node");
  TransactionStats s;
  double sum_out = 0.0, sum_in = 0.0;
  if (g.has_events()) {
    auto ev = g.events(v);
    for (const auto& e : ev) {
      if (e.direction > 0) {
        s.max_out = s.out_degree == 0 ? e.value : std::max(s.max_out, e.value);
        s.min_out = s.out_degree == 0 ? e.value : std::min(s.min_out, e.value);
        sum_out += e.value;
        ++s.out_degree;
      } else {
        s.max_in = s.in_degree == 0 ? e.value : std::max(s.max_in, e.value);
        s.min_in = s.in_degree == 0 ? e.value : std::min(s.min_in, e.value);
        sum_in += e.value;
        ++s.in_degree;
      }
    }
    if (!ev.empty()) {
      s.lifetime_days =
          static_cast<double>(ev.back().timestamp - ev.front().timestamp) / 86400.0;
    }
  } else {
    // Edge lists carry only per-edge totals; per-edge means stand in for
    // individual transfers.
    auto side = [](std::span<const std::uint64_t> counts, std::span<const double> values,
                   double& deg, double& mx, double& mn, double& sum) {
      for (std::size_t k = 0; k < counts.size(); ++k) {
        const double mean = values[k] / static_cast<double>(counts[k]);
        mx = deg == 0 ? mean : std::max(mx, mean);
        mn = deg == 0 ? mean : std::min(mn, mean);
        deg += static_cast<double>(counts[k]);
        sum += values[k];
      }
    };
    side(g.out_counts(v), g.out_values(v), s.out_degree, s.max_out, s.min_out, sum_out);
    side(g.in_counts(v), g.in_values(v), s.in_degree, s.max_in, s.min_in, sum_in);
  }
  s.no_outgoing = s.out_degree == 0;
  s.no_incoming = s.in_degree == 0;
  s.avg_out = s.no_outgoing ? 0.0 : sum_out / s.out_degree;
  s.avg_in = s.no_incoming ? 0.0 : sum_in / s.in_degree;
  s.balance = sum_in - sum_out;
  return s;
}

TransferFrequencies transfer_frequencies(std::span<const TxEvent> events, std::int64_t long_window,
                                         std::int64_t short_window) {
  if (long_window <= 0 || short_window <= 0 || long_window <= short_window) {
    throw std::invalid_argument("transfer_frequencies: need long > short > 0");
  }
  TransferFrequencies f;
  if (events.empty()) return f;
  std::int64_t last = events.front().timestamp;
  for (const auto& e : events) last = std::max(last, e.timestamp);
  for (const auto& e : events) {
    const std::int64_t age = last - e.timestamp;
    const bool in = e.direction < 0;
    if (age <= long_window) (in ? f.long_in : f.long_out) += 1;
    if (age <= short_window) (in ? f.short_in : f.short_out) += 1;
  }
  return f;
}

std::vector<double> degree_centrality(const AccountGraph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> out(n, 0.0);
  if (n <= 1) return out;
  for (std::uint32_t v = 0; v < n; ++v) {
    out[v] = static_cast<double>(g.in_neighbors(v).size() + g.out_neighbors(v).size()) /
             static_cast<double>(n - 1);
  }
  return out;
}

std::vector<double> betweenness(const AccountGraph& g, bool normalized,
                                const CentralityOptions& opt) {
  const std::size_t n = g.num_nodes();
  std::vector<std::uint32_t> sources(n);
  std::iota(sources.begin(), sources.end(), 0u);
  double sample_scale = 1.0;
  if (n > opt.exact_betweenness_limit && opt.betweenness_pivots < n) {
    Rng rng = Rng::stream(opt.seed, "graphbuild.pivots");
    rng.shuffle(sources);
    sources.resize(opt.betweenness_pivots);
    std::sort(sources.begin(), sources.end());
    sample_scale = static_cast<double>(n) / static_cast<double>(sources.size());
  }
  const std::size_t chunks = std::min(kReduceChunks, std::max<std::size_t>(1, sources.size()));
  std::vector<std::vector<double>> partial(chunks, std::vector<double>(n, 0.0));
  parallel_for(
      chunks,
      [&](std::size_t c) {
        const std::size_t lo = sources.size() * c / chunks;
        const std::size_t hi = sources.size() * (c + 1) / chunks;
        std::vector<double> sigma(n), delta(n);
        std::vector<std::int64_t> dist(n);
        std::vector<std::uint32_t> stack;
        std::deque<std::uint32_t> queue;
        auto& acc = partial[c];
        for (std::size_t si = lo; si < hi; ++si) {
          const std::uint32_t s = sources[si];
          std::fill(sigma.begin(), sigma.end(), 0.0);
          std::fill(delta.begin(), delta.end(), 0.0);
          std::fill(dist.begin(), dist.end(), -1);
          stack.clear();
          sigma[s] = 1.0;
          dist[s] = 0;
          queue.push_back(s);
          while (!queue.empty()) {
            const std::uint32_t v = queue.front();
            queue.pop_front();
            stack.push_back(v);
            for (std::uint32_t w : g.undirected_neighbors(v)) {
              if (dist[w] < 0) {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
              }
              if (dist[w] == dist[v] + 1) sigma[w] += sigma[v];
            }
          }
          for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
            const std::uint32_t w = *it;
            for (std::uint32_t v : g.undirected_neighbors(w)) {
              if (dist[v] == dist[w] - 1) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if (w != s) acc[w] += delta[w];
          }
        }
      },
      opt.threads);
  std::vector<double> cb(n, 0.0);
  for (const auto& p : partial) {
    for (std::size_t v = 0; v < n; ++v) cb[v] += p[v];
  }
  // Each undirected pair is counted from both ends.
  double factor = 0.5 * sample_scale;
  if (normalized) {
    factor = n > 2 ? factor / (static_cast<double>(n - 1) * static_cast<double>(n - 2) / 2.0) : 0.0;
  }
  for (double& v : cb) v *= factor;
  return cb;
}

std::vector<double> closeness(const AccountGraph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> out(n, 0.0);
  if (n <= 1) return out;
  const std::size_t chunks = std::min<std::size_t>(kReduceChunks, n);
  parallel_for(chunks, [&](std::size_t c) {
    Bfs bfs;
    for (std::size_t v = n * c / chunks; v < n * (c + 1) / chunks; ++v) {
      bfs.run(g, static_cast<std::uint32_t>(v));
      double total = 0.0;
      for (std::uint32_t w : bfs.order) total += static_cast<double>(bfs.dist[w]);
      const double reach = static_cast<double>(bfs.order.size()) - 1.0;
      if (total > 0.0) out[v] = (reach / total) * (reach / static_cast<double>(n - 1));
    }
  }, 1);
  return out;
}

std::vector<double> eigenvector_centrality(const AccountGraph& g, const CentralityOptions& opt,
                                           double* lambda, bool* converged) {
  const std::size_t n = g.num_nodes();
  if (n == 0) throw std::invalid_argument("eigenvector_centrality: empty graph");
  std::vector<double> x(n, 1.0 / static_cast<double>(n)), next(n);
  l2_normalize(x);
  std::size_t it = 0;
  for (; it < opt.max_iter; ++it) {
    for (std::uint32_t v = 0; v < n; ++v) {
      double s = x[v];
      for (std::uint32_t w : g.undirected_neighbors(v)) s += x[w];
      next[v] = s;
    }
    l2_normalize(next);
    const double diff = l1_diff(next, x);
    x.swap(next);
    if (diff < static_cast<double>(n) * opt.tol) break;
  }
  if (converged) *converged = it < opt.max_iter;
  if (it == opt.max_iter && !converged) {
    throw ConvergenceError("eigenvector_centrality: no convergence after " +
                               std::to_string(opt.max_iter) + " iterations",
                           opt.max_iter);
  }
  if (lambda) {
    double rq = 0.0;
    for (std::uint32_t v = 0; v < n; ++v) {
      double s = 0.0;
      for (std::uint32_t w : g.undirected_neighbors(v)) s += x[w];
      rq += x[v] * s;
    }
    *lambda = rq;
  }
  return x;
}

std::vector<double> katz_centrality(const AccountGraph& g, double lambda_max, double beta,
                                    bool normalized, const CentralityOptions& opt,
                                    bool* converged) {
  const std::size_t n = g.num_nodes();
  const double alpha = lambda_max > 0.0 ? 0.9 / lambda_max : 0.0;
  std::vector<double> x(n, 0.0), next(n);
  std::size_t it = 0;
  for (; it < opt.max_iter; ++it) {
    for (std::uint32_t v = 0; v < n; ++v) {
      double s = 0.0;
      for (std::uint32_t w : g.undirected_neighbors(v)) s += x[w];
      next[v] = alpha * s + beta;
    }
    const double diff = l1_diff(next, x);
    x.swap(next);
    if (diff < static_cast<double>(n) * opt.tol) break;
  }
  if (converged) *converged = it < opt.max_iter;
  if (it == opt.max_iter && !converged) {
    throw ConvergenceError("katz_centrality: no convergence after " +
                               std::to_string(opt.max_iter) + " iterations",
                           opt.max_iter);
  }
  if (normalized) l2_normalize(x);
  return x;
}

std::vector<double> clustering_coefficient(const AccountGraph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> out(n, 0.0);
  for (std::uint32_t v = 0; v < n; ++v) {
    auto nb = g.undirected_neighbors(v);
    const std::size_t d = nb.size();
    if (d < 2) continue;
    std::size_t links = 0;
    for (std::uint32_t a : nb) {
      auto na = g.undirected_neighbors(a);
      // |N(a) ∩ N(v)| by sorted merge.
      std::size_t i = 0, j = 0;
      while (i < na.size() && j < nb.size()) {
        if (na[i] < nb[j]) {
          ++i;
        } else if (nb[j] < na[i]) {
          ++j;
        } else {
          ++links;
          ++i;
          ++j;
        }
      }
    }
    // Each triangle edge was seen from both endpoints.
    out[v] = static_cast<double>(links) / static_cast<double>(d * (d - 1));
  }
  return out;
}

Centralities centralities(const AccountGraph& g, const CentralityOptions& opt) {
  if (g.num_nodes() == 0) throw std::invalid_argument("centralities: empty graph");
  Centralities c;
  const std::size_t n = g.num_nodes();
  c.degree = degree_centrality(g);
  c.in_degree.assign(n, 0.0);
  c.out_degree.assign(n, 0.0);
  if (n > 1) {
    for (std::uint32_t v = 0; v < n; ++v) {
      c.in_degree[v] = static_cast<double>(g.in_neighbors(v).size()) / static_cast<double>(n - 1);
      c.out_degree[v] = static_cast<double>(g.out_neighbors(v).size()) / static_cast<double>(n - 1);
    }
  }
  c.betweenness = betweenness(g, true, opt);
  c.approximate_betweenness = n > opt.exact_betweenness_limit && opt.betweenness_pivots < n;
  c.closeness = closeness(g);
  c.eigenvector = eigenvector_centrality(g, opt, &c.lambda_max,
                                         opt.strict ? nullptr : &c.eigenvector_converged);
  c.katz = katz_centrality(g, c.lambda_max, 1.0, true, opt,
                           opt.strict ? nullptr : &c.katz_converged);
  c.clustering = clustering_coefficient(g);
  return c;
}

numcore::Tensor raw_features(const AccountGraph& g, const FeatureOptions& opt,
                             RawFeatureInfo* info) {
  const std::size_t n = g.num_nodes();
  numcore::Tensor x({n, kNumFeatures});
  Centralities c = centralities(g, opt.centrality);
  if (info) info->degenerate.assign(n, false);
  for (std::uint32_t v = 0; v < n; ++v) {
    const TransactionStats s = transaction_stats(g, v);
    const TransferFrequencies f =
        transfer_frequencies(g.events(v), opt.long_window, opt.short_window);
    const double row[kNumFeatures] = {
        s.out_degree, s.in_degree, s.max_out,  s.min_out,  s.max_in,  s.min_in,
        s.avg_out,    s.avg_in,    s.balance,  s.lifetime_days,
        f.long_in,    f.short_in,  f.long_out, f.short_out,
        c.degree[v],  c.in_degree[v], c.out_degree[v], c.betweenness[v],
        c.closeness[v], c.eigenvector[v], c.katz[v], c.clustering[v]};
    std::copy(std::begin(row), std::end(row), x.row(v).begin());
    if (info) {
      info->degenerate[v] = s.no_outgoing || s.no_incoming || !g.has_events() ||
                         g.undirected_neighbors(v).size() < 2;
    }
  }
  if (info) {
    info->approximate_betweenness = c.approximate_betweenness;
    info->eigenvector_converged = c.eigenvector_converged;
    info->katz_converged = c.katz_converged;
  }
  return x;
}

NodeFeatureMatrix scale_features(numcore::Tensor raw, const std::vector<std::uint32_t>& fit_nodes,
                                 bool log_transform) {
  if (fit_nodes.empty()) throw std::invalid_argument("assemble_features: empty fit set");
  NodeFeatureMatrix m;
  const std::size_t n = raw.rows(), d = raw.cols();
  m.values = raw;
  m.raw = std::move(raw);
  m.log_transform = log_transform;
  if (log_transform) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= kShortOut; ++j) {
        double& x = m.values.at(i, j);
        x = std::copysign(std::log1p(std::abs(x)), x);
      }
    }
  }
  m.mean.assign(d, 0.0);
  m.scale.assign(d, 1.0);
  m.zero_variance.assign(d, false);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::uint32_t v : fit_nodes) mean += m.values.at(v, j);
    mean /= static_cast<double>(fit_nodes.size());
    double var = 0.0;
    for (std::uint32_t v : fit_nodes) var += (m.values.at(v, j) - mean) * (m.values.at(v, j) - mean);
    var /= static_cast<double>(fit_nodes.size());
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      m.zero_variance[j] = true;
      continue;
    }
    m.mean[j] = mean;
    m.scale[j] = sd;
    for (std::size_t i = 0; i < n; ++i) m.values.at(i, j) = (m.values.at(i, j) - mean) / sd;
  }
  return m;
}

NodeFeatureMatrix assemble_features(const AccountGraph& g,
                                    const std::vector<std::uint32_t>& fit_nodes,
                                    const FeatureOptions& opt) {
  if (fit_nodes.empty()) throw std::invalid_argument("assemble_features: empty fit set");
  RawFeatureInfo info;
  numcore::Tensor raw = raw_features(g, opt, &info);
  NodeFeatureMatrix m = scale_features(std::move(raw), fit_nodes, opt.log_transform);
  m.degenerate = std::move(info.degenerate);
  m.approximate_betweenness = info.approximate_betweenness;
  m.eigenvector_converged = info.eigenvector_converged;
  m.katz_converged = info.katz_converged;
  m.long_window = opt.long_window;
  m.short_window = opt.short_window;
  return m;
}

void NodeFeatureMatrix::write_csv(const std::filesystem::path& path, const AccountGraph& g) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot write " + path.string());
  out.precision(17);
  out << "account";
  for (const auto& name : feature_names()) out << ',' << name;
  out << '\n';
  for (std::uint32_t v = 0; v < values.rows(); ++v) {
    out << g.id(v);
    for (double x : values.row(v)) out << ',' << x;
    out << '\n';
  }
}

void NodeFeatureMatrix::write_metadata(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["columns"] = feature_names();
  j["mean"] = mean;
  j["scale"] = scale;
  j["zero_variance"] = zero_variance;
  j["log_transform"] = log_transform;
  j["long_window_seconds"] = long_window;
  j["short_window_seconds"] = short_window;
  j["betweenness_backend"] = approximate_betweenness ? "pivot-sampled" : "exact";
  j["eigenvector_converged"] = eigenvector_converged;
  j["katz_converged"] = katz_converged;
  std::size_t deg = 0;
  for (bool b : degenerate) deg += b;
  j["degenerate_nodes"] = deg;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metadata: cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace txfuse::graphbuild
