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

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "txfuse/graphbuild/graph.hpp"
#include "txfuse/numcore/tensor.hpp"

namespace txfuse::graphbuild {

inline constexpr std::size_t kNumFeatures = 22;

// Column order of the node feature matrix.
enum Feature : std::size_t {
  kOutDegree,
  kInDegree,
  kMaxOut,
  kMinOut,
  kMaxIn,
  kMinIn,
  kAvgOut,
  kAvgIn,
  kBalance,
  kLifetime,
  kLongIn,
  kShortIn,
  kLongOut,
  kShortOut,
  kDegreeCentrality,
  kInDegreeCentrality,
  kOutDegreeCentrality,
  kBetweenness,
  kCloseness,
  kEigenvector,
  kKatz,
  kClustering,
};

const std::array<std::string, kNumFeatures>& feature_names();

struct TransactionStats {
  double out_degree = 0, in_degree = 0;
  double max_out = 0, min_out = 0, max_in = 0, min_in = 0, avg_out = 0, avg_in = 0;
  double balance = 0, lifetime_days = 0;
  bool no_outgoing = false, no_incoming = false;
};

TransactionStats transaction_stats(const AccountGraph& g, std::uint32_t v);
TransactionStats transaction_stats(const AccountGraph& g, const std::string& account);

struct TransferFrequencies {
  double long_in = 0, short_in = 0, long_out = 0, short_out = 0;
};

inline constexpr std::int64_t kDefaultLongWindow = 30 * 86400;
inline constexpr std::int64_t kDefaultShortWindow = 86400;

// Counts inside trailing windows [last - w, last] where `last` is the
// newest event's timestamp.
TransferFrequencies transfer_frequencies(std::span<const TxEvent> events,
                                         std::int64_t long_window = kDefaultLongWindow,
                                         std::int64_t short_window = kDefaultShortWindow);

struct CentralityOptions {
  double tol = 1e-10;
  std::size_t max_iter = 1000;
  std::size_t exact_betweenness_limit = 50'000;
  std::size_t betweenness_pivots = 256;
  std::uint64_t seed = 0;  // pivot sampling
  std::size_t threads = 1;
  // Throw ConvergenceError from centralities(); otherwise keep the last
  // iterate and report it through the converged flags.
  bool strict = true;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::size_t iterations)
      : std::runtime_error(what), iterations_(iterations) {}
  std::size_t iterations() const { return iterations_; }

 private:
  std::size_t iterations_;
};

struct Centralities {
  std::vector<double> degree, in_degree, out_degree;
  std::vector<double> betweenness, closeness, eigenvector, katz, clustering;
  double lambda_max = 0.0;
  bool approximate_betweenness = false;
  bool eigenvector_converged = true;
  bool katz_converged = true;
};

// Directed degree centralities count distinct neighbours / (n - 1); the
// rest run on the undirected unweighted projection.
Centralities centralities(const AccountGraph& g, const CentralityOptions& opt = {});

std::vector<double> degree_centrality(const AccountGraph& g);
// Brandes; normalized by (n-1)(n-2)/2 when `normalized`.
std::vector<double> betweenness(const AccountGraph& g, bool normalized = true,
                                const CentralityOptions& opt = {});
// Wasserman-Faust closeness.
std::vector<double> closeness(const AccountGraph& g);
// L2-normalized principal eigenvector; power iteration on A + I. Writes the
// eigenvalue of A to *lambda when given.
// With `converged` given, a run that hits max_iter returns its last iterate
// and clears the flag instead of throwing.
std::vector<double> eigenvector_centrality(const AccountGraph& g, const CentralityOptions& opt = {},
                                           double* lambda = nullptr, bool* converged = nullptr);
// x = alpha A x + beta with alpha = 0.9 / lambda_max (0 when lambda_max = 0).
std::vector<double> katz_centrality(const AccountGraph& g, double lambda_max, double beta = 1.0,
                                    bool normalized = true, const CentralityOptions& opt = {},
                                    bool* converged = nullptr);
std::vector<double> clustering_coefficient(const AccountGraph& g);

struct FeatureOptions {
  std::int64_t long_window = kDefaultLongWindow;
  std::int64_t short_window = kDefaultShortWindow;
  // sign(x) log1p(|x|) on the count and amount columns before scaling.
  bool log_transform = true;
  CentralityOptions centrality{.strict = false};
};

struct NodeFeatureMatrix {
  numcore::Tensor raw;     // n x 22, before transform and scaling
  numcore::Tensor values;  // n x 22, model input
  std::vector<double> mean, scale;
  std::vector<bool> zero_variance;
  std::vector<bool> degenerate;  // node has an undefined feature set to 0
  bool log_transform = false;
  bool approximate_betweenness = false;
  bool eigenvector_converged = true;
  bool katz_converged = true;
  std::int64_t long_window = 0, short_window = 0;

  void write_csv(const std::filesystem::path& path, const AccountGraph& g) const;
  void write_metadata(const std::filesystem::path& path) const;
};

// Raw (unscaled) feature matrix in column order.
struct RawFeatureInfo {
  std::vector<bool> degenerate;
  bool approximate_betweenness = false;
  bool eigenvector_converged = true;
  bool katz_converged = true;
};
numcore::Tensor raw_features(const AccountGraph& g, const FeatureOptions& opt,
                             RawFeatureInfo* info = nullptr);

// Fits the per-column z-score on `fit_nodes` and applies it to every row.
NodeFeatureMatrix assemble_features(const AccountGraph& g,
                                    const std::vector<std::uint32_t>& fit_nodes,
                                    const FeatureOptions& opt = {});

// Transform + z-score helper shared with tests.
NodeFeatureMatrix scale_features(numcore::Tensor raw, const std::vector<std::uint32_t>& fit_nodes,
                                 bool log_transform);

}  // namespace txfuse::graphbuild
