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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "txfuse/txcorpus/ingest.hpp"

namespace txfuse::harness {

struct ClassBehavior {
  double tx_mean = 4.0;         // transactions initiated per account
  double lifetime_min_days = 30;
  double lifetime_max_days = 365;
  double amount_mu = -1.0;      // log-normal amount parameters (ETH)
  double amount_sigma = 1.5;
  double burstiness = 0.0;      // probability that a transfer joins the previous burst
};

// Fraud accounts carry a random subset of three planted traits, each one
// visible to a different view of the data:
//   night  - transfers between 00:00 and 05:00 UTC (token sequences only);
//   fanout - every transfer goes to a different established account
//            (degree and centrality features);
//   fresh  - counterparties are throwaway addresses used by nobody else
//            (neighbourhood features).
// Some normal accounts carry one trait as a confounder.
struct SyntheticSpec {
  std::size_t n_accounts = 2000;
  double fraud_fraction = 0.1;
  double horizon_days = 365;
  std::size_t community_size = 40;
  std::size_t contacts = 3;          // counterparties reused by a normal account
  std::size_t fanout_degree = 10;    // minimum distinct counterparties under the fanout trait
  std::size_t hubs = 5;              // exchange-like addresses shared by everyone
  double hub_probability = 0.1;
  double fraud_all_traits = 0.15;    // fraction of fraud with all three traits
  double normal_one_trait = 0.3;     // fraction of normal accounts with one trait
  double night_share = 0.9;          // share of night transfers under the night trait
  ClassBehavior normal{};
  ClassBehavior fraud{.tx_mean = 5.0,
                      .lifetime_min_days = 10,
                      .lifetime_max_days = 200,
                      .amount_mu = -0.5,
                      .amount_sigma = 1.2,
                      .burstiness = 0.3};

  void validate() const;
};

enum Trait : std::uint8_t { kNight = 1, kFanout = 2, kFresh = 4 };

struct SyntheticData {
  std::vector<txcorpus::Transfer> transfers;  // sorted by timestamp
  std::map<std::string, int> labels;          // labelled accounts only
  std::map<std::string, std::uint8_t> traits;
  std::vector<std::string> accounts;          // labelled, in generation order
};

inline constexpr std::int64_t kSyntheticEpoch = 1'599'955'200;  // 2020-09-13 00:00 UTC

SyntheticData synth_generate(const SyntheticSpec& spec, std::uint64_t seed);

// transfers.jsonl, labels.csv (address,label) and traits.csv.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

std::map<std::string, int> read_labels(const std::filesystem::path& path);

}  // namespace txfuse::harness
