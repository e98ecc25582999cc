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

#include "txfuse/harness/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "txfuse/common/rng.hpp"

namespace txfuse::harness {

namespace {

constexpr double kDay = 86400.0;

void check_behavior(const ClassBehavior& b, double horizon, const char* name) {
  const std::string who(name);
  if (!(b.tx_mean >= 1.0)) throw std::invalid_argument(who + ": tx_mean must be >= 1");
  if (!(b.lifetime_min_days > 0.0) || b.lifetime_min_days > b.lifetime_max_days ||
      b.lifetime_max_days > horizon) {
    throw std::invalid_argument(who + ": need 0 < lifetime_min <= lifetime_max <= horizon");
  }
  if (!(b.amount_sigma > 0.0)) throw std::invalid_argument(who + ": amount_sigma must be > 0");
  if (!(b.burstiness >= 0.0 && b.burstiness < 1.0)) {
    throw std::invalid_argument(who + ": burstiness must be in [0, 1)");
  }
}

std::string address(std::uint64_t tag, std::uint64_t i) {
  char buf[49];
  const std::uint64_t base = mix64(tag * 0x100000000ULL + i);
  std::snprintf(buf, sizeof buf, "%016llx%016llx%016llx",
                static_cast<unsigned long long>(mix64(base)),
                static_cast<unsigned long long>(mix64(base + 1)),
                static_cast<unsigned long long>(mix64(base + 2)));
  return "0x" + std::string(buf, 40);
}

// Time of day in seconds: a broad daytime profile, or [0, 5h) at night.
double time_of_day(Rng& rng, bool night) {
  if (night) return rng.uniform(0.0, 5.0 * 3600.0);
  double h = std::fmod(rng.normal(14.0, 3.5), 24.0);
  if (h < 0) h += 24.0;
  return h * 3600.0;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_accounts < 10) throw std::invalid_argument("synth: need at least 10 accounts");
  if (!(fraud_fraction > 0.0 && fraud_fraction < 1.0)) {
    throw std::invalid_argument("synth: fraud_fraction must be in (0, 1)");
  }
  const auto n_fraud = std::llround(static_cast<double>(n_accounts) * fraud_fraction);
  if (n_fraud < 1 || n_fraud >= static_cast<long long>(n_accounts)) {
    throw std::invalid_argument("synth: fraud_fraction leaves a class empty");
  }
  if (!(horizon_days > 0.0)) throw std::invalid_argument("synth: horizon must be positive");
  if (fanout_degree == 0) throw std::invalid_argument("synth: fanout_degree must be >= 1");
  if (contacts == 0 || community_size <= contacts) {
    throw std::invalid_argument("synth: need 0 < contacts < community_size");
  }
  for (double p : {hub_probability, fraud_all_traits, normal_one_trait, night_share}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("synth: probability outside [0, 1]");
  }
  if (hubs == 0 && hub_probability > 0.0) {
    throw std::invalid_argument("synth: hub_probability > 0 needs hubs");
  }
  check_behavior(normal, horizon_days, "synth.normal");
  check_behavior(fraud, horizon_days, "synth.fraud");
}

SyntheticData synth_generate(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = Rng::stream(seed, "harness.synth");
  const std::size_t n = spec.n_accounts;
  const auto n_fraud = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * spec.fraud_fraction));

  SyntheticData out;
  for (std::size_t i = 0; i < n; ++i) out.accounts.push_back(address(1, i));
  std::vector<std::string> hubs;
  for (std::size_t i = 0; i < spec.hubs; ++i) hubs.push_back(address(2, i));
  std::size_t fresh_count = 0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<int> label(n, 0);
  for (std::size_t i = 0; i < n_fraud; ++i) label[order[i]] = 1;
  // Communities are contiguous runs of a second shuffle.
  rng.shuffle(order);
  std::vector<std::size_t> community(n);
  for (std::size_t r = 0; r < n; ++r) community[order[r]] = r / spec.community_size;
  std::vector<std::vector<std::size_t>> members((n + spec.community_size - 1) /
                                                spec.community_size);
  for (std::size_t r = 0; r < n; ++r) members[r / spec.community_size].push_back(order[r]);

  for (std::size_t i = 0; i < n; ++i) {
    std::uint8_t traits = 0;
    if (label[i]) {
      if (rng.bernoulli(spec.fraud_all_traits)) {
        traits = kNight | kFanout | kFresh;
      } else {
        const std::uint8_t pairs[3] = {kNight | kFanout, kNight | kFresh, kFanout | kFresh};
        traits = pairs[rng.below(3)];
      }
    } else if (rng.bernoulli(spec.normal_one_trait)) {
      traits = static_cast<std::uint8_t>(1u << rng.below(3));
    }
    out.labels[out.accounts[i]] = label[i];
    out.traits[out.accounts[i]] = traits;

    const ClassBehavior& b = label[i] ? spec.fraud : spec.normal;
    const double lifetime = rng.uniform(b.lifetime_min_days, b.lifetime_max_days) * kDay;
    const double start = rng.uniform(0.0, spec.horizon_days * kDay - lifetime);
    std::size_t k = 1 + rng.poisson(b.tx_mean - 1.0);
    if (traits & kFanout) k = std::max(k, std::min(spec.fanout_degree, n - 1));

    std::vector<std::string> contacts;
    if (traits & kFresh) {
      for (std::size_t c = 0; c < spec.contacts; ++c) contacts.push_back(address(3, fresh_count++));
    } else {
      auto pool = members[community[i]];
      pool.erase(std::remove(pool.begin(), pool.end(), i), pool.end());
      rng.shuffle(pool);
      for (std::size_t c = 0; c < std::min(spec.contacts, pool.size()); ++c) {
        contacts.push_back(out.accounts[pool[c]]);
      }
    }
    std::vector<std::string> fanout;
    if (traits & kFanout) {
      // Distinct counterparties: new throwaway addresses under the fresh
      // trait, otherwise established accounts from across the population.
      std::vector<std::size_t> picked;
      while (fanout.size() < k) {
        if (traits & kFresh) {
          fanout.push_back(address(3, fresh_count++));
          continue;
        }
        const std::size_t j = rng.below(n);
        if (j != i && std::find(picked.begin(), picked.end(), j) == picked.end()) {
          picked.push_back(j);
          fanout.push_back(out.accounts[j]);
        }
      }
    }

    double prev = -1.0;
    for (std::size_t t = 0; t < k; ++t) {
      double when;
      if (prev >= 0.0 && rng.bernoulli(b.burstiness)) {
        when = std::min(prev + rng.exponential(1.0 / 1800.0), start + lifetime);
      } else {
        const double day = std::floor(rng.uniform(start, start + lifetime) / kDay) * kDay;
        const bool night = (traits & kNight) && rng.bernoulli(spec.night_share);
        when = std::clamp(day + time_of_day(rng, night), start, start + lifetime);
      }
      prev = when;
      std::string peer;
      if ((traits & kFanout) != 0) {
        peer = fanout[t];
      } else if (!(traits & kFresh) && rng.bernoulli(spec.hub_probability)) {
        peer = hubs[rng.below(hubs.size())];
      } else {
        peer = contacts[rng.below(contacts.size())];
      }
      txcorpus::Transfer tr;
      tr.value = rng.lognormal(b.amount_mu, b.amount_sigma);
      tr.timestamp = kSyntheticEpoch + static_cast<std::int64_t>(when);
      if (rng.bernoulli(0.5)) {
        tr.from = out.accounts[i];
        tr.to = peer;
      } else {
        tr.from = peer;
        tr.to = out.accounts[i];
      }
      out.transfers.push_back(std::move(tr));
    }
  }
  std::stable_sort(out.transfers.begin(), out.transfers.end(),
                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  return out;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream tx(dir / "transfers.jsonl");
  if (!tx) throw std::runtime_error("write_synthetic: cannot write " + dir.string());
  for (const auto& t : data.transfers) {
    nlohmann::json j = {{"from", t.from}, {"to", t.to}, {"value", t.value},
                        {"timestamp", t.timestamp}};
    tx << j.dump() << '\n';
  }
  std::ofstream labels(dir / "labels.csv");
  labels << "address,label\n";
  for (const auto& a : data.accounts) labels << a << ',' << data.labels.at(a) << '\n';
  std::ofstream traits(dir / "traits.csv");
  traits << "address,night,fanout,fresh\n";
  for (const auto& a : data.accounts) {
    const auto t = data.traits.at(a);
    traits << a << ',' << ((t & kNight) != 0) << ',' << ((t & kFanout) != 0) << ','
           << ((t & kFresh) != 0) << '\n';
  }
}

std::map<std::string, int> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_labels: cannot open " + path.string());
  std::map<std::string, int> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line.rfind("address", 0) == 0)) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error("read_labels: line " + std::to_string(lineno) + " has no comma");
    }
    const std::string addr = line.substr(0, comma), y = line.substr(comma + 1);
    if (!txcorpus::is_address(addr) || (y != "0" && y != "1")) {
      throw std::runtime_error("read_labels: bad line " + std::to_string(lineno));
    }
    if (!out.emplace(txcorpus::normalize_address(addr), y == "1").second) {
      throw std::runtime_error("read_labels: duplicate address on line " + std::to_string(lineno));
    }
  }
  return out;
}

}  // namespace txfuse::harness
