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

#include "txfuse/txcorpus/sentence.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace txfuse::txcorpus {

std::string bucket_amount(double value) {
  if (!(value >= 0.0)) throw std::invalid_argument("bucket_amount: negative or NaN value");
  const double e = std::floor(2.0 * std::log10(std::max(value, 1e-8)));
  const int k = static_cast<int>(std::clamp(e, -16.0, 15.0)) + 16;
  return "AMT_" + std::to_string(k);
}

std::pair<std::string, std::string> bucket_time(std::int64_t tau,
                                                std::optional<std::int64_t> prev_tau) {
  const std::int64_t day = 86400;
  const std::int64_t hour = (((tau % day) + day) % day) / 3600;
  int gap = 0;
  if (prev_tau) {
    if (tau < *prev_tau) throw std::invalid_argument("bucket_time: timestamps out of order");
    const auto delta = static_cast<std::uint64_t>(std::max<std::int64_t>(tau - *prev_tau, 1));
    gap = std::min(static_cast<int>(std::bit_width(delta)) - 1, 24);
  }
  return {"HOD_" + std::to_string(hour), "GAP_" + std::to_string(gap)};
}

std::vector<std::string> serialize_transaction(const TransactionRecord& t,
                                               std::optional<std::int64_t> prev_tau) {
  auto [hod, gap] = bucket_time(t.timestamp, prev_tau);
  return {"amount", bucket_amount(t.value), "direction", t.direction > 0 ? "out" : "in",
          "time",   std::move(hod),         std::move(gap)};
}

TokenSentence build_sentence(const std::string& account,
                             const std::vector<TransactionRecord>& records,
                             std::size_t max_seq_len) {
  const std::size_t per_tx = kTokensPerTransaction + 1;
  if (max_seq_len < per_tx) {
    throw std::invalid_argument("build_sentence: max_seq_len below one transaction");
  }
  TokenSentence s;
  s.account = account;
  s.n_transactions = records.size();
  s.tokens.push_back("[CLS]");
  if (records.empty()) {
    s.degenerate = true;
    return s;
  }
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp < records[i - 1].timestamp) {
      throw std::invalid_argument("build_sentence: records not sorted by timestamp");
    }
  }
  const std::size_t fit = max_seq_len / per_tx;
  const std::size_t first = records.size() > fit ? records.size() - fit : 0;
  s.truncated = first > 0;
  for (std::size_t i = first; i < records.size(); ++i) {
    if (i > first) s.tokens.push_back("[SEP]");
    // The gap is measured against the true predecessor even when it was cut.
    std::optional<std::int64_t> prev;
    if (i > 0) prev = records[i - 1].timestamp;
    auto toks = serialize_transaction(records[i], prev);
    s.tokens.insert(s.tokens.end(), toks.begin(), toks.end());
  }
  return s;
}

std::vector<TokenSentence> build_corpus(const AccountHistory& history, std::size_t max_seq_len) {
  std::vector<TokenSentence> out;
  out.reserve(history.size());
  for (const auto& [account, records] : history) {
    out.push_back(build_sentence(account, records, max_seq_len));
  }
  return out;
}

}  // namespace txfuse::txcorpus
