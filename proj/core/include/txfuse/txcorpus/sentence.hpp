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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "txfuse/txcorpus/ingest.hpp"

namespace txfuse::txcorpus {

inline constexpr std::size_t kDefaultMaxSeqLen = 128;
// Tokens per serialized transaction, excluding the separator.
inline constexpr std::size_t kTokensPerTransaction = 7;

std::string bucket_amount(double value);

// Returns (hour-of-day token, gap token). Throws std::invalid_argument when
// tau precedes prev_tau.
std::pair<std::string, std::string> bucket_time(std::int64_t tau,
                                                std::optional<std::int64_t> prev_tau);

std::vector<std::string> serialize_transaction(const TransactionRecord& t,
                                               std::optional<std::int64_t> prev_tau);

struct TokenSentence {
  std::string account;
  std::vector<std::string> tokens;
  std::size_t n_transactions = 0;  // in the source history
  bool truncated = false;
  bool degenerate = false;  // no transactions
};

// Records must be sorted by timestamp. Keeps the most recent whole
// transactions that fit in max_seq_len.
TokenSentence build_sentence(const std::string& account,
                             const std::vector<TransactionRecord>& records,
                             std::size_t max_seq_len = kDefaultMaxSeqLen);

std::vector<TokenSentence> build_corpus(const AccountHistory& history,
                                        std::size_t max_seq_len = kDefaultMaxSeqLen);

}  // namespace txfuse::txcorpus
