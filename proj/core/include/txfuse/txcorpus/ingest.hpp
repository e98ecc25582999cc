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
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace txfuse::txcorpus {

// One raw external transfer as read from the input.
struct Transfer {
  std::string from;
  std::string to;
  double value = 0.0;       // ETH
  std::int64_t timestamp = 0;  // Unix seconds
};

// A transfer seen from one focal account.
struct TransactionRecord {
  std::string sender;
  std::string receiver;
  double value = 0.0;
  int direction = 1;  // +1 outflow, -1 inflow
  std::int64_t timestamp = 0;
};

struct Reject {
  std::size_t line = 0;
  std::string reason;
};

struct IngestResult {
  std::vector<Transfer> transfers;
  std::vector<Reject> rejects;
  std::size_t self_transfers = 0;
};

enum class InputFormat { kJsonLines, kCsv };

// Addresses must be 0x followed by 40 hex digits; they are lowercased.
bool is_address(std::string_view s);
std::string normalize_address(std::string_view s);

// Reads transfers line by line. Bad lines land in `rejects` and reading
// continues. Self-transfers are dropped and counted.
IngestResult parse_transfers(std::istream& in, InputFormat format = InputFormat::kJsonLines);

using AccountHistory = std::map<std::string, std::vector<TransactionRecord>>;

// Groups transfers under both endpoints, each history sorted by timestamp
// (ties keep input order).
AccountHistory group_by_account(const std::vector<Transfer>& transfers);

}  // namespace txfuse::txcorpus
