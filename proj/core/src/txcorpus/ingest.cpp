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

#include "txfuse/txcorpus/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace txfuse::txcorpus {
namespace {

struct LineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double parse_value(const nlohmann::json& v) {
  double out = 0.0;
  if (v.is_number()) {
    out = v.get<double>();
  } else if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    if (ec != std::errc() || p != end) throw LineError("unparsable value");
  } else {
    throw LineError("unparsable value");
  }
  if (!std::isfinite(out)) throw LineError("unparsable value");
  if (out < 0.0) throw LineError("negative value");
  return out;
}

std::int64_t parse_timestamp(const nlohmann::json& v) {
  std::int64_t out = 0;
  if (v.is_number_integer()) {
    out = v.get<std::int64_t>();
  } else if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    if (ec != std::errc() || p != end) throw LineError("unparsable timestamp");
  } else {
    throw LineError("unparsable timestamp");
  }
  if (out <= 0) throw LineError("non-positive timestamp");
  return out;
}

std::string parse_address(const nlohmann::json& v) {
  if (!v.is_string() || !is_address(v.get_ref<const std::string&>())) {
    throw LineError("malformed address");
  }
  return normalize_address(v.get_ref<const std::string&>());
}

Transfer from_json_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw LineError("malformed json");
  }
  if (!j.is_object()) throw LineError("malformed json");
  for (const char* key : {"from", "to", "value", "timestamp"}) {
    if (!j.contains(key)) throw LineError(std::string("missing key ") + key);
  }
  Transfer t;
  t.from = parse_address(j["from"]);
  t.to = parse_address(j["to"]);
  t.value = parse_value(j["value"]);
  t.timestamp = parse_timestamp(j["timestamp"]);
  return t;
}

Transfer from_csv_line(const std::string& line) {
  std::vector<std::string> cols;
  std::stringstream ss(line);
  std::string col;
  while (std::getline(ss, col, ',')) cols.push_back(col);
  if (cols.size() != 4) throw LineError("expected 4 columns");
  Transfer t;
  t.from = parse_address(cols[0]);
  t.to = parse_address(cols[1]);
  t.value = parse_value(cols[2]);
  t.timestamp = parse_timestamp(cols[3]);
  return t;
}

}  // namespace

bool is_address(std::string_view s) {
  if (s.size() != 42 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X')) return false;
  return std::all_of(s.begin() + 2, s.end(),
                     [](unsigned char c) { return std::isxdigit(c) != 0; });
}

std::string normalize_address(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

IngestResult parse_transfers(std::istream& in, InputFormat format) {
  IngestResult result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (format == InputFormat::kCsv && lineno == 1 && line.rfind("from,", 0) == 0) continue;
    try {
      Transfer t = format == InputFormat::kCsv ? from_csv_line(line) : from_json_line(line);
      if (t.from == t.to) {
        ++result.self_transfers;
        continue;
      }
      result.transfers.push_back(std::move(t));
    } catch (const LineError& e) {
      result.rejects.push_back({lineno, e.what()});
    }
  }
  return result;
}

AccountHistory group_by_account(const std::vector<Transfer>& transfers) {
  AccountHistory out;
  std::vector<std::size_t> order(transfers.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return transfers[a].timestamp < transfers[b].timestamp;
  });
  for (std::size_t i : order) {
    const Transfer& t = transfers[i];
    out[t.from].push_back({t.from, t.to, t.value, +1, t.timestamp});
    out[t.to].push_back({t.from, t.to, t.value, -1, t.timestamp});
  }
  return out;
}

}  // namespace txfuse::txcorpus
