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
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "txfuse/txcorpus/sentence.hpp"

namespace txfuse::txcorpus {

inline constexpr std::uint32_t kPad = 0;
inline constexpr std::uint32_t kCls = 1;
inline constexpr std::uint32_t kSep = 2;
inline constexpr std::uint32_t kMask = 3;
inline constexpr std::uint32_t kUnk = 4;
inline constexpr std::uint32_t kNumReserved = 5;

bool is_special(std::uint32_t id);

class Vocabulary {
 public:
  Vocabulary();

  // Reserved tokens plus every token seen at least min_freq times. Ids go
  // by descending frequency, ties broken by token text.
  static Vocabulary build(const std::vector<TokenSentence>& corpus, std::size_t min_freq = 1);

  std::uint32_t id(const std::string& token) const;  // kUnk when absent
  const std::string& token(std::uint32_t id) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void push(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct TransactionSentence {
  std::string account;
  std::vector<std::uint32_t> ids;
  std::size_t n_transactions = 0;
  bool truncated = false;
  bool degenerate = false;
};

TransactionSentence encode(const TokenSentence& sentence, const Vocabulary& vocab);
std::vector<TransactionSentence> encode_corpus(const std::vector<TokenSentence>& corpus,
                                               const Vocabulary& vocab);

// Line format: account, tab, space-separated token ids.
void write_corpus(std::ostream& out, const std::vector<TransactionSentence>& corpus);
std::vector<TransactionSentence> read_corpus(std::istream& in);

}  // namespace txfuse::txcorpus
