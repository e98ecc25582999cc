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

#include "txfuse/txcorpus/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace txfuse::txcorpus {
namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> r = {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"};
  return r;
}

}  // namespace

bool is_special(std::uint32_t id) { return id == kPad || id == kCls || id == kSep; }

Vocabulary::Vocabulary() {
  for (const auto& t : reserved_tokens()) push(t);
}

void Vocabulary::push(const std::string& token) {
  if (!index_.emplace(token, static_cast<std::uint32_t>(tokens_.size())).second) {
    throw std::invalid_argument("Vocabulary: duplicate token " + token);
  }
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<TokenSentence>& corpus, std::size_t min_freq) {
  if (min_freq < 1) throw std::invalid_argument("Vocabulary::build: min_freq must be >= 1");
  if (corpus.empty()) throw std::invalid_argument("Vocabulary::build: empty corpus");
  Vocabulary v;
  std::map<std::string, std::size_t> freq;
  for (const auto& s : corpus) {
    for (const auto& t : s.tokens) {
      if (!v.contains(t)) ++freq[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> entries(freq.begin(), freq.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [token, count] : entries) {
    if (count >= min_freq) v.push(token);
  }
  return v;
}

std::uint32_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::uint32_t id) const {
  if (id >= tokens_.size()) throw std::out_of_range("Vocabulary: id out of range");
  return tokens_[id];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("Vocabulary: cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("Vocabulary: cannot read " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (n < kNumReserved) {
      if (line != reserved_tokens()[n]) throw std::runtime_error("Vocabulary: bad reserved prefix");
    } else {
      v.push(line);
    }
    ++n;
  }
  if (n < kNumReserved) throw std::runtime_error("Vocabulary: truncated file");
  return v;
}

TransactionSentence encode(const TokenSentence& sentence, const Vocabulary& vocab) {
  TransactionSentence out;
  out.account = sentence.account;
  out.n_transactions = sentence.n_transactions;
  out.truncated = sentence.truncated;
  out.degenerate = sentence.degenerate;
  out.ids.reserve(sentence.tokens.size());
  for (const auto& t : sentence.tokens) out.ids.push_back(vocab.id(t));
  return out;
}

std::vector<TransactionSentence> encode_corpus(const std::vector<TokenSentence>& corpus,
                                               const Vocabulary& vocab) {
  std::vector<TransactionSentence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(encode(s, vocab));
  return out;
}

void write_corpus(std::ostream& out, const std::vector<TransactionSentence>& corpus) {
  for (const auto& s : corpus) {
    out << s.account << '\t';
    for (std::size_t i = 0; i < s.ids.size(); ++i) out << (i ? " " : "") << s.ids[i];
    out << '\n';
  }
}

std::vector<TransactionSentence> read_corpus(std::istream& in) {
  std::vector<TransactionSentence> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("read_corpus: missing tab");
    TransactionSentence s;
    s.account = line.substr(0, tab);
    std::istringstream ids(line.substr(tab + 1));
    std::uint32_t id = 0;
    while (ids >> id) s.ids.push_back(id);
    s.degenerate = s.ids.size() <= 1;
    s.n_transactions = (s.ids.size() + 1) / (kTokensPerTransaction + 1);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace txfuse::txcorpus
