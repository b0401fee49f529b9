// Copyright 2026 The MDPO Toolkit Authors
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
// Tabular autoregressive policy over a small atom vocabulary.
//
// The logits at a position are default_logits plus the table rows keyed by the
// trailing context. In plain mode only the order-n context contributes; in
// backoff mode every suffix of length 0..n that has a row contributes, so an
// unseen long context falls back to what its shorter suffixes know.
// Parameters are exactly the rows present in the table.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mdpo/rewards.hpp"

namespace mdpo {

class Vocabulary {
 public:
  // Terminator, digits, operators, punctuation and multi-character atoms
  // covering the synthetic corpus.
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int terminator() const { return 0; }

  // Longest-match encoding. Throws UnknownToken on characters outside the
  // vocabulary.
  std::vector<int> Encode(std::string_view text) const;
  // The terminator renders as nothing.
  std::string Decode(std::span<const int> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
};

struct PolicyParams {
  int order = 3;
  bool backoff = false;
  Vocabulary vocab;
  std::vector<double> default_logits;

  PolicyParams() : default_logits(vocab.size(), 0.0) {}
  PolicyParams(int order_n, bool use_backoff);

  std::size_t vocab_size() const { return vocab.size(); }
  std::size_t num_rows() const { return keys_.size(); }
  const std::string& key(std::size_t row) const { return keys_[row]; }

  // Returns the row index or SIZE_MAX.
  std::size_t FindRow(std::string_view key) const;
  // Appends a zero row when absent. Insertion order is preserved.
  std::size_t FindOrInsertRow(std::string_view key);

  std::span<double> row(std::size_t r) { return {values_.data() + r * vocab.size(), vocab.size()}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * vocab.size(), vocab.size()};
  }

  // Packs token ids (or the begin padding symbol) into a key string.
  std::string MakeKey(std::span<const int> ids) const;
  int pad_symbol() const { return static_cast<int>(vocab.size()); }

 private:
  struct KeyHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::vector<std::string> keys_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t, KeyHash, std::equal_to<>> index_;
};

struct SamplingConfig {
  double temperature = 1.0;
  std::uint64_t seed = 0;
  int max_tokens = 256;
};

// Everything needed to backpropagate through one scored completion.
struct ScoreDetail {
  struct Position {
    int token = 0;
    std::vector<std::size_t> rows;  // table rows that contributed
    std::vector<double> probs;      // softmax over the vocabulary
  };
  std::vector<Position> positions;
};

// Logits for the next token given the full token history so far.
void ContextLogits(const PolicyParams& params, std::span<const int> history,
                   std::vector<double>& logits, std::vector<std::size_t>* rows = nullptr);

ScoredSequence Score(const PolicyParams& params, std::span<const int> prompt_tokens,
                     std::span<const int> completion_tokens, ScoreDetail* detail = nullptr);

// Autoregressive sampling until the terminator (included) or max_tokens.
// Temperature 0 is greedy with smallest-id tie breaking.
std::vector<int> Sample(const PolicyParams& params, std::span<const int> prompt_tokens,
                        const SamplingConfig& cfg);

// Sparse gradient over table rows, kept in first-touch order.
class ParamGrad {
 public:
  explicit ParamGrad(std::size_t vocab_size = 0) : vocab_size_(vocab_size) {}

  std::span<double> Row(std::size_t table_row);
  // Zero span when the row was never touched.
  std::span<const double> Find(std::size_t table_row) const;
  const std::vector<std::size_t>& rows() const { return rows_; }
  std::size_t vocab_size() const { return vocab_size_; }
  void Scale(double factor);
  void Clear();

 private:
  std::size_t vocab_size_;
  std::vector<std::size_t> rows_;
  std::vector<double> values_;
  std::unordered_map<std::size_t, std::size_t> slot_;
};

// Chain rule through log-softmax: adds g * (1[v = t] - p_v) to every row that
// contributed at a position with realized token t and upstream gradient g.
void AccumulateParamGrads(const PolicyParams& params, const ScoreDetail& detail,
                          std::span<const double> dloss_dlogprobs, ParamGrad& grad);

struct TokenizedExample {
  std::vector<int> context;
  std::vector<int> completion;
};

// Count-based warm start: logits(context)[v] = ln(count(context, v) + alpha).
// Backoff mode stores per-order increments whose suffix sums telescope to the
// same value at the longest observed context.
PolicyParams SftFit(std::span<const TokenizedExample> examples, int order, double alpha,
                    bool backoff = false);

void SaveParams(const std::string& path, const PolicyParams& params);
PolicyParams LoadParams(const std::string& path);
std::string SerializeParams(const PolicyParams& params);
PolicyParams DeserializeParams(std::string_view bytes);

}  // namespace mdpo
