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
#include "mdpo/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>

#include "bytes.hpp"
#include "mdpo/error.hpp"
#include "mdpo/random.hpp"

namespace mdpo {
namespace {

constexpr char kMagic[4] = {'M', 'D', 'P', 'P'};
constexpr std::uint32_t kParamsVersion = 1;
constexpr std::size_t kNoRow = std::numeric_limits<std::size_t>::max();

std::vector<std::string> DefaultTokens() {
  std::vector<std::string> tokens = {"<eos>"};
  for (char d = '0'; d <= '9'; ++d) tokens.emplace_back(1, d);
  for (const char* t : {"+", "-", "*", "/", "=", ".", " ", "(", ")", "[Step", "]",
                        "The answer is", "Compute", "Let's think step by step."}) {
    tokens.emplace_back(t);
  }
  return tokens;
}

void LogSoftmax(std::span<const double> logits, std::vector<double>& probs, double* log_norm) {
  const double max = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  probs.resize(logits.size());
  for (std::size_t v = 0; v < logits.size(); ++v) {
    probs[v] = std::exp(logits[v] - max);
    sum += probs[v];
  }
  for (double& p : probs) p /= sum;
  *log_norm = max + std::log(sum);
}

}  // namespace

Vocabulary::Vocabulary() : tokens_(DefaultTokens()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty() || tokens_.size() > 250) {
    throw Error(ErrorCode::kInvalidArgument, "vocabulary size must be in [1, 250]");
  }
}

std::vector<int> Vocabulary::Encode(std::string_view text) const {
  std::vector<int> ids;
  std::size_t pos = 0;
  while (pos < text.size()) {
    int best = -1;
    std::size_t best_len = 0;
    for (std::size_t id = 1; id < tokens_.size(); ++id) {
      const std::string& t = tokens_[id];
      if (t.size() > best_len && text.compare(pos, t.size(), t) == 0) {
        best = static_cast<int>(id);
        best_len = t.size();
      }
    }
    if (best < 0) {
      throw Error(ErrorCode::kUnknownToken,
                  "no token for '" + std::string(text.substr(pos, 1)) + "' at offset " +
                      std::to_string(pos));
    }
    ids.push_back(best);
    pos += best_len;
  }
  return ids;
}

std::string Vocabulary::Decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw Error(ErrorCode::kUnknownToken, "token id " + std::to_string(id));
    }
    if (id != terminator()) out += tokens_[static_cast<std::size_t>(id)];
  }
  return out;
}

PolicyParams::PolicyParams(int order_n, bool use_backoff)
    : order(order_n), backoff(use_backoff), default_logits(vocab.size(), 0.0) {
  if (order_n < 1) throw Error(ErrorCode::kInvalidArgument, "order must be >= 1");
}

std::size_t PolicyParams::FindRow(std::string_view key) const {
  auto it = index_.find(key);
  return it == index_.end() ? kNoRow : it->second;
}

std::size_t PolicyParams::FindOrInsertRow(std::string_view key) {
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  const std::size_t r = keys_.size();
  keys_.emplace_back(key);
  index_.emplace(keys_.back(), r);
  values_.resize(values_.size() + vocab.size(), 0.0);
  return r;
}

std::string PolicyParams::MakeKey(std::span<const int> ids) const {
  std::string key(ids.size(), '\0');
  for (std::size_t i = 0; i < ids.size(); ++i) key[i] = static_cast<char>(ids[i]);
  return key;
}

void ContextLogits(const PolicyParams& params, std::span<const int> history,
                   std::vector<double>& logits, std::vector<std::size_t>* rows) {
  const std::size_t n = static_cast<std::size_t>(params.order);
  std::string key(n, static_cast<char>(params.pad_symbol()));
  const std::size_t take = std::min(n, history.size());
  for (std::size_t i = 0; i < take; ++i) {
    key[n - take + i] = static_cast<char>(history[history.size() - take + i]);
  }
  logits.assign(params.default_logits.begin(), params.default_logits.end());
  if (rows) rows->clear();
  const std::string_view full(key);
  const std::size_t lowest = params.backoff ? 0 : n;
  for (std::size_t j = lowest; j <= n; ++j) {
    const std::size_t r = params.FindRow(full.substr(n - j));
    if (r == kNoRow) continue;
    const auto row = params.row(r);
    for (std::size_t v = 0; v < logits.size(); ++v) logits[v] += row[v];
    if (rows) rows->push_back(r);
  }
}

ScoredSequence Score(const PolicyParams& params, std::span<const int> prompt_tokens,
                     std::span<const int> completion_tokens, ScoreDetail* detail) {
  if (completion_tokens.empty()) throw Error(ErrorCode::kEmptySequence, "empty completion");
  const int V = static_cast<int>(params.vocab_size());
  for (int t : completion_tokens) {
    if (t < 0 || t >= V) throw Error(ErrorCode::kUnknownToken, "token id " + std::to_string(t));
  }
  std::vector<int> history(prompt_tokens.begin(), prompt_tokens.end());
  history.reserve(prompt_tokens.size() + completion_tokens.size());
  ScoredSequence scored;
  scored.token_logprobs.reserve(completion_tokens.size());
  if (detail) detail->positions.clear();
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<std::size_t> rows;
  for (int t : completion_tokens) {
    ContextLogits(params, history, logits, detail ? &rows : nullptr);
    double log_norm = 0.0;
    LogSoftmax(logits, probs, &log_norm);
    scored.token_logprobs.push_back(logits[static_cast<std::size_t>(t)] - log_norm);
    if (detail) detail->positions.push_back({t, rows, probs});
    history.push_back(t);
  }
  return scored;
}

std::vector<int> Sample(const PolicyParams& params, std::span<const int> prompt_tokens,
                        const SamplingConfig& cfg) {
  if (cfg.max_tokens < 1) throw Error(ErrorCode::kInvalidArgument, "max_tokens must be >= 1");
  if (!(cfg.temperature >= 0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be >= 0");
  std::mt19937_64 rng(SplitMix64(cfg.seed));
  std::vector<int> history(prompt_tokens.begin(), prompt_tokens.end());
  std::vector<int> out;
  std::vector<double> logits;
  std::vector<double> probs;
  for (int step = 0; step < cfg.max_tokens; ++step) {
    ContextLogits(params, history, logits);
    int next = 0;
    if (cfg.temperature == 0.0) {
      next = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    } else {
      for (double& l : logits) l /= cfg.temperature;
      double log_norm = 0.0;
      LogSoftmax(logits, probs, &log_norm);
      const double u = UniformUnit(rng);
      double cumulative = 0.0;
      next = static_cast<int>(probs.size()) - 1;
      for (std::size_t v = 0; v < probs.size(); ++v) {
        cumulative += probs[v];
        if (u < cumulative) {
          next = static_cast<int>(v);
          break;
        }
      }
    }
    out.push_back(next);
    if (next == params.vocab.terminator()) break;
    history.push_back(next);
  }
  return out;
}

std::span<double> ParamGrad::Row(std::size_t table_row) {
  auto [it, inserted] = slot_.emplace(table_row, rows_.size());
  if (inserted) {
    rows_.push_back(table_row);
    values_.resize(values_.size() + vocab_size_, 0.0);
  }
  return {values_.data() + it->second * vocab_size_, vocab_size_};
}

std::span<const double> ParamGrad::Find(std::size_t table_row) const {
  auto it = slot_.find(table_row);
  if (it == slot_.end()) return {};
  return {values_.data() + it->second * vocab_size_, vocab_size_};
}

void ParamGrad::Scale(double factor) {
  for (double& v : values_) v *= factor;
}

void ParamGrad::Clear() {
  rows_.clear();
  values_.clear();
  slot_.clear();
}

void AccumulateParamGrads(const PolicyParams& params, const ScoreDetail& detail,
                          std::span<const double> dloss_dlogprobs, ParamGrad& grad) {
  if (dloss_dlogprobs.size() != detail.positions.size()) {
    throw Error(ErrorCode::kShapeMismatch, "gradient length " +
                                               std::to_string(dloss_dlogprobs.size()) +
                                               " != completion length " +
                                               std::to_string(detail.positions.size()));
  }
  if (grad.vocab_size() != params.vocab_size()) {
    throw Error(ErrorCode::kShapeMismatch, "gradient vocabulary size mismatch");
  }
  for (std::size_t p = 0; p < detail.positions.size(); ++p) {
    const double g = dloss_dlogprobs[p];
    if (g == 0.0) continue;
    const auto& pos = detail.positions[p];
    for (std::size_t r : pos.rows) {
      auto row = grad.Row(r);
      for (std::size_t v = 0; v < row.size(); ++v) row[v] -= g * pos.probs[v];
      row[static_cast<std::size_t>(pos.token)] += g;
    }
  }
}

PolicyParams SftFit(std::span<const TokenizedExample> examples, int order, double alpha,
                    bool backoff) {
  if (examples.empty()) throw Error(ErrorCode::kInvalidArgument, "empty SFT corpus");
  if (!(alpha > 0)) throw Error(ErrorCode::kInvalidArgument, "alpha must be > 0");
  PolicyParams params(order, backoff);
  const std::size_t V = params.vocab_size();
  const std::size_t n = static_cast<std::size_t>(order);
  // Counts share the table's key order so insertion order follows first sight.
  std::vector<double> counts;
  for (const TokenizedExample& ex : examples) {
    std::vector<int> history = ex.context;
    for (int t : ex.completion) {
      if (t < 0 || static_cast<std::size_t>(t) >= V) {
        throw Error(ErrorCode::kUnknownToken, "token id " + std::to_string(t));
      }
      std::string key(n, static_cast<char>(params.pad_symbol()));
      const std::size_t take = std::min(n, history.size());
      for (std::size_t i = 0; i < take; ++i) {
        key[n - take + i] = static_cast<char>(history[history.size() - take + i]);
      }
      const std::size_t lowest = backoff ? 0 : n;
      for (std::size_t j = lowest; j <= n; ++j) {
        const std::size_t r = params.FindOrInsertRow(std::string_view(key).substr(n - j));
        if (counts.size() < (r + 1) * V) counts.resize((r + 1) * V, 0.0);
        counts[r * V + static_cast<std::size_t>(t)] += 1.0;
      }
      history.push_back(t);
    }
  }
  for (std::size_t r = 0; r < params.num_rows(); ++r) {
    auto row = params.row(r);
    const std::string& key = params.key(r);
    std::size_t parent = kNoRow;
    if (backoff && !key.empty()) parent = params.FindRow(std::string_view(key).substr(1));
    for (std::size_t v = 0; v < V; ++v) {
      row[v] = std::log(counts[r * V + v] + alpha);
      if (parent != kNoRow) row[v] -= std::log(counts[parent * V + v] + alpha);
    }
  }
  return params;
}

std::string SerializeParams(const PolicyParams& params) {
  ByteWriter w;
  w.Bytes(std::string_view(kMagic, 4));
  w.U32(kParamsVersion);
  w.U32(static_cast<std::uint32_t>(params.order));
  w.U8(params.backoff ? 1 : 0);
  w.U32(static_cast<std::uint32_t>(params.vocab_size()));
  for (const std::string& t : params.vocab.tokens()) w.Str(t);
  for (double d : params.default_logits) w.F64(d);
  w.U64(params.num_rows());
  for (std::size_t r = 0; r < params.num_rows(); ++r) {
    w.Str(params.key(r));
    for (double d : params.row(r)) w.F64(d);
  }
  return w.Take();
}

PolicyParams DeserializeParams(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.Bytes(4) != std::string_view(kMagic, 4)) throw ParseError("bad magic in parameter file");
  const std::uint32_t version = r.U32();
  if (version != kParamsVersion) {
    throw ParseError("version " + std::to_string(version) + " != " +
                     std::to_string(kParamsVersion));
  }
  const std::uint32_t order = r.U32();
  const std::uint8_t backoff = r.U8();
  const std::uint32_t V = r.U32();
  if (order < 1 || order > 64 || backoff > 1 || V < 1 || V > 250) {
    throw ParseError("implausible parameter header");
  }
  std::vector<std::string> tokens;
  for (std::uint32_t i = 0; i < V; ++i) tokens.push_back(r.Str());
  PolicyParams params(static_cast<int>(order), backoff == 1);
  params.vocab = Vocabulary(std::move(tokens));
  params.default_logits.resize(V);
  for (double& d : params.default_logits) d = r.F64();
  const std::uint64_t rows = r.U64();
  for (std::uint64_t i = 0; i < rows; ++i) {
    const std::string key = r.Str();
    if (key.size() > order) throw ParseError("context key longer than the order");
    if (params.FindRow(key) != kNoRow) throw ParseError("duplicate context key");
    auto row = params.row(params.FindOrInsertRow(key));
    for (double& d : row) d = r.F64();
  }
  if (!r.done()) throw ParseError("trailing bytes in parameter data");
  return params;
}

void SaveParams(const std::string& path, const PolicyParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  const std::string bytes = SerializeParams(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

PolicyParams LoadParams(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return DeserializeParams(bytes);
}

}  // namespace mdpo
