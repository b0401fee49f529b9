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
// Evaluation: greedy accuracy, pairwise win rate, reward-margin satisfaction,
// method comparisons and the gradient self-check.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdpo/corpus.hpp"
#include "mdpo/pairbuilder.hpp"
#include "mdpo/policy.hpp"
#include "mdpo/trainer.hpp"

namespace mdpo {

// 80/10/10 by a hash of the base problem id, so a complexified problem lands
// in the same split as its source.
enum class Split { kTrain, kPairEval, kAccuracyEval };

const char* SplitName(Split split);
Split SplitOf(std::string_view problem_id);

template <typename T, typename IdFn>
std::vector<T> FilterSplit(const std::vector<T>& items, Split split, IdFn id_of) {
  std::vector<T> out;
  for (const T& item : items) {
    if (SplitOf(id_of(item)) == split) out.push_back(item);
  }
  return out;
}

// Gold solutions as SFT examples: context is the prompt plus the guidance
// step, completion is the solution text followed by the terminator.
std::vector<TokenizedExample> SftExamples(const Vocabulary& vocab,
                                          const std::vector<CorpusEntry>& corpus);

struct AccuracyCounts {
  int correct = 0;
  int total = 0;
  double rate() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

// Greedy decode from prompt + guidance step, exact match on the final answer.
// Decode and parse failures count as incorrect.
AccuracyCounts Accuracy(const PolicyParams& params, const std::vector<Problem>& problems,
                        int max_tokens = 160);

struct PairCounts {
  int wins = 0;
  int margin_hits = 0;
  int total = 0;
  int excluded = 0;  // pairs with tokens outside the vocabulary
  double win_rate() const { return total ? static_cast<double>(wins) / total : 0.0; }
  double margin_satisfaction() const {
    return total ? static_cast<double>(margin_hits) / total : 0.0;
  }
};

// Win: strictly higher average log-likelihood for chosen. Margin hit:
// beta * (avg_w - avg_l) > gamma.
PairCounts EvaluatePairs(const PolicyParams& params, const std::vector<PreferencePair>& pairs,
                         const LossConfig& margin_cfg);

// Same counting on precomputed (chosen, rejected) average log-likelihoods.
PairCounts CountFromAverages(const std::vector<std::pair<double, double>>& averages,
                             const LossConfig& margin_cfg);

struct EvalReport {
  AccuracyCounts normal;
  AccuracyCounts hard;
  PairCounts pairs;
  std::map<std::string, PairCounts> pairs_by_granularity;
  LossConfig margin_cfg;
  std::string config_digest;
  std::string timestamp;

  nlohmann::json ToJson() const;
  std::string ToText() const;
};

struct EvalOptions {
  int max_tokens = 160;
  LossConfig margin_cfg;
  bool include_hard = true;
  std::uint64_t hard_seed = 0;
};

// Accuracy on the given problems (and their complexified versions when
// include_hard), pair metrics on the given pairs.
EvalReport Evaluate(const PolicyParams& params, const std::vector<Problem>& problems,
                    const std::vector<PreferencePair>& pairs, const EvalOptions& options);

struct MethodSpec {
  std::string name;
  TrainConfig config;
  // Empty keeps all pairs; otherwise only these granularities are trained on.
  std::vector<Granularity> granularities;
};

struct MethodResult {
  std::string name;
  bool ok = false;
  std::string error;
  EvalReport report;
  TrainMetrics metrics;
  std::string params_digest;
};

struct Comparison {
  std::string warm_start_digest;
  std::string pairs_digest;
  std::string eval_digest;
  std::vector<MethodResult> rows;  // ranked by win rate, then accuracy

  nlohmann::json ToJson() const;
  std::string ToText() const;
};

// Trains every method from the same warm start on the same pairs and scores
// them on shared held-out data. Needs at least two methods; a failing method
// is recorded and does not stop the others.
Comparison CompareMethods(const PolicyParams& warm_start,
                          const std::vector<PreferencePair>& train_pairs,
                          const std::vector<Problem>& eval_problems,
                          const std::vector<PreferencePair>& eval_pairs,
                          const std::vector<MethodSpec>& methods, const EvalOptions& options);

struct GradCheckSummary {
  int trials = 0;
  int checks = 0;
  int failures = 0;
  double max_relative_error = 0.0;
  double h = 1e-5;
  double tolerance = 1e-4;
  bool passed() const { return checks > 0 && failures == 0; }
};

// Seeded random instances of both losses, checked against central
// differences with respect to token log-probabilities and end to end through
// the policy table.
GradCheckSummary RunGradCheck(int trials, std::uint64_t seed, double h = 1e-5,
                              double tolerance = 1e-4);

}  // namespace mdpo
