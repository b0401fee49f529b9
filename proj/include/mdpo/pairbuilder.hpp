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
// Preference-pair construction at three granularities.
//
//   sol2sol      whole solutions from the guidance step, correct vs incorrect
//   infer2infer  continuations from the last reliable window of a faulty
//                solution, where the continuation error rate first rises
//   step2step    the first miscalculated step vs its corrected form, each
//                followed by its continuation

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdpo/corpus.hpp"
#include "mdpo/generator.hpp"

namespace mdpo {

enum class Granularity { kSol2Sol = 0, kInfer2Infer = 1, kStep2Step = 2 };

const char* GranularityName(Granularity g);
Granularity ParseGranularity(std::string_view name);

struct PreferencePair {
  std::string id;
  Granularity granularity = Granularity::kSol2Sol;
  std::string problem_id;
  std::string prompt;
  std::vector<std::string> prefix_steps;  // step texts; [0] is the guidance step
  std::string chosen;
  std::string rejected;
  nlohmann::json meta = nlohmann::json::object();

  // prefix_steps as Steps numbered 0, 1, ...
  std::vector<Step> PrefixAsSteps() const;

  bool operator==(const PreferencePair&) const = default;
};

struct WindowStats {
  int window_index = 0;
  int n_samples = 0;
  int n_wrong = 0;
  double error_rate = 0.0;
};

// Window w_i is the guidance step followed by the first i steps.
std::vector<Step> WindowPrefix(const Solution& solution, int i);

std::vector<PreferencePair> BuildSol2Sol(const Problem& problem,
                                         const std::vector<Solution>& traces, int max_pairs);

std::vector<WindowStats> WindowErrorRates(Generator& gen, const Problem& problem,
                                          const Solution& faulty, const SamplingConfig& sampling,
                                          int k);

// Smallest i >= 1 whose error rate strictly exceeds that of window i-1.
std::optional<int> FindUnreliableInference(const std::vector<WindowStats>& stats);

std::optional<PreferencePair> BuildInfer2Infer(Generator& gen, const Problem& problem,
                                               const Solution& faulty,
                                               const SamplingConfig& sampling, int k);

std::optional<PreferencePair> BuildStep2Step(const Problem& problem, const Solution& faulty,
                                             Generator& gen, const SamplingConfig& sampling,
                                             int k);

struct BuildConfig {
  int k = 8;
  int max_pairs_per_problem = 4;
  std::vector<Granularity> granularities = {Granularity::kSol2Sol, Granularity::kInfer2Infer,
                                            Granularity::kStep2Step};
  std::uint64_t seed = 0;
  double temperature = 1.0;
  int max_tokens = 160;
  int target_pairs = 2000;  // 0 keeps everything
  bool complexify = true;   // step2step also over complexified problems
};

struct BuildReport {
  std::map<std::string, int> pairs_per_granularity;
  std::map<std::string, int> rejection_reasons;
  std::vector<std::string> problem_errors;
  std::uint64_t generator_calls = 0;
  int problems = 0;
  int hard_problems = 0;

  nlohmann::json ToJson() const;
};

struct BuildResult {
  std::vector<PreferencePair> pairs;
  BuildReport report;
};

BuildResult BuildDataset(const std::vector<Problem>& problems, Generator& gen,
                         const BuildConfig& config);

void WritePairs(const std::string& path, const std::vector<PreferencePair>& pairs);
std::vector<PreferencePair> ReadPairs(const std::string& path);

}  // namespace mdpo
