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
// Preference-optimization training loop over a tabular policy.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mdpo/pairbuilder.hpp"
#include "mdpo/policy.hpp"
#include "mdpo/rewards.hpp"

namespace mdpo {

enum class LossKind { kMdpo, kDpo };

const char* LossKindName(LossKind kind);
LossKind ParseLossKind(std::string_view name);

struct TrainConfig {
  int epochs = 8;
  int batch_size = 128;
  double peak_lr = 5e-2;
  double warmup_ratio = 0.1;
  LossKind loss = LossKind::kMdpo;
  double beta = 0.4;
  double gamma = 0.5;  // mdpo only
  std::uint64_t seed = 0;
  bool shuffle = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.0;

  void Validate() const;
  nlohmann::json ToJson() const;
};

// Linear warmup over the first ceil(warmup_ratio * total_steps) steps, then
// cosine decay to zero at total_steps.
double LrAt(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg);

// Context = prompt + prefix steps; completions carry a leading space and end
// with the terminator.
struct EncodedPair {
  std::vector<int> context;
  std::vector<int> chosen;
  std::vector<int> rejected;
};

EncodedPair EncodePair(const Vocabulary& vocab, const PreferencePair& pair);

struct OptimizerState {
  std::vector<std::size_t> rows;  // table rows in first-touch order
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double mean_loss = 0.0;
  int win_count = 0;
  int eval_pairs = 0;
  double win_rate = 0.0;
  int margin_count = 0;
  double margin_satisfaction = 0.0;
  double lr = 0.0;
  std::uint64_t step = 0;
  double seconds = 0.0;

  nlohmann::json ToJson() const;
};

struct TrainMetrics {
  std::vector<EpochMetrics> epochs;
  int skipped_pairs = 0;
};

// Single-writer training session. Epochs run in order; a checkpoint captures
// everything needed to continue bit-exactly.
class Trainer {
 public:
  // eval_pairs feed per-epoch win rate; empty means the training pairs.
  Trainer(PolicyParams initial, const std::vector<PreferencePair>& pairs, TrainConfig cfg,
          const std::vector<PreferencePair>& eval_pairs = {});

  // Rebuilds a session from a checkpoint. Throws ConfigMismatch when cfg or
  // the pair data differ from the ones the checkpoint was written with.
  static Trainer Resume(const std::string& checkpoint_path,
                        const std::vector<PreferencePair>& pairs, TrainConfig cfg,
                        const std::vector<PreferencePair>& eval_pairs = {});

  void RunEpoch();
  // Runs until cfg.epochs have completed (or stop_after_epoch, when given).
  void Run(std::optional<int> stop_after_epoch = std::nullopt);

  void SaveCheckpoint(const std::string& path) const;

  const PolicyParams& params() const { return params_; }
  const TrainMetrics& metrics() const { return metrics_; }
  const OptimizerState& optimizer() const { return opt_; }
  int epoch() const { return epoch_; }
  std::int64_t total_steps() const { return total_steps_; }
  const std::string& digest() const { return digest_; }
  // Frozen reference scores used by the DPO loss, per training pair.
  const std::vector<std::pair<ScoredSequence, ScoredSequence>>& reference_scores() const {
    return reference_;
  }

 private:
  Trainer() = default;
  void Prepare(const std::vector<PreferencePair>& pairs,
               const std::vector<PreferencePair>& eval_pairs);
  double Update(const std::vector<std::size_t>& batch, double lr);
  void ApplyAdamW(const ParamGrad& grad, double lr);

  TrainConfig cfg_;
  PolicyParams params_;
  PolicyParams reference_params_;
  std::vector<EncodedPair> train_;
  std::vector<EncodedPair> eval_;
  std::vector<std::pair<ScoredSequence, ScoredSequence>> reference_;
  OptimizerState opt_;
  std::unordered_map<std::size_t, std::size_t> opt_slot_;
  TrainMetrics metrics_;
  int epoch_ = 0;
  std::int64_t steps_per_epoch_ = 0;
  std::int64_t total_steps_ = 0;
  std::string digest_;
};

struct TrainResult {
  PolicyParams params;
  TrainMetrics metrics;
};

// Convenience wrapper: fresh session, all epochs, optional metrics JSONL.
TrainResult Train(PolicyParams params, const std::vector<PreferencePair>& pairs,
                  const TrainConfig& cfg, const std::vector<PreferencePair>& eval_pairs = {},
                  const std::string& metrics_path = "");

void WriteMetrics(const std::string& path, const TrainMetrics& metrics);

// Strict comparison of average log-likelihoods; ties lose.
struct PairwiseCounts {
  int wins = 0;
  int margin_hits = 0;
  int total = 0;
};
PairwiseCounts CountWins(const PolicyParams& params, const std::vector<EncodedPair>& pairs,
                         const LossConfig& margin_cfg);

}  // namespace mdpo
