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
// Length-normalized preference losses over per-token log-probabilities.
//
// Every loss here is a function of the token log-probabilities of a chosen
// and a rejected completion; gradients are returned with respect to those
// log-probabilities so a policy can chain them into its own parameters.

#pragma once

#include <functional>
#include <span>
#include <vector>

namespace mdpo {

// Per-token log-probabilities of one completion. Entries produced by a policy
// are <= 0; the loss functions only require the sequence to be non-empty.
struct ScoredSequence {
  std::vector<double> token_logprobs;

  std::size_t size() const { return token_logprobs.size(); }
  double sum() const;
};

struct LossConfig {
  double beta = 0.4;
  double gamma = 0.5;
};

struct LossOutput {
  double loss = 0.0;
  double reward_w = 0.0;
  double reward_l = 0.0;
  double margin_delta = 0.0;
  std::vector<double> grad_w;
  std::vector<double> grad_l;
};

struct DpoConfig {
  double beta = 0.4;
  ScoredSequence reference_w;
  ScoredSequence reference_l;
};

double Sigmoid(double x);
// -log(sigmoid(x)) without overflow for large |x|.
double NegLogSigmoid(double x);

double AvgLoglik(std::span<const double> token_logprobs);
double SimpoReward(std::span<const double> token_logprobs, double beta);
double PrefProb(double reward_w, double reward_l, double gamma);

LossOutput MdpoLoss(const ScoredSequence& win, const ScoredSequence& lose, const LossConfig& cfg);

// Reference-anchored baseline on summed log-probabilities.
LossOutput DpoLoss(const ScoredSequence& win, const ScoredSequence& lose, const DpoConfig& cfg);

// Arithmetic mean of per-pair losses in index order.
double BatchMeanLoss(std::span<const LossOutput> outputs);

// f(x) and, when grad != nullptr, its analytic gradient.
using DifferentiableFn = std::function<double(std::span<const double> x, std::vector<double>* grad)>;

struct GradCheckReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  double max_relative_error = 0.0;
  bool passed = false;
};

inline constexpr double kGradCheckFloor = 1e-5;

// Central differences per coordinate; relative error uses the denominator
// max(|analytic|, |numeric|, kGradCheckFloor).
GradCheckReport FiniteDifferenceCheck(const DifferentiableFn& fn, std::span<const double> point,
                                      double h, double tolerance);

}  // namespace mdpo
