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
#include "mdpo/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mdpo/error.hpp"

namespace mdpo {
namespace {

void RequireNonEmpty(std::span<const double> seq, const char* what) {
  if (seq.empty()) throw Error(ErrorCode::kEmptySequence, std::string(what) + " is empty");
}

}  // namespace

double ScoredSequence::sum() const {
  return std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0);
}

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double NegLogSigmoid(double x) {
  if (x >= 0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

double AvgLoglik(std::span<const double> token_logprobs) {
  RequireNonEmpty(token_logprobs, "sequence");
  return std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0) /
         static_cast<double>(token_logprobs.size());
}

double SimpoReward(std::span<const double> token_logprobs, double beta) {
  return beta * AvgLoglik(token_logprobs);
}

double PrefProb(double reward_w, double reward_l, double gamma) {
  return Sigmoid(reward_w - reward_l - gamma);
}

LossOutput MdpoLoss(const ScoredSequence& win, const ScoredSequence& lose, const LossConfig& cfg) {
  if (!(cfg.beta > 0)) throw Error(ErrorCode::kInvalidArgument, "beta must be > 0");
  if (!(cfg.gamma >= 0)) throw Error(ErrorCode::kInvalidArgument, "gamma must be >= 0");
  RequireNonEmpty(win.token_logprobs, "chosen sequence");
  RequireNonEmpty(lose.token_logprobs, "rejected sequence");

  LossOutput out;
  out.reward_w = SimpoReward(win.token_logprobs, cfg.beta);
  out.reward_l = SimpoReward(lose.token_logprobs, cfg.beta);
  out.margin_delta = out.reward_w - out.reward_l - cfg.gamma;
  out.loss = NegLogSigmoid(out.margin_delta);

  // d/dDelta of -log sigma(Delta) is -sigma(-Delta); each token enters the
  // reward with weight beta/|y|.
  const double scale = Sigmoid(-out.margin_delta) * cfg.beta;
  out.grad_w.assign(win.size(), -scale / static_cast<double>(win.size()));
  out.grad_l.assign(lose.size(), scale / static_cast<double>(lose.size()));
  return out;
}

LossOutput DpoLoss(const ScoredSequence& win, const ScoredSequence& lose, const DpoConfig& cfg) {
  if (!(cfg.beta > 0)) throw Error(ErrorCode::kInvalidArgument, "beta must be > 0");
  RequireNonEmpty(win.token_logprobs, "chosen sequence");
  RequireNonEmpty(lose.token_logprobs, "rejected sequence");
  if (cfg.reference_w.size() != win.size() || cfg.reference_l.size() != lose.size()) {
    throw Error(ErrorCode::kShapeMismatch, "reference log-probs do not match sequence lengths");
  }
  LossOutput out;
  out.reward_w = cfg.beta * (win.sum() - cfg.reference_w.sum());
  out.reward_l = cfg.beta * (lose.sum() - cfg.reference_l.sum());
  out.margin_delta = out.reward_w - out.reward_l;
  out.loss = NegLogSigmoid(out.margin_delta);
  const double scale = Sigmoid(-out.margin_delta) * cfg.beta;
  out.grad_w.assign(win.size(), -scale);
  out.grad_l.assign(lose.size(), scale);
  return out;
}

double BatchMeanLoss(std::span<const LossOutput> outputs) {
  if (outputs.empty()) return 0.0;
  double total = 0.0;
  for (const LossOutput& o : outputs) total += o.loss;
  return total / static_cast<double>(outputs.size());
}

GradCheckReport FiniteDifferenceCheck(const DifferentiableFn& fn, std::span<const double> point,
                                      double h, double tolerance) {
  if (!(h > 0)) throw Error(ErrorCode::kInvalidArgument, "h must be > 0");
  GradCheckReport report;
  fn(point, &report.analytic);
  if (report.analytic.size() != point.size()) {
    throw Error(ErrorCode::kShapeMismatch, "analytic gradient has the wrong length");
  }
  std::vector<double> x(point.begin(), point.end());
  report.numeric.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double plus = fn(x, nullptr);
    x[i] = saved - h;
    const double minus = fn(x, nullptr);
    x[i] = saved;
    report.numeric[i] = (plus - minus) / (2.0 * h);
    // Symmetric relative error. Below the floor the comparison is effectively
    // absolute: central differences cannot resolve gradients that are zero up
    // to rounding noise of order eps * |f| / h.
    const double denom =
        std::max({std::abs(report.analytic[i]), std::abs(report.numeric[i]), kGradCheckFloor});
    report.max_relative_error =
        std::max(report.max_relative_error, std::abs(report.analytic[i] - report.numeric[i]) / denom);
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace mdpo
