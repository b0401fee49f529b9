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
#include "mdpo/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "bytes.hpp"
#include "mdpo/digest.hpp"
#include "mdpo/error.hpp"
#include "mdpo/random.hpp"

namespace mdpo {
namespace {

using json = nlohmann::json;

constexpr char kCheckpointMagic[4] = {'M', 'D', 'P', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string PairsDigest(const std::vector<PreferencePair>& pairs) {
  std::string blob;
  for (const PreferencePair& p : pairs) {
    json record = {p.id, p.prompt, p.prefix_steps, p.chosen, p.rejected,
                   static_cast<int>(p.granularity)};
    blob += record.dump();
    blob.push_back('\n');
  }
  return Sha256Hex(blob);
}

}  // namespace

const char* LossKindName(LossKind kind) { return kind == LossKind::kMdpo ? "mdpo" : "dpo"; }

LossKind ParseLossKind(std::string_view name) {
  if (name == "mdpo") return LossKind::kMdpo;
  if (name == "dpo") return LossKind::kDpo;
  throw Error(ErrorCode::kInvalidArgument, "unknown loss '" + std::string(name) + "'");
}

void TrainConfig::Validate() const {
  if (epochs < 0) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 0");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  if (!(peak_lr > 0)) throw Error(ErrorCode::kInvalidArgument, "peak_lr must be > 0");
  if (!(warmup_ratio >= 0 && warmup_ratio < 1)) {
    throw Error(ErrorCode::kInvalidArgument, "warmup_ratio must be in [0, 1)");
  }
  if (!(beta > 0)) throw Error(ErrorCode::kInvalidArgument, "beta must be > 0");
  if (!(gamma >= 0)) throw Error(ErrorCode::kInvalidArgument, "gamma must be >= 0");
}

json TrainConfig::ToJson() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"peak_lr", peak_lr},
          {"warmup_ratio", warmup_ratio},
          {"loss", LossKindName(loss)},
          {"beta", beta},
          {"gamma", gamma},
          {"seed", seed},
          {"shuffle", shuffle},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_epsilon", adam_epsilon},
          {"weight_decay", weight_decay}};
}

json EpochMetrics::ToJson() const {
  return {{"epoch", epoch},
          {"mean_loss", mean_loss},
          {"win_rate", win_rate},
          {"win_count", win_count},
          {"eval_pairs", eval_pairs},
          {"margin_satisfaction", margin_satisfaction},
          {"margin_count", margin_count},
          {"lr", lr},
          {"step", step},
          {"seconds", seconds}};
}

double LrAt(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
  if (total_steps < 1 || step < 0 || step > total_steps) {
    throw Error(ErrorCode::kInvalidArgument, "step out of range");
  }
  const auto warmup =
      static_cast<std::int64_t>(std::ceil(cfg.warmup_ratio * static_cast<double>(total_steps)));
  if (step < warmup) {
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total_steps == warmup) return cfg.peak_lr;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

EncodedPair EncodePair(const Vocabulary& vocab, const PreferencePair& pair) {
  EncodedPair e;
  e.context = vocab.Encode(RenderContext(pair.prompt, pair.PrefixAsSteps()));
  e.chosen = vocab.Encode(" " + pair.chosen);
  e.chosen.push_back(vocab.terminator());
  e.rejected = vocab.Encode(" " + pair.rejected);
  e.rejected.push_back(vocab.terminator());
  return e;
}

PairwiseCounts CountWins(const PolicyParams& params, const std::vector<EncodedPair>& pairs,
                         const LossConfig& margin_cfg) {
  PairwiseCounts counts;
  for (const EncodedPair& p : pairs) {
    const double w = AvgLoglik(Score(params, p.context, p.chosen).token_logprobs);
    const double l = AvgLoglik(Score(params, p.context, p.rejected).token_logprobs);
    ++counts.total;
    if (w > l) ++counts.wins;
    if (margin_cfg.beta * (w - l) > margin_cfg.gamma) ++counts.margin_hits;
  }
  return counts;
}

Trainer::Trainer(PolicyParams initial, const std::vector<PreferencePair>& pairs, TrainConfig cfg,
                 const std::vector<PreferencePair>& eval_pairs)
    : cfg_(std::move(cfg)), params_(std::move(initial)) {
  cfg_.Validate();
  reference_params_ = params_;
  Prepare(pairs, eval_pairs);
}

void Trainer::Prepare(const std::vector<PreferencePair>& pairs,
                      const std::vector<PreferencePair>& eval_pairs) {
  for (const PreferencePair& p : pairs) {
    try {
      train_.push_back(EncodePair(params_.vocab, p));
    } catch (const Error& ex) {
      if (ex.code() != ErrorCode::kUnknownToken) throw;
      ++metrics_.skipped_pairs;
    }
  }
  for (const PreferencePair& p : eval_pairs) {
    try {
      eval_.push_back(EncodePair(params_.vocab, p));
    } catch (const Error& ex) {
      if (ex.code() != ErrorCode::kUnknownToken) throw;
    }
  }
  if (train_.empty() && cfg_.epochs > 0) {
    throw Error(ErrorCode::kSkippedBatch, "no trainable pairs after skipping unknown tokens");
  }
  steps_per_epoch_ = (static_cast<std::int64_t>(train_.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
  total_steps_ = std::max<std::int64_t>(1, steps_per_epoch_ * cfg_.epochs);
  if (cfg_.loss == LossKind::kDpo) {
    reference_.reserve(train_.size());
    for (const EncodedPair& e : train_) {
      reference_.emplace_back(Score(reference_params_, e.context, e.chosen),
                              Score(reference_params_, e.context, e.rejected));
    }
  }
  digest_ = Sha256Hex(cfg_.ToJson().dump() + "|" + PairsDigest(pairs) + "|" +
                      Sha256Hex(SerializeParams(reference_params_)));
}

void Trainer::ApplyAdamW(const ParamGrad& grad, double lr) {
  const std::size_t V = params_.vocab_size();
  for (std::size_t r : grad.rows()) {
    if (opt_slot_.emplace(r, opt_.rows.size()).second) {
      opt_.rows.push_back(r);
      opt_.first_moment.resize(opt_.first_moment.size() + V, 0.0);
      opt_.second_moment.resize(opt_.second_moment.size() + V, 0.0);
    }
  }
  const double t = static_cast<double>(opt_.step + 1);
  const double bias1 = 1.0 - std::pow(cfg_.adam_beta1, t);
  const double bias2 = 1.0 - std::pow(cfg_.adam_beta2, t);
  for (std::size_t i = 0; i < opt_.rows.size(); ++i) {
    const std::size_t r = opt_.rows[i];
    const auto g = grad.Find(r);
    auto theta = params_.row(r);
    double* m = opt_.first_moment.data() + i * V;
    double* v = opt_.second_moment.data() + i * V;
    for (std::size_t k = 0; k < V; ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      m[k] = cfg_.adam_beta1 * m[k] + (1.0 - cfg_.adam_beta1) * gk;
      v[k] = cfg_.adam_beta2 * v[k] + (1.0 - cfg_.adam_beta2) * gk * gk;
      const double update = (m[k] / bias1) / (std::sqrt(v[k] / bias2) + cfg_.adam_epsilon);
      theta[k] -= lr * (update + cfg_.weight_decay * theta[k]);
      if (!std::isfinite(theta[k])) {
        throw Error(ErrorCode::kInvalidArgument, "non-finite parameter after update");
      }
    }
  }
  ++opt_.step;
}

double Trainer::Update(const std::vector<std::size_t>& batch, double lr) {
  ParamGrad grad(params_.vocab_size());
  const LossConfig loss_cfg{cfg_.beta, cfg_.gamma};
  ScoreDetail detail_w;
  ScoreDetail detail_l;
  double loss_sum = 0.0;
  for (std::size_t idx : batch) {
    const EncodedPair& e = train_[idx];
    const ScoredSequence w = Score(params_, e.context, e.chosen, &detail_w);
    const ScoredSequence l = Score(params_, e.context, e.rejected, &detail_l);
    LossOutput out;
    if (cfg_.loss == LossKind::kMdpo) {
      out = MdpoLoss(w, l, loss_cfg);
    } else {
      DpoConfig dpo{cfg_.beta, reference_[idx].first, reference_[idx].second};
      out = DpoLoss(w, l, dpo);
    }
    loss_sum += out.loss;
    AccumulateParamGrads(params_, detail_w, out.grad_w, grad);
    AccumulateParamGrads(params_, detail_l, out.grad_l, grad);
  }
  grad.Scale(1.0 / static_cast<double>(batch.size()));
  ApplyAdamW(grad, lr);
  return loss_sum;
}

void Trainer::RunEpoch() {
  const auto started = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(train_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (cfg_.shuffle) {
    std::mt19937_64 rng(MixSeed(cfg_.seed, static_cast<std::uint64_t>(epoch_)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(UniformInt(rng, 0, static_cast<std::int64_t>(i) - 1))]);
    }
  }
  EpochMetrics m;
  m.epoch = epoch_ + 1;
  double loss_sum = 0.0;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg_.batch_size)) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg_.batch_size));
    const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
    m.lr = LrAt(static_cast<std::int64_t>(opt_.step), total_steps_, cfg_);
    loss_sum += Update(batch, m.lr);
  }
  m.mean_loss = train_.empty() ? 0.0 : loss_sum / static_cast<double>(train_.size());
  const PairwiseCounts counts =
      CountWins(params_, eval_.empty() ? train_ : eval_, LossConfig{cfg_.beta, cfg_.gamma});
  m.win_count = counts.wins;
  m.margin_count = counts.margin_hits;
  m.eval_pairs = counts.total;
  m.win_rate = counts.total ? static_cast<double>(counts.wins) / counts.total : 0.0;
  m.margin_satisfaction = counts.total ? static_cast<double>(counts.margin_hits) / counts.total : 0.0;
  m.step = opt_.step;
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  metrics_.epochs.push_back(m);
  ++epoch_;
}

void Trainer::Run(std::optional<int> stop_after_epoch) {
  const int last = stop_after_epoch ? std::min(*stop_after_epoch, cfg_.epochs) : cfg_.epochs;
  while (epoch_ < last) RunEpoch();
}

void Trainer::SaveCheckpoint(const std::string& path) const {
  ByteWriter w;
  w.Bytes(std::string_view(kCheckpointMagic, 4));
  w.U32(kCheckpointVersion);
  w.Str(digest_);
  w.U32(static_cast<std::uint32_t>(epoch_));
  w.Str(SerializeParams(params_));
  w.Str(SerializeParams(reference_params_));
  w.U64(opt_.step);
  w.U64(opt_.rows.size());
  const std::size_t V = params_.vocab_size();
  for (std::size_t i = 0; i < opt_.rows.size(); ++i) {
    w.U64(opt_.rows[i]);
    for (std::size_t k = 0; k < V; ++k) w.F64(opt_.first_moment[i * V + k]);
    for (std::size_t k = 0; k < V; ++k) w.F64(opt_.second_moment[i * V + k]);
  }
  json history = json::array();
  for (const EpochMetrics& m : metrics_.epochs) history.push_back(m.ToJson());
  w.Str(history.dump());
  const std::string bytes = w.Take();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

Trainer Trainer::Resume(const std::string& checkpoint_path,
                        const std::vector<PreferencePair>& pairs, TrainConfig cfg,
                        const std::vector<PreferencePair>& eval_pairs) {
  cfg.Validate();
  std::ifstream in(checkpoint_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + checkpoint_path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ByteReader r(bytes);
  if (r.Bytes(4) != std::string_view(kCheckpointMagic, 4)) throw ParseError("bad checkpoint magic");
  const std::uint32_t version = r.U32();
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint version " + std::to_string(version) + " != " +
                     std::to_string(kCheckpointVersion));
  }
  const std::string digest = r.Str();
  Trainer t;
  t.cfg_ = std::move(cfg);
  t.epoch_ = static_cast<int>(r.U32());
  t.params_ = DeserializeParams(r.Str());
  t.reference_params_ = DeserializeParams(r.Str());
  t.Prepare(pairs, eval_pairs);
  if (t.digest_ != digest) {
    throw Error(ErrorCode::kConfigMismatch, "checkpoint was written for a different config or pair set");
  }
  t.opt_.step = r.U64();
  const std::uint64_t rows = r.U64();
  const std::size_t V = t.params_.vocab_size();
  for (std::uint64_t i = 0; i < rows; ++i) {
    const std::size_t row = static_cast<std::size_t>(r.U64());
    if (row >= t.params_.num_rows()) throw ParseError("optimizer row out of range");
    t.opt_slot_.emplace(row, t.opt_.rows.size());
    t.opt_.rows.push_back(row);
    for (std::size_t k = 0; k < V; ++k) t.opt_.first_moment.push_back(r.F64());
    for (std::size_t k = 0; k < V; ++k) t.opt_.second_moment.push_back(r.F64());
  }
  try {
    for (const json& m : json::parse(r.Str())) {
      EpochMetrics e;
      e.epoch = m.at("epoch");
      e.mean_loss = m.at("mean_loss");
      e.win_count = m.at("win_count");
      e.eval_pairs = m.at("eval_pairs");
      e.win_rate = m.at("win_rate");
      e.margin_count = m.at("margin_count");
      e.margin_satisfaction = m.at("margin_satisfaction");
      e.lr = m.at("lr");
      e.step = m.at("step");
      e.seconds = m.at("seconds");
      t.metrics_.epochs.push_back(e);
    }
  } catch (const json::exception& ex) {
    throw ParseError(std::string("checkpoint metrics: ") + ex.what());
  }
  if (!r.done()) throw ParseError("trailing bytes in checkpoint");
  return t;
}

TrainResult Train(PolicyParams params, const std::vector<PreferencePair>& pairs,
                  const TrainConfig& cfg, const std::vector<PreferencePair>& eval_pairs,
                  const std::string& metrics_path) {
  if (cfg.epochs == 0) return {std::move(params), {}};
  Trainer trainer(std::move(params), pairs, cfg, eval_pairs);
  trainer.Run();
  if (!metrics_path.empty()) WriteMetrics(metrics_path, trainer.metrics());
  return {trainer.params(), trainer.metrics()};
}

void WriteMetrics(const std::string& path, const TrainMetrics& metrics) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  for (const EpochMetrics& m : metrics.epochs) out << m.ToJson().dump() << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

}  // namespace mdpo
