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
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mdpo/error.hpp"
#include "mdpo/trainer.hpp"

namespace {

mdpo::PreferencePair MakePair(const std::string& id, const std::string& prompt,
                              const std::string& chosen, const std::string& rejected) {
  mdpo::PreferencePair p;
  p.id = id;
  p.problem_id = id;
  p.prompt = prompt;
  p.prefix_steps = {std::string(mdpo::kGuidanceStep)};
  p.chosen = chosen;
  p.rejected = rejected;
  return p;
}

// Gold solutions against the same solution with the answer off by one.
std::vector<mdpo::PreferencePair> CorpusPairs(int count, std::uint64_t seed) {
  std::vector<mdpo::PreferencePair> pairs;
  for (const auto& e : mdpo::GenSyntheticCorpus(seed, count, {2, 3}, {2, 9})) {
    const std::string gold = mdpo::RenderSolution(e.gold.steps, e.gold.final_answer);
    const std::string wrong = mdpo::RenderSolution(e.gold.steps, *e.gold.final_answer + 1);
    pairs.push_back(MakePair(e.problem.id, e.problem.text, gold, wrong));
  }
  return pairs;
}

mdpo::PolicyParams SftPolicy(int count) {
  const mdpo::Vocabulary vocab;
  std::vector<mdpo::TokenizedExample> examples;
  for (const auto& p : CorpusPairs(count, 99)) {
    const auto e = mdpo::EncodePair(vocab, p);
    examples.push_back({e.context, e.chosen});
  }
  return mdpo::SftFit(examples, 4, 0.1, true);
}

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mdpo_trainer_" + name)).string();
}

double AvgLogprob(const mdpo::PolicyParams& params, const std::vector<int>& ctx,
                  const std::vector<int>& completion) {
  return mdpo::AvgLoglik(mdpo::Score(params, ctx, completion).token_logprobs);
}

}  // namespace

TEST_CASE("learning rate schedule") {
  mdpo::TrainConfig cfg;
  cfg.peak_lr = 1.0;
  cfg.warmup_ratio = 0.1;
  // 100 steps: 10 warmup steps, cosine over the remaining 90.
  CHECK(mdpo::LrAt(0, 100, cfg) == 0.0);
  CHECK(mdpo::LrAt(5, 100, cfg) == doctest::Approx(0.5));
  CHECK(mdpo::LrAt(10, 100, cfg) == doctest::Approx(1.0));
  CHECK(mdpo::LrAt(55, 100, cfg) == doctest::Approx(0.5));
  CHECK(mdpo::LrAt(100, 100, cfg) == doctest::Approx(0.0));
  // ceil(0.1 * 15) = 2 warmup steps.
  CHECK(mdpo::LrAt(1, 15, cfg) == doctest::Approx(0.5));
  CHECK(mdpo::LrAt(2, 15, cfg) == doctest::Approx(1.0));
  cfg.warmup_ratio = 0.0;
  CHECK(mdpo::LrAt(0, 1, cfg) == 1.0);
  CHECK_THROWS_AS(mdpo::LrAt(101, 100, cfg), mdpo::Error);
  CHECK_THROWS_AS(mdpo::LrAt(-1, 100, cfg), mdpo::Error);
}

TEST_CASE("config validation") {
  mdpo::TrainConfig cfg;
  CHECK_NOTHROW(cfg.Validate());
  for (auto mutate : std::vector<void (*)(mdpo::TrainConfig&)>{
           [](mdpo::TrainConfig& c) { c.epochs = -1; },
           [](mdpo::TrainConfig& c) { c.batch_size = 0; },
           [](mdpo::TrainConfig& c) { c.peak_lr = 0.0; },
           [](mdpo::TrainConfig& c) { c.warmup_ratio = 1.5; },
           [](mdpo::TrainConfig& c) { c.beta = 0.0; },
           [](mdpo::TrainConfig& c) { c.beta = std::nan(""); }}) {
    mdpo::TrainConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.Validate(), mdpo::Error);
  }
  CHECK(mdpo::ParseLossKind("dpo") == mdpo::LossKind::kDpo);
  CHECK_THROWS_AS(mdpo::ParseLossKind("ipo"), mdpo::Error);
}

TEST_CASE("one optimizer step on a single pair moves logits by the learning rate") {
  // Order 1 so every row is keyed by the previous token only. Chosen " 3" and
  // rejected " 4" share the row after " "; under a uniform policy the loss
  // gradient there is -c*(e_3 - e_4) with c = sigmoid(gamma)*beta/3.
  // Only rows present in the table are trainable, so the four rows involved
  // are inserted as zero rows first.
  mdpo::PolicyParams initial(1, false);
  const mdpo::Vocabulary& v = initial.vocab;
  const int space = v.Encode(" ")[0];
  const int three = v.Encode("3")[0];
  const int four = v.Encode("4")[0];
  const int dot = v.Encode(".")[0];
  const int term = v.terminator();
  for (int id : {space, three, four, dot}) {
    const std::vector<int> ids = {id};
    initial.FindOrInsertRow(initial.MakeKey(ids));
  }
  const auto pair = MakePair("a", "Compute ((3+4)*2).", "3", "4");
  mdpo::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1;
  cfg.warmup_ratio = 0.0;
  cfg.peak_lr = 0.01;
  cfg.shuffle = false;
  mdpo::Trainer trainer(initial, {pair}, cfg);
  trainer.Run();

  std::vector<double> before;
  std::vector<double> after;
  auto delta = [&](int prev, int token) {
    const std::vector<int> history = {prev};
    mdpo::ContextLogits(initial, history, before);
    mdpo::ContextLogits(trainer.params(), history, after);
    return after[static_cast<std::size_t>(token)] - before[static_cast<std::size_t>(token)];
  };
  const double lr = cfg.peak_lr;
  const double tol = 1e-6 * lr;
  CHECK(std::abs(delta(space, three) - lr) < tol);
  CHECK(std::abs(delta(space, four) + lr) < tol);
  CHECK(std::abs(delta(space, term)) < tol);
  // Rows after "3" and "4" only see the terminator. Off-terminator entries
  // have gradient c/V, small enough that epsilon shows up in the step.
  const double c = mdpo::Sigmoid(cfg.gamma) * cfg.beta / 3.0;
  const double g_small = c / static_cast<double>(v.size());
  const double small_step = lr * g_small / (g_small + cfg.adam_epsilon);
  CHECK(std::abs(delta(three, term) - lr) < tol);
  CHECK(std::abs(delta(three, four) + small_step) < 1e-12);
  CHECK(std::abs(delta(four, term) + lr) < tol);
  CHECK(std::abs(delta(four, three) - small_step) < 1e-12);
  // The first completion token " " is shared, so its row gets no net gradient.
  CHECK(std::abs(delta(dot, space)) < tol);

  // Loss before the step: -log sigmoid(-gamma) under the uniform policy.
  REQUIRE(trainer.metrics().epochs.size() == 1);
  CHECK(trainer.metrics().epochs[0].mean_loss == doctest::Approx(mdpo::NegLogSigmoid(-cfg.gamma)));
  CHECK(trainer.optimizer().step == 1);
}

TEST_CASE("dpo starts at ln 2 and both losses improve the preference") {
  const auto policy = SftPolicy(60);
  const auto pairs = CorpusPairs(40, 7);
  const mdpo::Vocabulary vocab;
  for (mdpo::LossKind kind : {mdpo::LossKind::kDpo, mdpo::LossKind::kMdpo}) {
    mdpo::TrainConfig cfg;
    cfg.loss = kind;
    cfg.epochs = 4;
    cfg.batch_size = 64;
    cfg.peak_lr = 0.02;
    mdpo::Trainer trainer(policy, pairs, cfg);
    trainer.RunEpoch();
    const double first_loss = trainer.metrics().epochs[0].mean_loss;
    if (kind == mdpo::LossKind::kDpo) {
      CHECK(first_loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
      const auto& ref = trainer.reference_scores();
      REQUIRE(ref.size() == pairs.size());
    } else {
      double expected = 0.0;
      for (const auto& p : pairs) {
        const auto e = mdpo::EncodePair(vocab, p);
        expected += mdpo::NegLogSigmoid(cfg.beta * (AvgLogprob(policy, e.context, e.chosen) -
                                                    AvgLogprob(policy, e.context, e.rejected)) -
                                        cfg.gamma);
      }
      CHECK(first_loss == doctest::Approx(expected / static_cast<double>(pairs.size())));
    }
    trainer.Run();
    const auto& epochs = trainer.metrics().epochs;
    REQUIRE(epochs.size() == 4);
    CHECK(epochs.back().mean_loss < first_loss);
    CHECK(epochs.back().win_rate >= epochs.front().win_rate);
    CHECK(epochs.back().eval_pairs == 40);
  }
}

TEST_CASE("training is deterministic and resumes bit-exactly") {
  const auto policy = SftPolicy(30);
  const auto pairs = CorpusPairs(30, 3);
  mdpo::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 17;
  const auto full = mdpo::Train(policy, pairs, cfg);
  CHECK(mdpo::SerializeParams(mdpo::Train(policy, pairs, cfg).params) ==
        mdpo::SerializeParams(full.params));

  const std::string ckpt = TempPath("ckpt.bin");
  {
    mdpo::Trainer first(policy, pairs, cfg);
    first.Run(1);
    CHECK(first.epoch() == 1);
    first.SaveCheckpoint(ckpt);
  }
  auto resumed = mdpo::Trainer::Resume(ckpt, pairs, cfg);
  CHECK(resumed.epoch() == 1);
  resumed.Run();
  CHECK(resumed.epoch() == 3);
  CHECK(mdpo::SerializeParams(resumed.params()) == mdpo::SerializeParams(full.params));
  CHECK(resumed.metrics().epochs.back().mean_loss == full.metrics.epochs.back().mean_loss);

  auto other = cfg;
  other.peak_lr *= 2;
  CHECK_THROWS_WITH_AS(mdpo::Trainer::Resume(ckpt, pairs, other), doctest::Contains("ConfigMismatch"),
                       mdpo::Error);
  auto fewer = pairs;
  fewer.pop_back();
  CHECK_THROWS_AS(mdpo::Trainer::Resume(ckpt, fewer, cfg), mdpo::Error);

  {
    std::ofstream out(ckpt, std::ios::binary | std::ios::app);
    out << "junk";
  }
  CHECK_THROWS_AS(mdpo::Trainer::Resume(ckpt, pairs, cfg), mdpo::Error);
  std::filesystem::remove(ckpt);

  auto reseeded = cfg;
  reseeded.seed = 18;
  CHECK(mdpo::SerializeParams(mdpo::Train(policy, pairs, reseeded).params) !=
        mdpo::SerializeParams(full.params));
}

TEST_CASE("pairs with unknown tokens are skipped") {
  const auto policy = SftPolicy(10);
  auto pairs = CorpusPairs(5, 1);
  pairs.push_back(MakePair("bad", "Compute ((3+4)*2).", "~", "7"));
  mdpo::TrainConfig cfg;
  cfg.epochs = 1;
  const auto result = mdpo::Train(policy, pairs, cfg);
  CHECK(result.metrics.skipped_pairs == 1);
  CHECK_THROWS_AS(mdpo::Train(policy, {MakePair("bad", "x", "~", "~~")}, cfg), mdpo::Error);

  cfg.epochs = 0;
  CHECK(mdpo::SerializeParams(mdpo::Train(policy, pairs, cfg).params) ==
        mdpo::SerializeParams(policy));
}

TEST_CASE("metrics are written as one JSON line per epoch") {
  const auto policy = SftPolicy(10);
  mdpo::TrainConfig cfg;
  cfg.epochs = 2;
  const std::string path = TempPath("metrics.jsonl");
  mdpo::Train(policy, CorpusPairs(10, 2), cfg, {}, path);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["epoch"] == ++lines);
    CHECK(j.contains("win_rate"));
    CHECK(j.contains("margin_satisfaction"));
  }
  CHECK(lines == 2);
  std::filesystem::remove(path);
}
