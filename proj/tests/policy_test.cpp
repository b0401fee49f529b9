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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "mdpo/error.hpp"
#include "mdpo/policy.hpp"
#include "mdpo/random.hpp"

namespace {

using mdpo::PolicyParams;
using mdpo::Vocabulary;

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mdpo_policy_" + name)).string();
}

// Random table over every context that the given sequences touch.
PolicyParams RandomTable(int order, bool backoff, const std::vector<std::vector<int>>& seqs,
                         std::uint64_t seed) {
  std::vector<mdpo::TokenizedExample> ex;
  for (const auto& s : seqs) ex.push_back({{}, s});
  PolicyParams p = mdpo::SftFit(ex, order, 1.0, backoff);
  std::mt19937_64 rng(seed);
  for (std::size_t r = 0; r < p.num_rows(); ++r) {
    for (double& v : p.row(r)) v = 4.0 * mdpo::UniformUnit(rng) - 2.0;
  }
  return p;
}

}  // namespace

TEST_CASE("vocabulary round trip") {
  const Vocabulary v;
  const std::string text =
      "Compute ((12+5)*3). Let's think step by step. [Step 1] 12+5=17 [Step 2] 17*3=51. The answer "
      "is 51.";
  const auto ids = v.Encode(text);
  CHECK(v.Decode(ids) == text);
  CHECK(v.token(v.terminator()) == "<eos>");
  // Multi-character atoms are single tokens.
  CHECK(v.Encode("[Step").size() == 1);
  CHECK(v.Encode("The answer is").size() == 1);
  CHECK(v.Encode("Let's think step by step.").size() == 1);
  CHECK(v.Encode("7/2").size() == 3);
  CHECK_THROWS_AS(v.Encode("x"), mdpo::Error);
  CHECK(v.size() < 40);
}

TEST_CASE("uniform logits score -ln V") {
  const PolicyParams p(3, false);
  const double V = static_cast<double>(p.vocab_size());
  const auto s = mdpo::Score(p, std::vector<int>{1, 2}, std::vector<int>{3, 4, 5, 0});
  for (double lp : s.token_logprobs) CHECK(lp == doctest::Approx(-std::log(V)).epsilon(1e-14));
}

TEST_CASE("single context table") {
  PolicyParams p(1, false);
  const std::size_t V = p.vocab_size();
  const std::size_t r = p.FindOrInsertRow(p.MakeKey(std::vector<int>{7}));
  p.row(r)[0] = std::log(3.0);
  const auto s = mdpo::Score(p, std::vector<int>{7}, std::vector<int>{0});
  CHECK(std::abs(s.token_logprobs[0] - std::log(3.0 / (3.0 + static_cast<double>(V) - 1.0))) <= 1e-14);
  // Shift invariance.
  for (double& x : p.row(r)) x += 5.25;
  const auto shifted = mdpo::Score(p, std::vector<int>{7}, std::vector<int>{0});
  CHECK(std::abs(shifted.token_logprobs[0] - s.token_logprobs[0]) <= 1e-13);
}

TEST_CASE("probabilities sum to one") {
  const PolicyParams p = RandomTable(2, true, {{1, 2, 3, 4, 5}, {2, 3, 1, 1}}, 9);
  mdpo::ScoreDetail detail;
  mdpo::Score(p, std::vector<int>{1, 2}, std::vector<int>{3, 4, 5}, &detail);
  for (const auto& pos : detail.positions) {
    double total = 0.0;
    for (double q : pos.probs) total += q;
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("prefix conditioning consistency") {
  const PolicyParams p = RandomTable(3, false, {{1, 2, 3, 4, 5, 6}}, 3);
  const std::vector<int> prompt{1, 2};
  const std::vector<int> a{3, 4};
  const std::vector<int> b{5, 6, 0};
  std::vector<int> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  std::vector<int> prompt_a = prompt;
  prompt_a.insert(prompt_a.end(), a.begin(), a.end());
  const auto whole = mdpo::Score(p, prompt, ab);
  const auto tail = mdpo::Score(p, prompt_a, b);
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(tail.token_logprobs[i] == whole.token_logprobs[a.size() + i]);
  }
}

TEST_CASE("score errors") {
  const PolicyParams p(2, false);
  CHECK_THROWS_AS(mdpo::Score(p, std::vector<int>{1}, std::vector<int>{}), mdpo::Error);
  try {
    mdpo::Score(p, std::vector<int>{1}, std::vector<int>{999});
    FAIL("expected UnknownToken");
  } catch (const mdpo::Error& ex) {
    CHECK(ex.code() == mdpo::ErrorCode::kUnknownToken);
  }
}

TEST_CASE("sampling determinism and terminator") {
  const PolicyParams p = RandomTable(2, true, {{1, 2, 3, 4, 5, 0}}, 21);
  mdpo::SamplingConfig greedy{0.0, 1, 50};
  CHECK(mdpo::Sample(p, std::vector<int>{1}, greedy) == mdpo::Sample(p, std::vector<int>{1}, greedy));
  mdpo::SamplingConfig warm{1.0, 77, 50};
  CHECK(mdpo::Sample(p, std::vector<int>{1}, warm) == mdpo::Sample(p, std::vector<int>{1}, warm));
  CHECK(mdpo::Sample(p, std::vector<int>{1}, warm).size() <= 50);

  PolicyParams stop(1, false);
  stop.default_logits[0] = 50.0;
  const auto out = mdpo::Sample(stop, std::vector<int>{3}, warm);
  CHECK(out == std::vector<int>{0});
  CHECK(mdpo::Sample(stop, std::vector<int>{3}, greedy) == std::vector<int>{0});

  // Greedy ties break toward the smallest id.
  PolicyParams tie(1, false);
  tie.default_logits[4] = 1.0;
  tie.default_logits[2] = 1.0;
  CHECK(mdpo::Sample(tie, std::vector<int>{3}, mdpo::SamplingConfig{0.0, 0, 1}) == std::vector<int>{2});
  CHECK_THROWS_AS(mdpo::Sample(tie, std::vector<int>{3}, mdpo::SamplingConfig{0.0, 0, 0}), mdpo::Error);
}

TEST_CASE("sampling matches the softmax distribution") {
  PolicyParams p(1, false);
  const std::size_t V = p.vocab_size();
  const std::size_t r = p.FindOrInsertRow(p.MakeKey(std::vector<int>{5}));
  std::mt19937_64 rng(4);
  for (double& x : p.row(r)) x = 2.0 * mdpo::UniformUnit(rng);
  std::vector<double> logits;
  mdpo::ContextLogits(p, std::vector<int>{5}, logits);
  double z = 0.0;
  for (double x : logits) z += std::exp(x);
  std::vector<int> counts(V, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto t = mdpo::Sample(p, std::vector<int>{5}, mdpo::SamplingConfig{1.0, static_cast<std::uint64_t>(i), 1});
    ++counts[static_cast<std::size_t>(t[0])];
  }
  for (std::size_t v = 0; v < V; ++v) {
    const double q = std::exp(logits[v]) / z;
    const double se = std::sqrt(q * (1 - q) / draws);
    CHECK(std::abs(static_cast<double>(counts[v]) / draws - q) <= 3 * se + 1e-12);
  }
}

TEST_CASE("parameter gradients by hand") {
  PolicyParams p(1, false);
  const std::size_t V = p.vocab_size();
  const std::size_t r = p.FindOrInsertRow(p.MakeKey(std::vector<int>{5}));
  mdpo::ScoreDetail detail;
  mdpo::Score(p, std::vector<int>{5}, std::vector<int>{3}, &detail);

  mdpo::ParamGrad zero(V);
  mdpo::AccumulateParamGrads(p, detail, std::vector<double>{0.0}, zero);
  for (std::size_t row : zero.rows()) {
    for (double g : zero.Find(row)) CHECK(g == 0.0);
  }

  mdpo::ParamGrad grad(V);
  mdpo::AccumulateParamGrads(p, detail, std::vector<double>{1.0}, grad);
  const auto g = grad.Find(r);
  REQUIRE(g.size() == V);
  for (std::size_t v = 0; v < V; ++v) {
    const double expect = (v == 3 ? 1.0 : 0.0) - 1.0 / static_cast<double>(V);
    CHECK(std::abs(g[v] - expect) <= 1e-15);
  }
  // Untouched rows stay absent.
  const std::size_t other = p.FindOrInsertRow(p.MakeKey(std::vector<int>{6}));
  CHECK(grad.Find(other).empty());
  CHECK_THROWS_AS(mdpo::AccumulateParamGrads(p, detail, std::vector<double>{1.0, 2.0}, grad),
                  mdpo::Error);
}

TEST_CASE("policy-level finite differences on a three-context table") {
  // Order 1 and three distinct preceding tokens give exactly three rows.
  const std::vector<int> chosen{2, 3, 0};
  const std::vector<int> rejected{3, 2, 0};
  PolicyParams base(1, false);
  std::mt19937_64 rng(8);
  for (int ctx : {1, 2, 3}) {
    const std::size_t r = base.FindOrInsertRow(base.MakeKey(std::vector<int>{ctx}));
    for (double& x : base.row(r)) x = 2.0 * mdpo::UniformUnit(rng) - 1.0;
  }
  REQUIRE(base.num_rows() == 3);
  const std::size_t V = base.vocab_size();
  std::vector<double> point;
  for (std::size_t r = 0; r < 3; ++r) point.insert(point.end(), base.row(r).begin(), base.row(r).end());
  PolicyParams work = base;
  mdpo::DifferentiableFn fn = [&](std::span<const double> x, std::vector<double>* grad) {
    for (std::size_t r = 0; r < 3; ++r) std::copy_n(x.begin() + r * V, V, work.row(r).begin());
    mdpo::ScoreDetail dw, dl;
    const auto w = mdpo::Score(work, std::vector<int>{1}, chosen, &dw);
    const auto l = mdpo::Score(work, std::vector<int>{1}, rejected, &dl);
    const auto out = mdpo::MdpoLoss(w, l, {0.4, 0.5});
    if (grad) {
      mdpo::ParamGrad g(V);
      mdpo::AccumulateParamGrads(work, dw, out.grad_w, g);
      mdpo::AccumulateParamGrads(work, dl, out.grad_l, g);
      grad->assign(x.size(), 0.0);
      for (std::size_t r = 0; r < 3; ++r) {
        const auto row = g.Find(r);
        if (!row.empty()) std::copy(row.begin(), row.end(), grad->begin() + r * V);
      }
    }
    return out.loss;
  };
  const auto report = mdpo::FiniteDifferenceCheck(fn, point, 1e-5, 1e-4);
  CHECK(report.passed);
  CHECK(report.max_relative_error <= 1e-4);
}

TEST_CASE("sft fit counts") {
  const std::vector<mdpo::TokenizedExample> ex = {{{1}, {2, 3, 0}}, {{1}, {2, 4, 0}}, {{1}, {2, 3, 0}}};
  const PolicyParams p = mdpo::SftFit(ex, 1, 0.1);
  const std::size_t r = p.FindRow(p.MakeKey(std::vector<int>{2}));
  REQUIRE(r != SIZE_MAX);
  CHECK(p.row(r)[3] == doctest::Approx(std::log(2.1)));
  CHECK(p.row(r)[4] == doctest::Approx(std::log(1.1)));
  CHECK(p.row(r)[5] == doctest::Approx(std::log(0.1)));
  CHECK_THROWS_AS(mdpo::SftFit(ex, 1, 0.0), mdpo::Error);
  CHECK_THROWS_AS(mdpo::SftFit({}, 1, 0.1), mdpo::Error);
}

TEST_CASE("sft memorizes a repeated sequence") {
  const Vocabulary v;
  const auto prompt = v.Encode("Compute (3+4). Let's think step by step.");
  auto completion = v.Encode(" [Step 1] 3+4=7. The answer is 7.");
  completion.push_back(v.terminator());
  const std::vector<mdpo::TokenizedExample> ex(5, {prompt, completion});
  for (bool backoff : {false, true}) {
    const PolicyParams p = mdpo::SftFit(ex, 4, 1e-6, backoff);
    CHECK(mdpo::Sample(p, prompt, mdpo::SamplingConfig{0.0, 0, 100}) == completion);
  }
  // Heavy smoothing approaches the uniform policy.
  const PolicyParams flat = mdpo::SftFit(ex, 4, 1e9);
  const auto s = mdpo::Score(flat, prompt, completion);
  for (double lp : s.token_logprobs) {
    CHECK(lp == doctest::Approx(-std::log(static_cast<double>(v.size()))).epsilon(1e-6));
  }
}

TEST_CASE("backoff sft telescopes to the longest observed context") {
  const std::vector<mdpo::TokenizedExample> ex = {{{1, 2}, {3, 0}}, {{5, 2}, {4, 0}}, {{5, 2}, {4, 0}}};
  const PolicyParams plain = mdpo::SftFit(ex, 2, 0.1, false);
  const PolicyParams backoff = mdpo::SftFit(ex, 2, 0.1, true);
  for (const auto& history : {std::vector<int>{1, 2}, std::vector<int>{5, 2}, std::vector<int>{2, 4}}) {
    std::vector<double> a, b;
    mdpo::ContextLogits(plain, history, a);
    mdpo::ContextLogits(backoff, history, b);
    for (std::size_t v = 0; v < a.size(); ++v) CHECK(a[v] == doctest::Approx(b[v]).epsilon(1e-12));
  }
  // An unseen long context falls back to the counts of its seen suffix.
  std::vector<double> fallback, suffix_only;
  mdpo::ContextLogits(backoff, std::vector<int>{9, 2}, fallback);
  CHECK(fallback[4] > fallback[3]);
  CHECK(fallback[3] > fallback[6]);
}

TEST_CASE("params round trip") {
  const PolicyParams p = RandomTable(3, true, {{1, 2, 3, 4, 5, 0}, {4, 4, 4}}, 5);
  const std::string path = TempPath("p.bin");
  mdpo::SaveParams(path, p);
  const PolicyParams q = mdpo::LoadParams(path);
  CHECK(q.num_rows() == p.num_rows());
  CHECK(q.order == p.order);
  CHECK(q.backoff == p.backoff);
  CHECK(mdpo::SerializeParams(q) == mdpo::SerializeParams(p));
  const auto a = mdpo::Score(p, std::vector<int>{1}, std::vector<int>{2, 3, 4});
  const auto b = mdpo::Score(q, std::vector<int>{1}, std::vector<int>{2, 3, 4});
  CHECK(a.token_logprobs == b.token_logprobs);

  const PolicyParams empty(2, false);
  CHECK(mdpo::SerializeParams(mdpo::DeserializeParams(mdpo::SerializeParams(empty))) ==
        mdpo::SerializeParams(empty));

  std::string bytes = mdpo::SerializeParams(p);
  bytes[4] = 9;  // version field
  try {
    mdpo::DeserializeParams(bytes);
    FAIL("expected ParseError");
  } catch (const mdpo::ParseError& ex) {
    CHECK(std::string(ex.what()).find("version") != std::string::npos);
  }
  CHECK_THROWS_AS(mdpo::DeserializeParams(bytes.substr(0, 3)), mdpo::ParseError);
  CHECK_THROWS_AS(mdpo::DeserializeParams(mdpo::SerializeParams(p).substr(0, 40)), mdpo::ParseError);
  CHECK_THROWS_AS(mdpo::LoadParams("/nonexistent/params.bin"), mdpo::Error);
  std::remove(path.c_str());
}
