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
#include <cstdio>
#include <functional>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mdpo/corpus.hpp"
#include "mdpo/error.hpp"

namespace {

using mdpo::ErrorCode;
using mdpo::Rational;

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const mdpo::Error& ex) {
    return ex.code();
  }
  FAIL("expected an mdpo::Error");
  return ErrorCode::kInvalidArgument;
}

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mdpo_corpus_" + name)).string();
}

}  // namespace

TEST_CASE("segment two steps with answer") {
  const auto sol = mdpo::ParseSolution("[Step 1] 3+4=7 [Step 2] 7*2=14. The answer is 14.");
  REQUIRE(sol.steps.size() == 2);
  CHECK(sol.steps[0].text == "3+4=7");
  CHECK(sol.steps[1].text == "7*2=14");
  CHECK(sol.steps[0].index == 1);
  CHECK(sol.steps[1].index == 2);
  CHECK(sol.steps[0].kind == mdpo::StepKind::kArithmetic);
  REQUIRE(sol.final_answer.has_value());
  CHECK(*sol.final_answer == 14);
}

TEST_CASE("segment single step") {
  const auto sol = mdpo::ParseSolution("[Step 1] 5-5=0. The answer is 0.");
  REQUIRE(sol.steps.size() == 1);
  CHECK(sol.steps[0].text == "5-5=0");
  CHECK(*sol.final_answer == 0);
}

TEST_CASE("segmentation errors") {
  CHECK(CodeOf([] { mdpo::SegmentSteps("no markers here"); }) == ErrorCode::kMalformedSolution);
  CHECK(CodeOf([] { mdpo::SegmentSteps("[Step 2] 1+1=2 [Step 1] 2+2=4"); }) ==
        ErrorCode::kMalformedSolution);
  CHECK(CodeOf([] { mdpo::SegmentSteps("[Step 1] 1+1=2 [Step 1] 2+2=4"); }) ==
        ErrorCode::kMalformedSolution);
  CHECK(CodeOf([] { mdpo::SegmentSteps("   "); }) == ErrorCode::kMalformedSolution);
}

TEST_CASE("segmentation tolerates whitespace runs") {
  const auto steps = mdpo::SegmentSteps("  [Step   1]   3+4=7\n\n[Step 2]\t7*2=14 .  The answer is 14.");
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].text == "3+4=7");
  CHECK(steps[1].text == "7*2=14");
}

TEST_CASE("extract final answer") {
  CHECK(*mdpo::ExtractFinalAnswer("so... The answer is 14.") == 14);
  CHECK(*mdpo::ExtractFinalAnswer("so... The answer is 7/2.") == Rational(7, 2));
  CHECK(*mdpo::ExtractFinalAnswer("The answer is 1. The answer is -3.5") == Rational(-7, 2));
  CHECK_FALSE(mdpo::ExtractFinalAnswer("no marker").has_value());
  CHECK(CodeOf([] { mdpo::ExtractFinalAnswer("The answer is twelve."); }) ==
        ErrorCode::kMalformedAnswer);
}

TEST_CASE("verify answer uses exact rationals") {
  CHECK(mdpo::VerifyAnswer(Rational(14), Rational(14)));
  CHECK_FALSE(mdpo::VerifyAnswer(std::nullopt, Rational(14)));
  CHECK(mdpo::VerifyAnswer(*mdpo::TryParseNumber("7/2"), *mdpo::TryParseNumber("3.5")));
  CHECK(*mdpo::TryParseNumber("35/10") == Rational(7, 2));
  CHECK_FALSE(mdpo::TryParseNumber("1/0").has_value());
  CHECK_FALSE(mdpo::TryParseNumber("abc").has_value());
}

TEST_CASE("render rational") {
  CHECK(mdpo::RenderRational(Rational(14)) == "14");
  CHECK(mdpo::RenderRational(Rational(70, 20)) == "7/2");
  CHECK(mdpo::RenderRational(Rational(-3, 9)) == "-1/3");
}

TEST_CASE("verify arithmetic step") {
  using mdpo::StepStatus;
  auto verdict = [](const std::string& text) {
    return mdpo::VerifyArithmeticStep(mdpo::Step{1, text, mdpo::ClassifyStep(text)});
  };
  CHECK(verdict("7*2=14").status == StepStatus::kCorrect);
  const auto bad = verdict("7*2=15");
  CHECK(bad.status == StepStatus::kIncorrect);
  REQUIRE(bad.corrected_text.has_value());
  CHECK(*bad.corrected_text == "7*2=14");
  CHECK(verdict("so we proceed").status == StepStatus::kNonArithmetic);
  CHECK_FALSE(verdict("so we proceed").corrected_text.has_value());
  CHECK(verdict("786/33=262/11").status == StepStatus::kCorrect);
  CHECK(*verdict("786/33=23").corrected_text == "786/33=262/11");
  CHECK(verdict("1.5+2.25=3.75").status == StepStatus::kCorrect);
  CHECK(verdict("-4*3=-12").status == StepStatus::kCorrect);
  CHECK(CodeOf([&] { verdict("5/0=1"); }) == ErrorCode::kDegenerateExpression);
}

TEST_CASE("corrections verify as correct and change only the right-hand side") {
  for (const std::string text : {"12+30=41", "99*99=1", "8-20=12", "7/4=2", "3.5*2=6"}) {
    const auto v = mdpo::VerifyArithmeticStep(mdpo::Step{1, text, mdpo::StepKind::kArithmetic});
    REQUIRE(v.status == mdpo::StepStatus::kIncorrect);
    const std::string& fixed = *v.corrected_text;
    const auto again = mdpo::VerifyArithmeticStep(mdpo::Step{1, fixed, mdpo::StepKind::kArithmetic});
    CHECK(again.status == mdpo::StepStatus::kCorrect);
    CHECK(fixed.substr(0, fixed.find('=')) == text.substr(0, text.find('=')));
  }
}

TEST_CASE("render context and solution") {
  CHECK(mdpo::RenderContext("Compute (3+4).", {mdpo::GuidanceStep()}) ==
        "Compute (3+4). Let's think step by step.");
  CHECK(mdpo::RenderContext("Q", {mdpo::GuidanceStep(), mdpo::Step{1, "3+4=7", {}}}) ==
        "Q Let's think step by step. [Step 1] 3+4=7");
  CHECK(mdpo::RenderSolution({mdpo::Step{1, "3+4=7", {}}}, Rational(7)) ==
        "[Step 1] 3+4=7. The answer is 7.");
  CHECK(mdpo::RenderSolution({}, Rational(7)) == "The answer is 7.");
}

TEST_CASE("synthetic corpus properties") {
  const auto corpus = mdpo::GenSyntheticCorpus(7, 400, {1, 5});
  std::set<std::string> ids;
  for (const auto& e : corpus) {
    CHECK(ids.insert(e.problem.id).second);
    const auto expr = mdpo::ParseProblemExpression(e.problem.text);
    CHECK(expr.difficulty() == e.problem.difficulty);
    CHECK(mdpo::Evaluate(expr) == e.problem.gold_answer);
    for (const Rational& x : expr.operands) {
      CHECK(x >= 2);
      CHECK(x <= 99);
    }
    // Round trip through text and every gold step verifies.
    const auto parsed = mdpo::ParseSolution(e.gold.raw_text);
    CHECK(mdpo::RenderSolution(parsed.steps, parsed.final_answer) ==
          mdpo::CanonicalizeWhitespace(e.gold.raw_text));
    CHECK(parsed.steps.size() == static_cast<std::size_t>(e.problem.difficulty));
    for (const auto& step : parsed.steps) {
      CHECK(mdpo::VerifyArithmeticStep(step).status == mdpo::StepStatus::kCorrect);
    }
    CHECK(*mdpo::ExtractFinalAnswer(e.gold.raw_text) == e.problem.gold_answer);
  }
}

TEST_CASE("synthetic corpus examples") {
  const auto one = mdpo::GenSyntheticCorpus(1, 1, {2, 2});
  REQUIRE(one.size() == 1);
  CHECK(one[0].problem.text.rfind("Compute ((", 0) == 0);
  CHECK(one[0].gold.steps.size() == 2);
  const auto base = mdpo::GenSyntheticCorpus(3, 20, {1, 1});
  for (const auto& e : base) {
    const auto expr = mdpo::ParseProblemExpression(e.problem.text);
    CHECK(mdpo::Evaluate(expr) == e.problem.gold_answer);
    CHECK(e.gold.steps.size() == 1);
  }
  CHECK(CodeOf([] { mdpo::GenSyntheticCorpus(1, 0, {1, 2}); }) == ErrorCode::kInvalidArgument);
  CHECK(CodeOf([] { mdpo::GenSyntheticCorpus(1, 5, {0, 2}); }) == ErrorCode::kInvalidArgument);
  CHECK(CodeOf([] { mdpo::GenSyntheticCorpus(1, 5, {2, 9}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("complexify") {
  const mdpo::Problem p{"p1", "Compute (3+4).", Rational(7), 1};
  const auto hard = mdpo::ComplexifyProblem(p, 11);
  CHECK(hard.id == "p1-hard");
  const auto expr = mdpo::ParseProblemExpression(hard.text);
  REQUIRE(expr.operands.size() == 2);
  CHECK(expr.ops == std::vector<char>{'+'});
  for (const Rational& x : expr.operands) {
    CHECK(x >= 1000);
    CHECK(x <= 9999);
  }
  CHECK(hard.gold_answer == expr.operands[0] + expr.operands[1]);
  CHECK(mdpo::ComplexifyProblem(p, 11) == hard);

  const auto corpus = mdpo::GenSyntheticCorpus(5, 50, {1, 6});
  for (const auto& e : corpus) {
    const auto h = mdpo::ComplexifyProblem(e.problem, 3);
    const auto src = mdpo::ParseProblemExpression(e.problem.text);
    const auto dst = mdpo::ParseProblemExpression(h.text);
    CHECK(dst.ops == src.ops);
    CHECK(h.difficulty == e.problem.difficulty);
    CHECK(mdpo::Evaluate(dst) == h.gold_answer);
    // Already 4-digit operands are still resampled.
    const auto twice = mdpo::ComplexifyProblem(h, 3);
    CHECK(mdpo::Evaluate(mdpo::ParseProblemExpression(twice.text)) == twice.gold_answer);
  }
}

TEST_CASE("corpus JSONL round trip and determinism") {
  const auto a = mdpo::GenSyntheticCorpus(42, 60, {1, 4});
  const auto b = mdpo::GenSyntheticCorpus(42, 60, {1, 4});
  const std::string pa = TempPath("a.jsonl");
  const std::string pb = TempPath("b.jsonl");
  mdpo::WriteCorpus(pa, a);
  mdpo::WriteCorpus(pb, b);
  std::ifstream fa(pa), fb(pb);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {});
  const std::string sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);
  const auto back = mdpo::ReadCorpus(pa);
  REQUIRE(back.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(back[i].problem == a[i].problem);
    CHECK(back[i].gold.steps == a[i].gold.steps);
  }
  const auto c = mdpo::GenSyntheticCorpus(43, 60, {1, 4});
  const bool differs = c[0].problem.text != a[0].problem.text || c[1].problem.text != a[1].problem.text;
  CHECK(differs);
  std::remove(pa.c_str());
  std::remove(pb.c_str());
}

TEST_CASE("corpus read reports the failing line") {
  const std::string path = TempPath("bad.jsonl");
  {
    const auto a = mdpo::GenSyntheticCorpus(1, 2, {1, 2});
    mdpo::WriteCorpus(path, a);
    std::ofstream out(path, std::ios::app);
    out << "{not json}\n";
  }
  try {
    mdpo::ReadCorpus(path);
    FAIL("expected a parse error");
  } catch (const mdpo::ParseError& ex) {
    CHECK(ex.line() == 3);
  }
  CHECK(CodeOf([] { mdpo::ReadCorpus("/nonexistent/dir/corpus.jsonl"); }) == ErrorCode::kIo);
  std::remove(path.c_str());
}
