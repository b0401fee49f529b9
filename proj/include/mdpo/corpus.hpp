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

// Problem/solution data model for step-segmented arithmetic reasoning.
//
// Solutions are written as "[Step 1] 3+4=7 [Step 2] 7*2=14. The answer is 14."
// Every arithmetic step is a single binary operation whose right-hand side can
// be checked exactly with rational arithmetic.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace mdpo {

using Rational = boost::multiprecision::cpp_rational;

inline constexpr std::string_view kAnswerMarker = "The answer is";
inline constexpr std::string_view kGuidanceStep = "Let's think step by step.";

// Integers, decimals and fractions a/b, with an optional leading minus.
std::optional<Rational> TryParseNumber(std::string_view text);

// Integer when integral, otherwise the reduced fraction "a/b".
std::string RenderRational(const Rational& value);

struct Problem {
  std::string id;
  std::string text;
  Rational gold_answer;
  int difficulty = 1;

  bool operator==(const Problem&) const = default;
};

enum class StepKind { kArithmetic, kNarrative };

struct Step {
  int index = 0;
  std::string text;
  StepKind kind = StepKind::kNarrative;

  bool operator==(const Step&) const = default;
};

struct Solution {
  std::vector<Step> steps;
  std::optional<Rational> final_answer;
  std::string raw_text;
};

enum class StepStatus { kCorrect, kIncorrect, kNonArithmetic };

struct StepVerdict {
  StepStatus status = StepStatus::kNonArithmetic;
  std::optional<std::string> corrected_text;
};

struct CorpusEntry {
  Problem problem;
  Solution gold;
};

// The 0-th guidance step that every reasoning prefix starts from.
Step GuidanceStep();

StepKind ClassifyStep(std::string_view text);

// Splits on "[Step i]" markers, which must run first_index, first_index+1, ...
// The trailing answer sentence is not part of any step.
std::vector<Step> SegmentSteps(std::string_view raw_text, int first_index = 1);

// Segmentation plus answer extraction. Throws MalformedSolution/MalformedAnswer.
Solution ParseSolution(std::string_view raw_text, int first_index = 1);

// Canonical text: steps joined by single spaces, then ". The answer is N."
std::string RenderSolution(const std::vector<Step>& steps,
                           const std::optional<Rational>& final_answer);

// Conditioning text for a completion: the problem, the 0-th guidance step,
// then " [Step i] text" for every further prefix step. prefix must start with
// the guidance step.
std::string RenderContext(std::string_view prompt, const std::vector<Step>& prefix);

// Collapses whitespace runs to one space and trims both ends.
std::string CanonicalizeWhitespace(std::string_view text);

std::optional<Rational> ExtractFinalAnswer(std::string_view raw_text);

bool VerifyAnswer(const std::optional<Rational>& candidate, const Rational& gold);

StepVerdict VerifyArithmeticStep(const Step& step);

// Left-to-right chain of binary operations, e.g. ((a+b)*c).
struct Expression {
  std::vector<Rational> operands;
  std::vector<char> ops;

  int difficulty() const { return static_cast<int>(ops.size()); }
};

Expression ParseProblemExpression(std::string_view problem_text);
std::string RenderProblemText(const Expression& expr);
// One "[Step i] lhs=rhs" per operation followed by the answer sentence.
Solution GoldSolution(const Expression& expr);
Rational Evaluate(const Expression& expr);

struct IntRange {
  int lo = 0;
  int hi = 0;
};

inline constexpr IntRange kNormalOperands{2, 99};
inline constexpr IntRange kHardOperands{1000, 9999};

std::vector<CorpusEntry> GenSyntheticCorpus(std::uint64_t seed, int count, IntRange difficulty,
                                            IntRange operands = kNormalOperands);

Problem ComplexifyProblem(const Problem& problem, std::uint64_t seed,
                          IntRange operands = kHardOperands);

void WriteCorpus(const std::string& path, const std::vector<CorpusEntry>& corpus);
std::vector<CorpusEntry> ReadCorpus(const std::string& path);

}  // namespace mdpo
