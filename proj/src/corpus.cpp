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
#include "mdpo/corpus.hpp"

#include <cctype>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "mdpo/error.hpp"
#include "mdpo/random.hpp"

namespace mdpo {
namespace {

using json = nlohmann::json;

bool IsSpace(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool IsDigit(char c) { return c >= '0' && c <= '9'; }

std::string_view Trim(std::string_view s) {
  while (!s.empty() && IsSpace(s.front())) s.remove_prefix(1);
  while (!s.empty() && IsSpace(s.back())) s.remove_suffix(1);
  return s;
}

void SkipSpaces(std::string_view s, std::size_t& pos) {
  while (pos < s.size() && IsSpace(s[pos])) ++pos;
}

// Consumes -?\d+(\.\d+)? starting at pos. Returns false without moving pos
// when no number starts there.
bool ScanDecimal(std::string_view s, std::size_t& pos) {
  std::size_t p = pos;
  if (p < s.size() && s[p] == '-') ++p;
  const std::size_t digits_begin = p;
  while (p < s.size() && IsDigit(s[p])) ++p;
  if (p == digits_begin) return false;
  if (p + 1 < s.size() && s[p] == '.' && IsDigit(s[p + 1])) {
    ++p;
    while (p < s.size() && IsDigit(s[p])) ++p;
  }
  pos = p;
  return true;
}

Rational ParseDecimal(std::string_view text) {
  bool negative = false;
  if (!text.empty() && text.front() == '-') {
    negative = true;
    text.remove_prefix(1);
  }
  boost::multiprecision::cpp_int num = 0;
  boost::multiprecision::cpp_int den = 1;
  bool after_point = false;
  for (char c : text) {
    if (c == '.') {
      after_point = true;
      continue;
    }
    num = num * 10 + (c - '0');
    if (after_point) den *= 10;
  }
  Rational value(num, den);
  return negative ? Rational(-value) : value;
}

struct ArithmeticParse {
  Rational lhs;
  Rational rhs;
  Rational expected;
  std::size_t rhs_begin = 0;
  std::size_t rhs_end = 0;
};

// <decimal> <op> <decimal> = <number>, whitespace tolerant. Returns nullopt
// for anything that is not a single binary operation.
std::optional<ArithmeticParse> ParseArithmetic(std::string_view text) {
  std::size_t pos = 0;
  SkipSpaces(text, pos);
  std::size_t a_begin = pos;
  if (!ScanDecimal(text, pos)) return std::nullopt;
  const Rational a = ParseDecimal(text.substr(a_begin, pos - a_begin));
  SkipSpaces(text, pos);
  if (pos >= text.size()) return std::nullopt;
  const char op = text[pos];
  if (op != '+' && op != '-' && op != '*' && op != '/') return std::nullopt;
  ++pos;
  SkipSpaces(text, pos);
  std::size_t b_begin = pos;
  if (!ScanDecimal(text, pos)) return std::nullopt;
  const Rational b = ParseDecimal(text.substr(b_begin, pos - b_begin));
  SkipSpaces(text, pos);
  if (pos >= text.size() || text[pos] != '=') return std::nullopt;
  ++pos;
  SkipSpaces(text, pos);
  ArithmeticParse out;
  out.rhs_begin = pos;
  if (!ScanDecimal(text, pos)) return std::nullopt;
  if (pos + 1 < text.size() && text[pos] == '/' && IsDigit(text[pos + 1])) {
    ++pos;
    while (pos < text.size() && IsDigit(text[pos])) ++pos;
  }
  out.rhs_end = pos;
  SkipSpaces(text, pos);
  if (pos != text.size()) return std::nullopt;
  auto rhs = TryParseNumber(text.substr(out.rhs_begin, out.rhs_end - out.rhs_begin));
  if (!rhs) return std::nullopt;
  out.rhs = *rhs;
  switch (op) {
    case '+': out.expected = a + b; break;
    case '-': out.expected = a - b; break;
    case '*': out.expected = a * b; break;
    case '/':
      if (b == 0) throw Error(ErrorCode::kDegenerateExpression, "division by zero in '" +
                                                                     std::string(text) + "'");
      out.expected = a / b;
      break;
  }
  out.lhs = a;
  return out;
}

struct Marker {
  std::size_t begin = 0;
  std::size_t end = 0;
  long index = 0;
};

std::vector<Marker> FindMarkers(std::string_view region) {
  std::vector<Marker> markers;
  constexpr std::string_view kOpen = "[Step";
  std::size_t from = 0;
  while (true) {
    const std::size_t at = region.find(kOpen, from);
    if (at == std::string_view::npos) break;
    std::size_t p = at + kOpen.size();
    const std::size_t space_begin = p;
    SkipSpaces(region, p);
    const std::size_t digits_begin = p;
    while (p < region.size() && IsDigit(region[p])) ++p;
    if (p > space_begin && p > digits_begin && p < region.size() && region[p] == ']' &&
        p - digits_begin <= 9) {
      Marker m;
      m.begin = at;
      m.end = p + 1;
      m.index = std::stol(std::string(region.substr(digits_begin, p - digits_begin)));
      markers.push_back(m);
      from = m.end;
    } else {
      from = at + 1;
    }
  }
  return markers;
}

std::optional<Rational> ParseAnswerTail(std::string_view tail) {
  tail = Trim(tail);
  if (!tail.empty() && tail.back() == '.') tail.remove_suffix(1);
  tail = Trim(tail);
  auto value = TryParseNumber(tail);
  if (!value) {
    throw Error(ErrorCode::kMalformedAnswer, "unparseable answer '" + std::string(tail) + "'");
  }
  return value;
}

std::string StepsRegionFromRaw(std::string_view raw, bool* has_answer, std::size_t* answer_at) {
  const std::size_t at = raw.rfind(kAnswerMarker);
  *has_answer = at != std::string_view::npos;
  *answer_at = at;
  return std::string(*has_answer ? raw.substr(0, at) : raw);
}

std::mt19937_64 SeededRng(std::uint64_t seed, std::string_view salt) {
  std::mt19937_64 rng(MixSeed(seed, Fnv1a64(salt)));
  return rng;
}

char DrawOp(std::mt19937_64& rng, bool final_op) {
  static constexpr char kOps[] = {'+', '-', '*', '/'};
  return kOps[UniformInt(rng, 0, final_op ? 3 : 2)];
}

}  // namespace

std::optional<Rational> TryParseNumber(std::string_view text) {
  std::size_t pos = 0;
  if (!ScanDecimal(text, pos)) return std::nullopt;
  const std::string_view head = text.substr(0, pos);
  if (pos == text.size()) return ParseDecimal(head);
  if (text[pos] != '/' || head.find('.') != std::string_view::npos) return std::nullopt;
  const std::size_t den_begin = ++pos;
  while (pos < text.size() && IsDigit(text[pos])) ++pos;
  if (pos == den_begin || pos != text.size()) return std::nullopt;
  const Rational den = ParseDecimal(text.substr(den_begin));
  if (den == 0) return std::nullopt;
  return ParseDecimal(head) / den;
}

std::string RenderRational(const Rational& value) {
  const auto num = boost::multiprecision::numerator(value);
  const auto den = boost::multiprecision::denominator(value);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

Step GuidanceStep() { return Step{0, std::string(kGuidanceStep), StepKind::kNarrative}; }

StepKind ClassifyStep(std::string_view text) {
  try {
    return ParseArithmetic(text) ? StepKind::kArithmetic : StepKind::kNarrative;
  } catch (const Error&) {
    return StepKind::kArithmetic;  // well-formed but degenerate, e.g. x/0
  }
}

std::string RenderContext(std::string_view prompt, const std::vector<Step>& prefix) {
  std::string out(prompt);
  for (const Step& step : prefix) {
    out.push_back(' ');
    if (step.index > 0) out += "[Step " + std::to_string(step.index) + "] ";
    out += step.text;
  }
  return out;
}

std::string CanonicalizeWhitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (IsSpace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::vector<Step> SegmentSteps(std::string_view raw_text, int first_index) {
  if (Trim(raw_text).empty()) throw Error(ErrorCode::kMalformedSolution, "empty solution text");
  bool has_answer = false;
  std::size_t answer_at = 0;
  const std::string region = StepsRegionFromRaw(raw_text, &has_answer, &answer_at);
  const std::vector<Marker> markers = FindMarkers(region);
  if (markers.empty()) throw Error(ErrorCode::kMalformedSolution, "no [Step i] markers");
  if (!Trim(std::string_view(region).substr(0, markers.front().begin)).empty()) {
    throw Error(ErrorCode::kMalformedSolution, "text before the first step marker");
  }
  std::vector<Step> steps;
  steps.reserve(markers.size());
  for (std::size_t i = 0; i < markers.size(); ++i) {
    const long expected = first_index + static_cast<long>(i);
    if (markers[i].index != expected) {
      throw Error(ErrorCode::kMalformedSolution, "step marker " + std::to_string(markers[i].index) +
                                                     " where " + std::to_string(expected) +
                                                     " was expected");
    }
    const std::size_t end = i + 1 < markers.size() ? markers[i + 1].begin : region.size();
    std::string text =
        CanonicalizeWhitespace(std::string_view(region).substr(markers[i].end, end - markers[i].end));
    if (has_answer && i + 1 == markers.size() && !text.empty() && text.back() == '.') {
      text.pop_back();
      while (!text.empty() && text.back() == ' ') text.pop_back();
    }
    Step step;
    step.index = static_cast<int>(expected);
    step.kind = ClassifyStep(text);
    step.text = std::move(text);
    steps.push_back(std::move(step));
  }
  return steps;
}

Solution ParseSolution(std::string_view raw_text, int first_index) {
  Solution solution;
  solution.steps = SegmentSteps(raw_text, first_index);
  solution.final_answer = ExtractFinalAnswer(raw_text);
  solution.raw_text = std::string(raw_text);
  return solution;
}

std::string RenderSolution(const std::vector<Step>& steps,
                           const std::optional<Rational>& final_answer) {
  std::string out;
  for (const Step& step : steps) {
    if (!out.empty()) out.push_back(' ');
    out += "[Step " + std::to_string(step.index) + "] " + step.text;
  }
  if (final_answer) {
    if (!out.empty()) out += ". ";
    out += std::string(kAnswerMarker) + " " + RenderRational(*final_answer) + ".";
  }
  return out;
}

std::optional<Rational> ExtractFinalAnswer(std::string_view raw_text) {
  const std::size_t at = raw_text.rfind(kAnswerMarker);
  if (at == std::string_view::npos) return std::nullopt;
  return ParseAnswerTail(raw_text.substr(at + kAnswerMarker.size()));
}

bool VerifyAnswer(const std::optional<Rational>& candidate, const Rational& gold) {
  return candidate.has_value() && *candidate == gold;
}

StepVerdict VerifyArithmeticStep(const Step& step) {
  StepVerdict verdict;
  const auto parsed = ParseArithmetic(step.text);
  if (!parsed) {
    verdict.status = StepStatus::kNonArithmetic;
    return verdict;
  }
  if (parsed->rhs == parsed->expected) {
    verdict.status = StepStatus::kCorrect;
    return verdict;
  }
  verdict.status = StepStatus::kIncorrect;
  verdict.corrected_text = step.text.substr(0, parsed->rhs_begin) +
                           RenderRational(parsed->expected) + step.text.substr(parsed->rhs_end);
  return verdict;
}

Expression ParseProblemExpression(std::string_view problem_text) {
  constexpr std::string_view kPrefix = "Compute ";
  std::string_view s = Trim(problem_text);
  if (s.substr(0, kPrefix.size()) != kPrefix || s.empty() || s.back() != '.') {
    throw Error(ErrorCode::kInvalidArgument, "not a synthetic problem: '" +
                                                 std::string(problem_text) + "'");
  }
  s = s.substr(kPrefix.size(), s.size() - kPrefix.size() - 1);
  Expression expr;
  std::size_t pos = 0;
  std::size_t opens = 0;
  while (pos < s.size() && s[pos] == '(') {
    ++opens;
    ++pos;
  }
  auto read_operand = [&]() {
    const std::size_t begin = pos;
    if (!ScanDecimal(s, pos)) {
      throw Error(ErrorCode::kInvalidArgument, "operand expected in '" + std::string(s) + "'");
    }
    expr.operands.push_back(ParseDecimal(s.substr(begin, pos - begin)));
  };
  read_operand();
  while (pos < s.size()) {
    const char op = s[pos++];
    if (op != '+' && op != '-' && op != '*' && op != '/') {
      throw Error(ErrorCode::kInvalidArgument, "operator expected in '" + std::string(s) + "'");
    }
    expr.ops.push_back(op);
    read_operand();
    if (pos >= s.size() || s[pos] != ')') {
      throw Error(ErrorCode::kInvalidArgument, "')' expected in '" + std::string(s) + "'");
    }
    ++pos;
  }
  if (expr.ops.empty() || expr.ops.size() != opens) {
    throw Error(ErrorCode::kInvalidArgument, "unbalanced expression '" + std::string(s) + "'");
  }
  return expr;
}

std::string RenderProblemText(const Expression& expr) {
  std::string out = "Compute " + std::string(expr.ops.size(), '(') + RenderRational(expr.operands[0]);
  for (std::size_t i = 0; i < expr.ops.size(); ++i) {
    out.push_back(expr.ops[i]);
    out += RenderRational(expr.operands[i + 1]);
    out.push_back(')');
  }
  out.push_back('.');
  return out;
}

Rational Evaluate(const Expression& expr) {
  Rational value = expr.operands.at(0);
  for (std::size_t i = 0; i < expr.ops.size(); ++i) {
    const Rational& x = expr.operands.at(i + 1);
    switch (expr.ops[i]) {
      case '+': value += x; break;
      case '-': value -= x; break;
      case '*': value *= x; break;
      case '/':
        if (x == 0) throw Error(ErrorCode::kDegenerateExpression, "division by zero");
        value /= x;
        break;
    }
  }
  return value;
}

Solution GoldSolution(const Expression& expr) {
  Solution solution;
  Rational value = expr.operands.at(0);
  for (std::size_t i = 0; i < expr.ops.size(); ++i) {
    Expression single{{value, expr.operands[i + 1]}, {expr.ops[i]}};
    const Rational next = Evaluate(single);
    Step step;
    step.index = static_cast<int>(i) + 1;
    step.text = RenderRational(value) + expr.ops[i] + RenderRational(expr.operands[i + 1]) + "=" +
                RenderRational(next);
    step.kind = StepKind::kArithmetic;
    solution.steps.push_back(std::move(step));
    value = next;
  }
  solution.final_answer = value;
  solution.raw_text = RenderSolution(solution.steps, solution.final_answer);
  return solution;
}

std::vector<CorpusEntry> GenSyntheticCorpus(std::uint64_t seed, int count, IntRange difficulty,
                                            IntRange operands) {
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "count must be >= 1");
  if (difficulty.lo < 1 || difficulty.hi > 8 || difficulty.lo > difficulty.hi) {
    throw Error(ErrorCode::kInvalidArgument, "difficulty range must lie within [1, 8]");
  }
  if (operands.lo < 1 || operands.lo > operands.hi) {
    throw Error(ErrorCode::kInvalidArgument, "operand range must be positive and ordered");
  }
  std::mt19937_64 rng(SplitMix64(seed));
  std::vector<CorpusEntry> corpus;
  corpus.reserve(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    const int d = static_cast<int>(UniformInt(rng, difficulty.lo, difficulty.hi));
    Expression expr;
    expr.operands.push_back(UniformInt(rng, operands.lo, operands.hi));
    for (int i = 0; i < d; ++i) {
      expr.ops.push_back(DrawOp(rng, i + 1 == d));
      expr.operands.push_back(UniformInt(rng, operands.lo, operands.hi));
    }
    CorpusEntry entry;
    entry.gold = GoldSolution(expr);
    char id[32];
    std::snprintf(id, sizeof id, "p%06d", n);
    entry.problem.id = id;
    entry.problem.text = RenderProblemText(expr);
    entry.problem.gold_answer = *entry.gold.final_answer;
    entry.problem.difficulty = d;
    corpus.push_back(std::move(entry));
  }
  return corpus;
}

Problem ComplexifyProblem(const Problem& problem, std::uint64_t seed, IntRange operands) {
  Expression expr = ParseProblemExpression(problem.text);
  // Seeded by content so identical problem texts complexify identically.
  std::mt19937_64 rng = SeededRng(seed, problem.text);
  for (Rational& operand : expr.operands) operand = UniformInt(rng, operands.lo, operands.hi);
  Problem hard;
  hard.id = problem.id + "-hard";
  hard.text = RenderProblemText(expr);
  hard.gold_answer = Evaluate(expr);
  hard.difficulty = expr.difficulty();
  return hard;
}

void WriteCorpus(const std::string& path, const std::vector<CorpusEntry>& corpus) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  for (const CorpusEntry& e : corpus) {
    json record = {{"id", e.problem.id},
                   {"text", e.problem.text},
                   {"gold_answer", RenderRational(e.problem.gold_answer)},
                   {"difficulty", e.problem.difficulty},
                   {"gold_solution", e.gold.raw_text}};
    out << record.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

std::vector<CorpusEntry> ReadCorpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::vector<CorpusEntry> corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    try {
      const json record = json::parse(line);
      CorpusEntry e;
      e.problem.id = record.at("id").get<std::string>();
      e.problem.text = record.at("text").get<std::string>();
      auto gold = TryParseNumber(record.at("gold_answer").get<std::string>());
      if (!gold) throw ParseError("bad gold_answer", line_no);
      e.problem.gold_answer = *gold;
      e.problem.difficulty = record.at("difficulty").get<int>();
      e.gold = ParseSolution(record.at("gold_solution").get<std::string>());
      corpus.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw ParseError(ex.what(), line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& ex) {
      throw ParseError(ex.what(), line_no);
    }
  }
  return corpus;
}

}  // namespace mdpo
