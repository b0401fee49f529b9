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
#include "mdpo/pairbuilder.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <tuple>

#include "mdpo/error.hpp"

namespace mdpo {
namespace {

using json = nlohmann::json;

bool IsCorrect(const Solution& s, const Problem& p) { return VerifyAnswer(s.final_answer, p.gold_answer); }

std::string TraceText(const Solution& s) {
  if (s.steps.empty() && s.final_answer) return RenderSolution({}, s.final_answer);
  return CanonicalizeWhitespace(s.raw_text);
}

std::vector<std::string> StepTexts(const std::vector<Step>& steps) {
  std::vector<std::string> out;
  out.reserve(steps.size());
  for (const Step& s : steps) out.push_back(s.text);
  return out;
}

std::vector<Step> Tail(const Solution& s, std::size_t from) {
  return std::vector<Step>(s.steps.begin() + static_cast<std::ptrdiff_t>(from), s.steps.end());
}

PreferencePair MakePair(const Problem& problem, Granularity g, const std::vector<Step>& prefix,
                        std::string chosen, std::string rejected) {
  PreferencePair pair;
  pair.granularity = g;
  pair.problem_id = problem.id;
  pair.prompt = problem.text;
  pair.prefix_steps = StepTexts(prefix);
  pair.chosen = std::move(chosen);
  pair.rejected = std::move(rejected);
  return pair;
}

json StatsJson(const std::vector<WindowStats>& stats) {
  json out = json::array();
  for (const WindowStats& s : stats) {
    out.push_back({{"window", s.window_index}, {"n_samples", s.n_samples}, {"n_wrong", s.n_wrong},
                   {"error_rate", s.error_rate}});
  }
  return out;
}

WindowStats StatsFor(int window, const std::vector<Solution>& paths, const Problem& problem) {
  WindowStats stats;
  stats.window_index = window;
  stats.n_samples = static_cast<int>(paths.size());
  for (const Solution& s : paths) stats.n_wrong += IsCorrect(s, problem) ? 0 : 1;
  stats.error_rate = static_cast<double>(stats.n_wrong) / static_cast<double>(stats.n_samples);
  return stats;
}

// Outcome of one builder attempt; reason names why no pair was produced.
struct Attempt {
  std::optional<PreferencePair> pair;
  std::string reason;
};

// First correct continuation among the already-drawn paths, then among fresh
// sample indices up to 4k.
std::optional<Solution> FindCorrectContinuation(Generator& gen, const Problem& problem,
                                                const std::vector<Step>& prefix,
                                                const SamplingConfig& sampling, int k,
                                                const std::vector<Solution>& drawn) {
  for (const Solution& s : drawn) {
    if (IsCorrect(s, problem)) return s;
  }
  for (int idx = static_cast<int>(drawn.size()); idx < 4 * k; ++idx) {
    Solution s = SampleOnePath(gen, problem.text, prefix, sampling, idx);
    if (IsCorrect(s, problem)) return s;
  }
  return std::nullopt;
}

Attempt TryInfer2Infer(Generator& gen, const Problem& problem, const Solution& faulty,
                       const SamplingConfig& sampling, int k) {
  if (faulty.steps.empty()) return {std::nullopt, "faulty_without_steps"};
  if (IsCorrect(faulty, problem)) return {std::nullopt, "faulty_is_correct"};
  const int windows = static_cast<int>(faulty.steps.size());
  if (windows < 2) return {std::nullopt, "insufficient_windows"};
  // Windows are evaluated lazily: only the first strict increase matters.
  std::vector<WindowStats> stats;
  std::vector<Solution> previous_paths;
  for (int i = 0; i < windows; ++i) {
    std::vector<Solution> paths = SamplePaths(gen, problem.text, WindowPrefix(faulty, i), sampling, k);
    stats.push_back(StatsFor(i, paths, problem));
    if (i > 0 && stats[i].error_rate > stats[i - 1].error_rate) {
      const std::vector<Step> prefix = WindowPrefix(faulty, i - 1);
      auto win = FindCorrectContinuation(gen, problem, prefix, sampling, k, previous_paths);
      if (!win) return {std::nullopt, "no_correct_continuation"};
      std::string chosen = RenderSolution(win->steps, win->final_answer);
      std::string rejected = RenderSolution(Tail(faulty, static_cast<std::size_t>(i - 1)),
                                            faulty.final_answer);
      if (chosen == rejected) return {std::nullopt, "chosen_equals_rejected"};
      PreferencePair pair =
          MakePair(problem, Granularity::kInfer2Infer, prefix, std::move(chosen), std::move(rejected));
      pair.meta = {{"window_index", i},
                   {"error_rate", stats[i].error_rate},
                   {"error_rate_prev", stats[i - 1].error_rate},
                   {"k", k},
                   {"seed", sampling.seed},
                   {"windows", StatsJson(stats)}};
      return {std::move(pair), ""};
    }
    previous_paths = std::move(paths);
  }
  return {std::nullopt, "no_unreliable_inference"};
}

Attempt TryStep2Step(const Problem& problem, const Solution& faulty, Generator& gen,
                     const SamplingConfig& sampling, int k) {
  for (std::size_t j = 0; j < faulty.steps.size(); ++j) {
    StepVerdict verdict;
    try {
      verdict = VerifyArithmeticStep(faulty.steps[j]);
    } catch (const Error& ex) {
      if (ex.code() == ErrorCode::kDegenerateExpression) return {std::nullopt, "degenerate_step"};
      throw;
    }
    if (verdict.status != StepStatus::kIncorrect) continue;

    Step corrected = faulty.steps[j];
    corrected.text = *verdict.corrected_text;
    const std::vector<Step> prefix = WindowPrefix(faulty, static_cast<int>(j));
    std::string chosen;
    const auto rhs_at = corrected.text.rfind('=');
    const auto value = TryParseNumber(CanonicalizeWhitespace(corrected.text.substr(rhs_at + 1)));
    if (j + 1 == faulty.steps.size() && value && *value == problem.gold_answer) {
      chosen = RenderSolution({corrected}, value);
    } else {
      std::vector<Step> context = prefix;
      context.push_back(corrected);
      auto cont = FindCorrectContinuation(gen, problem, context, sampling, k, {});
      if (!cont) return {std::nullopt, "no_verified_continuation"};
      std::vector<Step> steps = {corrected};
      steps.insert(steps.end(), cont->steps.begin(), cont->steps.end());
      chosen = RenderSolution(steps, cont->final_answer);
    }
    std::string rejected = RenderSolution(Tail(faulty, j), faulty.final_answer);
    if (chosen == rejected) return {std::nullopt, "chosen_equals_rejected"};
    PreferencePair pair =
        MakePair(problem, Granularity::kStep2Step, prefix, std::move(chosen), std::move(rejected));
    pair.meta = {{"step_index", faulty.steps[j].index},
                 {"original_step", faulty.steps[j].text},
                 {"corrected_step", corrected.text},
                 {"seed", sampling.seed}};
    return {std::move(pair), ""};
  }
  return {std::nullopt, "no_calculation_error"};
}

std::vector<const Solution*> DistinctFaulty(const std::vector<Solution>& traces,
                                            const Problem& problem) {
  std::vector<const Solution*> out;
  std::set<std::string> seen;
  for (const Solution& s : traces) {
    if (IsCorrect(s, problem) || s.steps.empty()) continue;
    if (seen.insert(TraceText(s)).second) out.push_back(&s);
  }
  return out;
}

}  // namespace

const char* GranularityName(Granularity g) {
  switch (g) {
    case Granularity::kSol2Sol: return "sol2sol";
    case Granularity::kInfer2Infer: return "infer2infer";
    case Granularity::kStep2Step: return "step2step";
  }
  return "unknown";
}

Granularity ParseGranularity(std::string_view name) {
  if (name == "sol2sol") return Granularity::kSol2Sol;
  if (name == "infer2infer") return Granularity::kInfer2Infer;
  if (name == "step2step") return Granularity::kStep2Step;
  throw Error(ErrorCode::kInvalidArgument, "unknown granularity '" + std::string(name) + "'");
}

std::vector<Step> PreferencePair::PrefixAsSteps() const {
  std::vector<Step> steps;
  for (std::size_t i = 0; i < prefix_steps.size(); ++i) {
    steps.push_back({static_cast<int>(i), prefix_steps[i], ClassifyStep(prefix_steps[i])});
  }
  return steps;
}

std::vector<Step> WindowPrefix(const Solution& solution, int i) {
  std::vector<Step> prefix = {GuidanceStep()};
  for (int j = 0; j < i && j < static_cast<int>(solution.steps.size()); ++j) {
    prefix.push_back(solution.steps[static_cast<std::size_t>(j)]);
  }
  return prefix;
}

std::vector<PreferencePair> BuildSol2Sol(const Problem& problem,
                                         const std::vector<Solution>& traces, int max_pairs) {
  std::vector<std::size_t> correct;
  std::vector<std::size_t> incorrect;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    (IsCorrect(traces[i], problem) ? correct : incorrect).push_back(i);
  }
  std::vector<PreferencePair> pairs;
  if (correct.empty() || incorrect.empty()) return pairs;
  std::set<std::pair<std::string, std::string>> seen;
  // Each incorrect trace is paired with the next correct trace in rotation.
  for (std::size_t j = 0; j < incorrect.size() && static_cast<int>(pairs.size()) < max_pairs; ++j) {
    const Solution& lose = traces[incorrect[j]];
    const std::size_t w = correct[j % correct.size()];
    const Solution& win = traces[w];
    std::string chosen = RenderSolution(win.steps, win.final_answer);
    std::string rejected = TraceText(lose);
    if (chosen == rejected || !seen.emplace(chosen, rejected).second) continue;
    PreferencePair pair = MakePair(problem, Granularity::kSol2Sol, {GuidanceStep()},
                                   std::move(chosen), std::move(rejected));
    pair.meta = {{"chosen_trace", w},
                 {"rejected_trace", incorrect[j]},
                 {"n_correct", correct.size()},
                 {"n_incorrect", incorrect.size()}};
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<WindowStats> WindowErrorRates(Generator& gen, const Problem& problem,
                                          const Solution& faulty, const SamplingConfig& sampling,
                                          int k) {
  if (faulty.steps.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "faulty solution has no steps");
  }
  std::vector<WindowStats> stats;
  for (int i = 0; i < static_cast<int>(faulty.steps.size()); ++i) {
    stats.push_back(StatsFor(i, SamplePaths(gen, problem.text, WindowPrefix(faulty, i), sampling, k),
                             problem));
  }
  return stats;
}

std::optional<int> FindUnreliableInference(const std::vector<WindowStats>& stats) {
  if (stats.size() < 2) {
    throw Error(ErrorCode::kInsufficientWindows, "need at least two windows");
  }
  for (std::size_t i = 1; i < stats.size(); ++i) {
    if (stats[i].error_rate > stats[i - 1].error_rate) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::optional<PreferencePair> BuildInfer2Infer(Generator& gen, const Problem& problem,
                                               const Solution& faulty,
                                               const SamplingConfig& sampling, int k) {
  return TryInfer2Infer(gen, problem, faulty, sampling, k).pair;
}

std::optional<PreferencePair> BuildStep2Step(const Problem& problem, const Solution& faulty,
                                             Generator& gen, const SamplingConfig& sampling,
                                             int k) {
  return TryStep2Step(problem, faulty, gen, sampling, k).pair;
}

json BuildReport::ToJson() const {
  return {{"pairs_per_granularity", pairs_per_granularity},
          {"rejection_reasons", rejection_reasons},
          {"problem_errors", problem_errors},
          {"generator_calls", generator_calls},
          {"problems", problems},
          {"hard_problems", hard_problems}};
}

BuildResult BuildDataset(const std::vector<Problem>& problems, Generator& gen,
                         const BuildConfig& config) {
  if (problems.empty()) throw Error(ErrorCode::kInvalidArgument, "empty corpus");
  if (config.k < 2) throw Error(ErrorCode::kInvalidArgument, "k must be >= 2");
  auto enabled = [&](Granularity g) {
    return std::find(config.granularities.begin(), config.granularities.end(), g) !=
           config.granularities.end();
  };
  const SamplingConfig sampling{config.temperature, config.seed, config.max_tokens};
  const std::uint64_t calls_before = gen.calls();
  BuildResult result;
  BuildReport& report = result.report;
  for (const char* g : {"sol2sol", "infer2infer", "step2step"}) report.pairs_per_granularity[g] = 0;

  std::vector<PreferencePair> pairs;
  auto add_all = [&](const Problem& problem, Granularity g, std::vector<PreferencePair> batch) {
    int index = 0;
    for (PreferencePair& p : batch) {
      p.id = problem.id + "-" + GranularityName(g) + "-" + std::to_string(index++);
      pairs.push_back(std::move(p));
    }
  };
  auto reject = [&](const std::string& reason) { ++report.rejection_reasons[reason]; };

  auto step2step_over = [&](const Problem& problem, const std::vector<const Solution*>& faulty) {
    std::vector<PreferencePair> batch;
    std::set<std::pair<std::string, std::string>> seen;
    for (const Solution* f : faulty) {
      if (static_cast<int>(batch.size()) >= config.max_pairs_per_problem) break;
      Attempt a = TryStep2Step(problem, *f, gen, sampling, config.k);
      if (!a.pair) {
        reject("step2step:" + a.reason);
      } else if (seen.emplace(a.pair->chosen, a.pair->rejected).second) {
        batch.push_back(std::move(*a.pair));
      }
    }
    add_all(problem, Granularity::kStep2Step, std::move(batch));
  };

  for (const Problem& problem : problems) {
    ++report.problems;
    try {
      const std::vector<Solution> traces =
          SamplePaths(gen, problem.text, {GuidanceStep()}, sampling, config.k);
      const bool any_correct = std::any_of(traces.begin(), traces.end(),
                                           [&](const Solution& s) { return IsCorrect(s, problem); });
      const bool any_wrong = std::any_of(traces.begin(), traces.end(),
                                         [&](const Solution& s) { return !IsCorrect(s, problem); });
      if (!any_correct || !any_wrong) {
        reject(any_correct ? "all_traces_correct" : "no_correct_trace");
      } else {
        if (enabled(Granularity::kSol2Sol)) {
          add_all(problem, Granularity::kSol2Sol,
                  BuildSol2Sol(problem, traces, config.max_pairs_per_problem));
        }
        const std::vector<const Solution*> faulty = DistinctFaulty(traces, problem);
        if (enabled(Granularity::kInfer2Infer)) {
          std::vector<PreferencePair> batch;
          for (const Solution* f : faulty) {
            if (static_cast<int>(batch.size()) >= config.max_pairs_per_problem) break;
            Attempt a = TryInfer2Infer(gen, problem, *f, sampling, config.k);
            if (a.pair) {
              batch.push_back(std::move(*a.pair));
            } else {
              reject("infer2infer:" + a.reason);
            }
          }
          add_all(problem, Granularity::kInfer2Infer, std::move(batch));
        }
        if (enabled(Granularity::kStep2Step)) step2step_over(problem, faulty);
      }
      if (enabled(Granularity::kStep2Step) && config.complexify) {
        const Problem hard = ComplexifyProblem(problem, config.seed);
        ++report.hard_problems;
        const std::vector<Solution> hard_traces =
            SamplePaths(gen, hard.text, {GuidanceStep()}, sampling, config.k);
        step2step_over(hard, DistinctFaulty(hard_traces, hard));
      }
    } catch (const Error& ex) {
      if (ex.code() != ErrorCode::kGenerator && ex.code() != ErrorCode::kCacheMiss &&
          ex.code() != ErrorCode::kUnknownToken && ex.code() != ErrorCode::kParse &&
          ex.code() != ErrorCode::kIo) {
        throw;
      }
      report.problem_errors.push_back(problem.id + ": " + ex.what());
      reject("problem_error");
    }
  }

  std::stable_sort(pairs.begin(), pairs.end(), [](const PreferencePair& a, const PreferencePair& b) {
    return std::tie(a.problem_id, a.granularity) < std::tie(b.problem_id, b.granularity);
  });
  if (config.target_pairs > 0 && static_cast<int>(pairs.size()) > config.target_pairs) {
    pairs.resize(static_cast<std::size_t>(config.target_pairs));
  }
  for (const PreferencePair& p : pairs) ++report.pairs_per_granularity[GranularityName(p.granularity)];
  report.generator_calls = gen.calls() - calls_before;
  result.pairs = std::move(pairs);
  return result;
}

void WritePairs(const std::string& path, const std::vector<PreferencePair>& pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  for (const PreferencePair& p : pairs) {
    json record = {{"id", p.id},
                   {"granularity", GranularityName(p.granularity)},
                   {"problem_id", p.problem_id},
                   {"prompt", p.prompt},
                   {"prefix_steps", p.prefix_steps},
                   {"chosen", p.chosen},
                   {"rejected", p.rejected},
                   {"meta", p.meta}};
    out << record.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

std::vector<PreferencePair> ReadPairs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  static const std::set<std::string> kKnown = {"id",     "granularity", "problem_id", "prompt",
                                               "prefix_steps", "chosen", "rejected",   "meta"};
  std::vector<PreferencePair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json record = json::parse(line);
      PreferencePair p;
      p.id = record.at("id").get<std::string>();
      p.granularity = ParseGranularity(record.at("granularity").get<std::string>());
      p.problem_id = record.at("problem_id").get<std::string>();
      p.prompt = record.at("prompt").get<std::string>();
      p.prefix_steps = record.at("prefix_steps").get<std::vector<std::string>>();
      p.chosen = record.at("chosen").get<std::string>();
      p.rejected = record.at("rejected").get<std::string>();
      if (record.contains("meta")) p.meta = record.at("meta");
      if (!p.meta.is_object()) throw ParseError("meta must be an object", line_no);
      for (const auto& [key, value] : record.items()) {
        if (!kKnown.count(key)) p.meta[key] = value;
      }
      pairs.push_back(std::move(p));
    } catch (const json::exception& ex) {
      throw ParseError(ex.what(), line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& ex) {
      throw ParseError(ex.what(), line_no);
    }
  }
  return pairs;
}

}  // namespace mdpo
