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
#include "mdpo/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <random>
#include <sstream>

#include "mdpo/digest.hpp"
#include "mdpo/error.hpp"
#include "mdpo/random.hpp"

namespace mdpo {
namespace {

using json = nlohmann::json;

std::string UtcTimestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json CountsJson(const AccuracyCounts& c) {
  return {{"correct", c.correct}, {"total", c.total}, {"accuracy", c.rate()}};
}

json CountsJson(const PairCounts& c) {
  return {{"wins", c.wins},
          {"margin_hits", c.margin_hits},
          {"total", c.total},
          {"excluded", c.excluded},
          {"win_rate", c.win_rate()},
          {"margin_satisfaction", c.margin_satisfaction()}};
}

std::string PairsDigest(const std::vector<PreferencePair>& pairs) {
  std::string blob;
  for (const PreferencePair& p : pairs) {
    blob += json{p.id, p.prompt, p.prefix_steps, p.chosen, p.rejected}.dump();
    blob.push_back('\n');
  }
  return Sha256Hex(blob);
}

std::string ProblemsDigest(const std::vector<Problem>& problems) {
  std::string blob;
  for (const Problem& p : problems) blob += p.id + "\t" + p.text + "\n";
  return Sha256Hex(blob);
}

std::string Percent(double rate) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%6.2f%%", 100.0 * rate);
  return buf;
}

double UniformReal(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * UniformUnit(rng);
}

std::vector<double> RandomLogprobs(std::mt19937_64& rng, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (double& v : out) v = UniformReal(rng, -3.0, -0.01);
  return out;
}

std::vector<int> RandomTokens(std::mt19937_64& rng, int n, int vocab) {
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int& t : out) t = static_cast<int>(UniformInt(rng, 0, vocab - 1));
  return out;
}

void Record(GradCheckSummary& summary, const GradCheckReport& report) {
  ++summary.checks;
  if (!report.passed) ++summary.failures;
  summary.max_relative_error = std::max(summary.max_relative_error, report.max_relative_error);
}

// Loss on token log-probabilities laid out as [chosen..., rejected...].
GradCheckReport CheckTokenLevel(std::mt19937_64& rng, LossKind kind, double h, double tol) {
  const int nw = static_cast<int>(UniformInt(rng, 1, 24));
  const int nl = static_cast<int>(UniformInt(rng, 1, 24));
  const double beta = UniformReal(rng, 0.1, 1.0);
  const double gamma = UniformReal(rng, 0.0, 1.0);
  std::vector<double> point = RandomLogprobs(rng, nw);
  const std::vector<double> rejected = RandomLogprobs(rng, nl);
  point.insert(point.end(), rejected.begin(), rejected.end());
  const ScoredSequence ref_w{RandomLogprobs(rng, nw)};
  const ScoredSequence ref_l{RandomLogprobs(rng, nl)};
  DifferentiableFn fn = [&](std::span<const double> x, std::vector<double>* grad) {
    const ScoredSequence w{{x.begin(), x.begin() + nw}};
    const ScoredSequence l{{x.begin() + nw, x.end()}};
    const LossOutput out = kind == LossKind::kMdpo ? MdpoLoss(w, l, LossConfig{beta, gamma})
                                                   : DpoLoss(w, l, DpoConfig{beta, ref_w, ref_l});
    if (grad != nullptr) {
      grad->assign(out.grad_w.begin(), out.grad_w.end());
      grad->insert(grad->end(), out.grad_l.begin(), out.grad_l.end());
    }
    return out.loss;
  };
  return FiniteDifferenceCheck(fn, point, h, tol);
}

// Loss as a function of every table entry of a small random policy.
GradCheckReport CheckPolicyLevel(std::mt19937_64& rng, LossKind kind, double h, double tol) {
  const int order = static_cast<int>(UniformInt(rng, 1, 3));
  const bool backoff = UniformInt(rng, 0, 1) == 1;
  const Vocabulary vocab;
  const int v = static_cast<int>(vocab.size());
  const std::vector<int> context = RandomTokens(rng, static_cast<int>(UniformInt(rng, 1, 8)), v);
  const std::vector<int> chosen = RandomTokens(rng, static_cast<int>(UniformInt(rng, 1, 10)), v);
  const std::vector<int> rejected = RandomTokens(rng, static_cast<int>(UniformInt(rng, 1, 10)), v);
  const std::vector<TokenizedExample> examples = {{context, chosen}, {context, rejected}};
  PolicyParams base = SftFit(examples, order, 1.0, backoff);
  for (std::size_t r = 0; r < base.num_rows(); ++r) {
    for (double& value : base.row(r)) value += UniformReal(rng, -1.0, 1.0);
  }
  const double beta = UniformReal(rng, 0.1, 1.0);
  const double gamma = UniformReal(rng, 0.0, 1.0);
  // A reference close to the policy, as after a warm start.
  auto near = [&](const std::vector<int>& completion) {
    ScoredSequence s = Score(base, context, completion);
    for (double& v : s.token_logprobs) v += UniformReal(rng, -0.5, 0.5);
    return s;
  };
  const ScoredSequence ref_w = near(chosen);
  const ScoredSequence ref_l = near(rejected);
  const std::size_t width = vocab.size();
  std::vector<double> point;
  for (std::size_t r = 0; r < base.num_rows(); ++r) {
    const auto row = std::as_const(base).row(r);
    point.insert(point.end(), row.begin(), row.end());
  }
  PolicyParams work = base;
  DifferentiableFn fn = [&](std::span<const double> x, std::vector<double>* grad) {
    for (std::size_t r = 0; r < work.num_rows(); ++r) {
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(r * width), width, work.row(r).begin());
    }
    ScoreDetail dw;
    ScoreDetail dl;
    const ScoredSequence w = Score(work, context, chosen, &dw);
    const ScoredSequence l = Score(work, context, rejected, &dl);
    const LossOutput out = kind == LossKind::kMdpo ? MdpoLoss(w, l, LossConfig{beta, gamma})
                                                   : DpoLoss(w, l, DpoConfig{beta, ref_w, ref_l});
    if (grad != nullptr) {
      ParamGrad g(width);
      AccumulateParamGrads(work, dw, out.grad_w, g);
      AccumulateParamGrads(work, dl, out.grad_l, g);
      grad->assign(x.size(), 0.0);
      for (std::size_t r = 0; r < work.num_rows(); ++r) {
        const auto row = g.Find(r);
        if (!row.empty()) {
          std::copy(row.begin(), row.end(), grad->begin() + static_cast<std::ptrdiff_t>(r * width));
        }
      }
    }
    return out.loss;
  };
  return FiniteDifferenceCheck(fn, point, h, tol);
}

}  // namespace

const char* SplitName(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kPairEval:
      return "pair-eval";
    case Split::kAccuracyEval:
      return "accuracy-eval";
  }
  return "?";
}

Split SplitOf(std::string_view problem_id) {
  constexpr std::string_view kHardSuffix = "-hard";
  if (problem_id.size() >= kHardSuffix.size() && problem_id.ends_with(kHardSuffix)) {
    problem_id.remove_suffix(kHardSuffix.size());
  }
  const std::string hex = Sha256Hex(problem_id).substr(0, 8);
  const unsigned long bucket = std::stoul(hex, nullptr, 16) % 10;
  if (bucket < 8) return Split::kTrain;
  return bucket == 8 ? Split::kPairEval : Split::kAccuracyEval;
}

std::vector<TokenizedExample> SftExamples(const Vocabulary& vocab,
                                          const std::vector<CorpusEntry>& corpus) {
  std::vector<TokenizedExample> out;
  out.reserve(corpus.size());
  for (const CorpusEntry& e : corpus) {
    TokenizedExample ex;
    ex.context = vocab.Encode(RenderContext(e.problem.text, {GuidanceStep()}));
    ex.completion = vocab.Encode(" " + RenderSolution(e.gold.steps, e.gold.final_answer));
    ex.completion.push_back(vocab.terminator());
    out.push_back(std::move(ex));
  }
  return out;
}

AccuracyCounts Accuracy(const PolicyParams& params, const std::vector<Problem>& problems,
                        int max_tokens) {
  if (problems.empty()) throw Error(ErrorCode::kInvalidArgument, "no problems to evaluate");
  AccuracyCounts counts;
  SamplingConfig sampling;
  sampling.temperature = 0.0;
  sampling.max_tokens = max_tokens;
  for (const Problem& p : problems) {
    ++counts.total;
    try {
      const std::vector<int> context =
          params.vocab.Encode(RenderContext(p.text, {GuidanceStep()}));
      const std::string text = params.vocab.Decode(Sample(params, context, sampling));
      if (VerifyAnswer(ExtractFinalAnswer(text), p.gold_answer)) ++counts.correct;
    } catch (const Error&) {
      // counted as incorrect
    }
  }
  return counts;
}

PairCounts CountFromAverages(const std::vector<std::pair<double, double>>& averages,
                             const LossConfig& margin_cfg) {
  PairCounts counts;
  for (const auto& [w, l] : averages) {
    ++counts.total;
    if (w > l) ++counts.wins;
    if (margin_cfg.beta * w - margin_cfg.beta * l > margin_cfg.gamma) ++counts.margin_hits;
  }
  return counts;
}

PairCounts EvaluatePairs(const PolicyParams& params, const std::vector<PreferencePair>& pairs,
                         const LossConfig& margin_cfg) {
  if (pairs.empty()) throw Error(ErrorCode::kInvalidArgument, "no pairs to evaluate");
  std::vector<std::pair<double, double>> averages;
  int excluded = 0;
  for (const PreferencePair& p : pairs) {
    try {
      const EncodedPair e = EncodePair(params.vocab, p);
      averages.emplace_back(AvgLoglik(Score(params, e.context, e.chosen).token_logprobs),
                            AvgLoglik(Score(params, e.context, e.rejected).token_logprobs));
    } catch (const Error& ex) {
      if (ex.code() != ErrorCode::kUnknownToken) throw;
      ++excluded;
    }
  }
  PairCounts counts = CountFromAverages(averages, margin_cfg);
  counts.excluded = excluded;
  return counts;
}

json EvalReport::ToJson() const {
  json by_gran = json::object();
  for (const auto& [name, c] : pairs_by_granularity) by_gran[name] = CountsJson(c);
  return {{"accuracy", normal.rate()},
          {"n_problems", normal.total},
          {"win_rate", pairs.win_rate()},
          {"margin_satisfaction", pairs.margin_satisfaction()},
          {"splits", {{"normal", CountsJson(normal)}, {"hard", CountsJson(hard)}}},
          {"pairs", CountsJson(pairs)},
          {"pairs_by_granularity", by_gran},
          {"beta", margin_cfg.beta},
          {"gamma", margin_cfg.gamma},
          {"config_digest", config_digest},
          {"timestamp", timestamp}};
}

std::string EvalReport::ToText() const {
  std::ostringstream out;
  out << "config " << config_digest << "\n";
  out << "generated " << timestamp << "\n";
  out << "accuracy normal " << Percent(normal.rate()) << "  (" << normal.correct << "/"
      << normal.total << ")\n";
  if (hard.total > 0) {
    out << "accuracy hard   " << Percent(hard.rate()) << "  (" << hard.correct << "/" << hard.total
        << ")\n";
  }
  out << "win rate        " << Percent(pairs.win_rate()) << "  (" << pairs.wins << "/"
      << pairs.total << ")\n";
  out << "margin > " << margin_cfg.gamma << "    " << Percent(pairs.margin_satisfaction()) << "  ("
      << pairs.margin_hits << "/" << pairs.total << ")\n";
  for (const auto& [name, c] : pairs_by_granularity) {
    out << "  " << name << " win rate " << Percent(c.win_rate()) << "  (" << c.wins << "/"
        << c.total << ")\n";
  }
  if (pairs.excluded > 0) out << "excluded pairs " << pairs.excluded << "\n";
  return out.str();
}

EvalReport Evaluate(const PolicyParams& params, const std::vector<Problem>& problems,
                    const std::vector<PreferencePair>& pairs, const EvalOptions& options) {
  EvalReport report;
  report.margin_cfg = options.margin_cfg;
  report.timestamp = UtcTimestamp();
  if (!problems.empty()) {
    report.normal = Accuracy(params, problems, options.max_tokens);
    if (options.include_hard) {
      std::vector<Problem> hard;
      hard.reserve(problems.size());
      for (const Problem& p : problems) hard.push_back(ComplexifyProblem(p, options.hard_seed));
      report.hard = Accuracy(params, hard, options.max_tokens);
    }
  }
  if (!pairs.empty()) {
    report.pairs = EvaluatePairs(params, pairs, options.margin_cfg);
    std::map<std::string, std::vector<PreferencePair>> grouped;
    for (const PreferencePair& p : pairs) grouped[GranularityName(p.granularity)].push_back(p);
    for (const auto& [name, group] : grouped) {
      report.pairs_by_granularity[name] = EvaluatePairs(params, group, options.margin_cfg);
    }
  }
  const json options_json = {{"max_tokens", options.max_tokens},
                             {"beta", options.margin_cfg.beta},
                             {"gamma", options.margin_cfg.gamma},
                             {"include_hard", options.include_hard},
                             {"hard_seed", options.hard_seed}};
  report.config_digest = Sha256Hex(Sha256Hex(SerializeParams(params)) + ProblemsDigest(problems) +
                                   PairsDigest(pairs) + options_json.dump());
  return report;
}

json Comparison::ToJson() const {
  json rows_json = json::array();
  for (const MethodResult& r : rows) {
    json row = {{"name", r.name}, {"ok", r.ok}};
    if (r.ok) {
      row["report"] = r.report.ToJson();
      row["params_digest"] = r.params_digest;
      json epochs = json::array();
      for (const EpochMetrics& m : r.metrics.epochs) epochs.push_back(m.ToJson());
      row["epochs"] = epochs;
    } else {
      row["error"] = r.error;
    }
    rows_json.push_back(row);
  }
  return {{"warm_start_digest", warm_start_digest},
          {"pairs_digest", pairs_digest},
          {"eval_digest", eval_digest},
          {"methods", rows_json}};
}

std::string Comparison::ToText() const {
  std::ostringstream out;
  out << "warm start " << warm_start_digest << "\n";
  out << "pairs      " << pairs_digest << "\n";
  out << "eval       " << eval_digest << "\n";
  out << "rank  method            win rate    margin      accuracy    hard\n";
  int rank = 0;
  for (const MethodResult& r : rows) {
    char line[256];
    if (r.ok) {
      std::snprintf(line, sizeof(line), "%-5d %-16s  %s    %s    %s    %s\n", ++rank,
                    r.name.c_str(), Percent(r.report.pairs.win_rate()).c_str(),
                    Percent(r.report.pairs.margin_satisfaction()).c_str(),
                    Percent(r.report.normal.rate()).c_str(), Percent(r.report.hard.rate()).c_str());
    } else {
      std::snprintf(line, sizeof(line), "-     %-16s  failed: %s\n", r.name.c_str(),
                    r.error.c_str());
    }
    out << line;
  }
  return out.str();
}

Comparison CompareMethods(const PolicyParams& warm_start,
                          const std::vector<PreferencePair>& train_pairs,
                          const std::vector<Problem>& eval_problems,
                          const std::vector<PreferencePair>& eval_pairs,
                          const std::vector<MethodSpec>& methods, const EvalOptions& options) {
  if (methods.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "comparison needs at least two methods");
  }
  Comparison cmp;
  cmp.warm_start_digest = Sha256Hex(SerializeParams(warm_start));
  cmp.pairs_digest = PairsDigest(train_pairs);
  cmp.eval_digest = Sha256Hex(ProblemsDigest(eval_problems) + PairsDigest(eval_pairs));
  for (const MethodSpec& m : methods) {
    MethodResult row;
    row.name = m.name;
    try {
      std::vector<PreferencePair> pairs;
      for (const PreferencePair& p : train_pairs) {
        if (m.granularities.empty() ||
            std::find(m.granularities.begin(), m.granularities.end(), p.granularity) !=
                m.granularities.end()) {
          pairs.push_back(p);
        }
      }
      TrainResult trained = Train(warm_start, pairs, m.config, eval_pairs);
      row.metrics = std::move(trained.metrics);
      row.report = Evaluate(trained.params, eval_problems, eval_pairs, options);
      row.params_digest = Sha256Hex(SerializeParams(trained.params));
      row.ok = true;
    } catch (const std::exception& ex) {
      row.error = ex.what();
    }
    cmp.rows.push_back(std::move(row));
  }
  std::stable_sort(cmp.rows.begin(), cmp.rows.end(), [](const MethodResult& a, const MethodResult& b) {
    if (a.ok != b.ok) return a.ok;
    if (!a.ok) return false;
    if (a.report.pairs.wins * b.report.pairs.total != b.report.pairs.wins * a.report.pairs.total) {
      return a.report.pairs.win_rate() > b.report.pairs.win_rate();
    }
    return a.report.normal.rate() > b.report.normal.rate();
  });
  return cmp;
}

GradCheckSummary RunGradCheck(int trials, std::uint64_t seed, double h, double tolerance) {
  if (trials < 1) throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  GradCheckSummary summary;
  summary.h = h;
  summary.tolerance = tolerance;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(MixSeed(seed, static_cast<std::uint64_t>(t)));
    ++summary.trials;
    for (LossKind kind : {LossKind::kMdpo, LossKind::kDpo}) {
      Record(summary, CheckTokenLevel(rng, kind, h, tolerance));
      Record(summary, CheckPolicyLevel(rng, kind, h, tolerance));
    }
  }
  return summary;
}

}  // namespace mdpo
