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
#include "mdpo/mdpo.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdpo/corpus.hpp"
#include "mdpo/digest.hpp"
#include "mdpo/error.hpp"
#include "mdpo/evalbench.hpp"
#include "mdpo/generator.hpp"
#include "mdpo/pairbuilder.hpp"
#include "mdpo/policy.hpp"
#include "mdpo/rewards.hpp"
#include "mdpo/trainer.hpp"

struct mdpo_corpus {
  std::vector<mdpo::CorpusEntry> entries;
};

struct mdpo_policy {
  mdpo::PolicyParams params;
};

struct mdpo_pairs {
  std::vector<mdpo::PreferencePair> pairs;
};

namespace {

thread_local std::string g_last_error;

mdpo_status StatusOf(mdpo::ErrorCode code) {
  using mdpo::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return MDPO_ERR_INVALID_ARGUMENT;
    case ErrorCode::kMalformedSolution:
      return MDPO_ERR_MALFORMED_SOLUTION;
    case ErrorCode::kMalformedAnswer:
      return MDPO_ERR_MALFORMED_ANSWER;
    case ErrorCode::kDegenerateExpression:
      return MDPO_ERR_DEGENERATE_EXPRESSION;
    case ErrorCode::kEmptySequence:
      return MDPO_ERR_EMPTY_SEQUENCE;
    case ErrorCode::kShapeMismatch:
      return MDPO_ERR_SHAPE_MISMATCH;
    case ErrorCode::kUnknownToken:
      return MDPO_ERR_UNKNOWN_TOKEN;
    case ErrorCode::kInsufficientWindows:
      return MDPO_ERR_INSUFFICIENT_WINDOWS;
    case ErrorCode::kGenerator:
      return MDPO_ERR_GENERATOR;
    case ErrorCode::kCacheMiss:
      return MDPO_ERR_CACHE_MISS;
    case ErrorCode::kParse:
      return MDPO_ERR_PARSE;
    case ErrorCode::kIo:
      return MDPO_ERR_IO;
    case ErrorCode::kConfigMismatch:
      return MDPO_ERR_CONFIG_MISMATCH;
    case ErrorCode::kSkippedBatch:
      return MDPO_ERR_SKIPPED_BATCH;
  }
  return MDPO_ERR_INTERNAL;
}

template <typename F>
mdpo_status Guard(F&& body) {
  try {
    body();
    g_last_error.clear();
    return MDPO_OK;
  } catch (const mdpo::Error& ex) {
    g_last_error = ex.what();
    return StatusOf(ex.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MDPO_ERR_INTERNAL;
  } catch (const std::exception& ex) {
    g_last_error = ex.what();
    return MDPO_ERR_INTERNAL;
  }
}

void Require(bool ok, const char* what) {
  if (!ok) throw mdpo::Error(mdpo::ErrorCode::kInvalidArgument, what);
}

char* CopyString(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void SetString(char** out, const std::string& s) {
  if (out != nullptr) *out = CopyString(s);
}

std::vector<mdpo::Problem> ProblemsOf(const mdpo_corpus* corpus) {
  std::vector<mdpo::Problem> out;
  out.reserve(corpus->entries.size());
  for (const mdpo::CorpusEntry& e : corpus->entries) out.push_back(e.problem);
  return out;
}

std::vector<mdpo::Granularity> GranularitiesOf(unsigned mask) {
  std::vector<mdpo::Granularity> out;
  for (int g = 0; g < 3; ++g) {
    if (mask & (1u << g)) out.push_back(static_cast<mdpo::Granularity>(g));
  }
  return out;
}

mdpo::TrainConfig ToTrainConfig(const mdpo_train_config& c) {
  mdpo::TrainConfig cfg;
  cfg.epochs = c.epochs;
  cfg.batch_size = c.batch_size;
  cfg.peak_lr = c.peak_lr;
  cfg.warmup_ratio = c.warmup_ratio;
  Require(c.loss == MDPO_LOSS_MDPO || c.loss == MDPO_LOSS_DPO, "unknown loss kind");
  cfg.loss = c.loss == MDPO_LOSS_MDPO ? mdpo::LossKind::kMdpo : mdpo::LossKind::kDpo;
  cfg.beta = c.beta;
  cfg.gamma = c.gamma;
  cfg.seed = c.seed;
  cfg.shuffle = c.shuffle != 0;
  cfg.weight_decay = c.weight_decay;
  cfg.Validate();
  return cfg;
}

mdpo::EvalOptions ToEvalOptions(const mdpo_eval_config* c) {
  mdpo_eval_config defaults;
  mdpo_eval_config_default(&defaults);
  if (c == nullptr) c = &defaults;
  Require(c->max_tokens > 0, "max_tokens must be > 0");
  Require(c->beta > 0, "beta must be > 0");
  Require(c->gamma >= 0, "gamma must be >= 0");
  mdpo::EvalOptions o;
  o.max_tokens = c->max_tokens;
  o.margin_cfg = mdpo::LossConfig{c->beta, c->gamma};
  o.include_hard = c->include_hard != 0;
  o.hard_seed = c->hard_seed;
  return o;
}

std::unique_ptr<mdpo::Generator> MakeGenerator(const mdpo_generator_config& g,
                                               const mdpo_policy* policy) {
  auto http = [&]() {
    Require(g.endpoint != nullptr && *g.endpoint != '\0', "http generator needs an endpoint");
    mdpo::HttpConfig hc;
    hc.endpoint = g.endpoint;
    if (g.model != nullptr) hc.model = g.model;
    if (g.auth_env != nullptr) hc.auth_env = g.auth_env;
    if (g.timeout_ms > 0) hc.timeout_ms = g.timeout_ms;
    if (g.max_retries >= 0) hc.max_retries = g.max_retries;
    return std::make_unique<mdpo::HttpGenerator>(hc);
  };
  switch (g.kind) {
    case MDPO_GENERATOR_LOCAL:
      Require(policy != nullptr, "local generator needs a policy");
      return std::make_unique<mdpo::LocalPolicyGenerator>(
          std::make_shared<const mdpo::PolicyParams>(policy->params));
    case MDPO_GENERATOR_HTTP:
      return http();
    case MDPO_GENERATOR_REPLAY: {
      Require(g.cache_dir != nullptr && *g.cache_dir != '\0', "replay generator needs a cache dir");
      std::unique_ptr<mdpo::Generator> upstream;
      if (g.record) upstream = http();
      return std::make_unique<mdpo::ReplayCacheGenerator>(g.cache_dir, std::move(upstream));
    }
  }
  throw mdpo::Error(mdpo::ErrorCode::kInvalidArgument, "unknown generator kind");
}

std::string PercentOf(const nlohmann::json& counts, const char* num, const char* den) {
  const int n = counts.value(num, 0);
  const int d = counts.value(den, 0);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%6.2f%% (%d/%d)", d ? 100.0 * n / d : 0.0, n, d);
  return buf;
}

}  // namespace

extern "C" {

const char* mdpo_last_error(void) { return g_last_error.c_str(); }

const char* mdpo_status_name(mdpo_status status) {
  switch (status) {
    case MDPO_OK:
      return "ok";
    case MDPO_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case MDPO_ERR_MALFORMED_SOLUTION:
      return "malformed solution";
    case MDPO_ERR_MALFORMED_ANSWER:
      return "malformed answer";
    case MDPO_ERR_DEGENERATE_EXPRESSION:
      return "degenerate expression";
    case MDPO_ERR_EMPTY_SEQUENCE:
      return "empty sequence";
    case MDPO_ERR_SHAPE_MISMATCH:
      return "shape mismatch";
    case MDPO_ERR_UNKNOWN_TOKEN:
      return "unknown token";
    case MDPO_ERR_INSUFFICIENT_WINDOWS:
      return "insufficient windows";
    case MDPO_ERR_GENERATOR:
      return "generator error";
    case MDPO_ERR_CACHE_MISS:
      return "cache miss";
    case MDPO_ERR_PARSE:
      return "parse error";
    case MDPO_ERR_IO:
      return "i/o error";
    case MDPO_ERR_CONFIG_MISMATCH:
      return "config mismatch";
    case MDPO_ERR_SKIPPED_BATCH:
      return "skipped batch";
    case MDPO_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

void mdpo_free_string(char* s) { std::free(s); }

mdpo_status mdpo_file_sha256(const char* path, char** out_hex) {
  return Guard([&] {
    Require(path != nullptr && out_hex != nullptr, "null argument");
    *out_hex = CopyString(mdpo::FileSha256Hex(path));
  });
}

mdpo_status mdpo_corpus_synth(uint64_t seed, int count, int min_difficulty, int max_difficulty,
                              int operand_lo, int operand_hi, mdpo_corpus** out) {
  return Guard([&] {
    Require(out != nullptr, "null output");
    auto c = std::make_unique<mdpo_corpus>();
    c->entries = mdpo::GenSyntheticCorpus(seed, count, {min_difficulty, max_difficulty},
                                          {operand_lo, operand_hi});
    *out = c.release();
  });
}

mdpo_status mdpo_corpus_load(const char* path, mdpo_corpus** out) {
  return Guard([&] {
    Require(path != nullptr && out != nullptr, "null argument");
    auto c = std::make_unique<mdpo_corpus>();
    c->entries = mdpo::ReadCorpus(path);
    *out = c.release();
  });
}

mdpo_status mdpo_corpus_save(const mdpo_corpus* corpus, const char* path) {
  return Guard([&] {
    Require(corpus != nullptr && path != nullptr, "null argument");
    mdpo::WriteCorpus(path, corpus->entries);
  });
}

mdpo_status mdpo_corpus_size(const mdpo_corpus* corpus, size_t* out) {
  return Guard([&] {
    Require(corpus != nullptr && out != nullptr, "null argument");
    *out = corpus->entries.size();
  });
}

mdpo_status mdpo_corpus_split(const mdpo_corpus* corpus, mdpo_split split, mdpo_corpus** out) {
  return Guard([&] {
    Require(corpus != nullptr && out != nullptr, "null argument");
    auto c = std::make_unique<mdpo_corpus>();
    if (split == MDPO_SPLIT_ALL) {
      c->entries = corpus->entries;
    } else {
      Require(split >= MDPO_SPLIT_TRAIN && split <= MDPO_SPLIT_ACCURACY_EVAL, "unknown split");
      c->entries = mdpo::FilterSplit(corpus->entries, static_cast<mdpo::Split>(split),
                                     [](const mdpo::CorpusEntry& e) { return e.problem.id; });
    }
    *out = c.release();
  });
}

mdpo_status mdpo_corpus_complexify(const mdpo_corpus* corpus, uint64_t seed, mdpo_corpus** out) {
  return Guard([&] {
    Require(corpus != nullptr && out != nullptr, "null argument");
    auto c = std::make_unique<mdpo_corpus>();
    for (const mdpo::CorpusEntry& e : corpus->entries) {
      mdpo::CorpusEntry hard;
      hard.problem = mdpo::ComplexifyProblem(e.problem, seed);
      hard.gold = mdpo::GoldSolution(mdpo::ParseProblemExpression(hard.problem.text));
      c->entries.push_back(std::move(hard));
    }
    *out = c.release();
  });
}

void mdpo_corpus_free(mdpo_corpus* corpus) { delete corpus; }

mdpo_status mdpo_policy_sft(const mdpo_corpus* corpus, int order, double alpha, int backoff,
                            mdpo_policy** out) {
  return Guard([&] {
    Require(corpus != nullptr && out != nullptr, "null argument");
    const mdpo::Vocabulary vocab;
    const auto examples = mdpo::SftExamples(vocab, corpus->entries);
    auto p = std::make_unique<mdpo_policy>();
    p->params = mdpo::SftFit(examples, order, alpha, backoff != 0);
    *out = p.release();
  });
}

mdpo_status mdpo_policy_load(const char* path, mdpo_policy** out) {
  return Guard([&] {
    Require(path != nullptr && out != nullptr, "null argument");
    auto p = std::make_unique<mdpo_policy>();
    p->params = mdpo::LoadParams(path);
    *out = p.release();
  });
}

mdpo_status mdpo_policy_save(const mdpo_policy* policy, const char* path) {
  return Guard([&] {
    Require(policy != nullptr && path != nullptr, "null argument");
    mdpo::SaveParams(path, policy->params);
  });
}

mdpo_status mdpo_policy_digest(const mdpo_policy* policy, char** out_hex) {
  return Guard([&] {
    Require(policy != nullptr && out_hex != nullptr, "null argument");
    *out_hex = CopyString(mdpo::Sha256Hex(mdpo::SerializeParams(policy->params)));
  });
}

void mdpo_policy_free(mdpo_policy* policy) { delete policy; }

void mdpo_generator_config_default(mdpo_generator_config* cfg) {
  if (cfg == nullptr) return;
  *cfg = mdpo_generator_config{};
  cfg->kind = MDPO_GENERATOR_LOCAL;
  cfg->timeout_ms = 30000;
  cfg->max_retries = 3;
}

void mdpo_build_config_default(mdpo_build_config* cfg) {
  if (cfg == nullptr) return;
  const mdpo::BuildConfig d;
  cfg->k = d.k;
  cfg->max_pairs_per_problem = d.max_pairs_per_problem;
  cfg->granularity_mask = MDPO_GRAN_ALL;
  cfg->seed = d.seed;
  cfg->temperature = d.temperature;
  cfg->max_tokens = d.max_tokens;
  cfg->target_pairs = d.target_pairs;
  cfg->complexify = d.complexify ? 1 : 0;
}

mdpo_status mdpo_pairs_build(const mdpo_corpus* corpus, const mdpo_policy* policy,
                             const mdpo_generator_config* generator, const mdpo_build_config* cfg,
                             mdpo_pairs** out, char** report_json) {
  return Guard([&] {
    Require(corpus != nullptr && generator != nullptr && cfg != nullptr && out != nullptr,
            "null argument");
    mdpo::BuildConfig bc;
    bc.k = cfg->k;
    bc.max_pairs_per_problem = cfg->max_pairs_per_problem;
    bc.granularities = GranularitiesOf(cfg->granularity_mask);
    Require(!bc.granularities.empty(), "no granularity selected");
    bc.seed = cfg->seed;
    bc.temperature = cfg->temperature;
    bc.max_tokens = cfg->max_tokens;
    bc.target_pairs = cfg->target_pairs;
    bc.complexify = cfg->complexify != 0;
    auto gen = MakeGenerator(*generator, policy);
    mdpo::BuildResult result = mdpo::BuildDataset(ProblemsOf(corpus), *gen, bc);
    auto p = std::make_unique<mdpo_pairs>();
    p->pairs = std::move(result.pairs);
    SetString(report_json, result.report.ToJson().dump(2));
    *out = p.release();
  });
}

mdpo_status mdpo_pairs_load(const char* path, mdpo_pairs** out) {
  return Guard([&] {
    Require(path != nullptr && out != nullptr, "null argument");
    auto p = std::make_unique<mdpo_pairs>();
    p->pairs = mdpo::ReadPairs(path);
    *out = p.release();
  });
}

mdpo_status mdpo_pairs_save(const mdpo_pairs* pairs, const char* path) {
  return Guard([&] {
    Require(pairs != nullptr && path != nullptr, "null argument");
    mdpo::WritePairs(path, pairs->pairs);
  });
}

mdpo_status mdpo_pairs_size(const mdpo_pairs* pairs, size_t* out) {
  return Guard([&] {
    Require(pairs != nullptr && out != nullptr, "null argument");
    *out = pairs->pairs.size();
  });
}

mdpo_status mdpo_pairs_select(const mdpo_pairs* pairs, mdpo_split split, unsigned granularity_mask,
                              mdpo_pairs** out) {
  return Guard([&] {
    Require(pairs != nullptr && out != nullptr, "null argument");
    Require(split >= MDPO_SPLIT_ALL && split <= MDPO_SPLIT_ACCURACY_EVAL, "unknown split");
    auto p = std::make_unique<mdpo_pairs>();
    for (const mdpo::PreferencePair& pair : pairs->pairs) {
      if (!(granularity_mask & (1u << static_cast<int>(pair.granularity)))) continue;
      if (split != MDPO_SPLIT_ALL &&
          mdpo::SplitOf(pair.problem_id) != static_cast<mdpo::Split>(split)) {
        continue;
      }
      p->pairs.push_back(pair);
    }
    *out = p.release();
  });
}

void mdpo_pairs_free(mdpo_pairs* pairs) { delete pairs; }

void mdpo_train_config_default(mdpo_train_config* cfg) {
  if (cfg == nullptr) return;
  const mdpo::TrainConfig d;
  cfg->epochs = d.epochs;
  cfg->batch_size = d.batch_size;
  cfg->peak_lr = d.peak_lr;
  cfg->warmup_ratio = d.warmup_ratio;
  cfg->loss = MDPO_LOSS_MDPO;
  cfg->beta = d.beta;
  cfg->gamma = d.gamma;
  cfg->seed = d.seed;
  cfg->shuffle = d.shuffle ? 1 : 0;
  cfg->weight_decay = d.weight_decay;
}

mdpo_status mdpo_train(const mdpo_policy* initial, const mdpo_pairs* pairs,
                       const mdpo_train_config* cfg, const mdpo_train_options* options,
                       mdpo_policy** out) {
  return Guard([&] {
    Require(initial != nullptr && pairs != nullptr && cfg != nullptr && out != nullptr,
            "null argument");
    mdpo_train_options defaults{nullptr, nullptr, nullptr, nullptr, -1};
    const mdpo_train_options& o = options != nullptr ? *options : defaults;
    const mdpo::TrainConfig tc = ToTrainConfig(*cfg);
    const std::vector<mdpo::PreferencePair> none;
    const auto& eval = o.eval_pairs != nullptr ? o.eval_pairs->pairs : none;
    auto p = std::make_unique<mdpo_policy>();
    if (tc.epochs == 0) {
      p->params = initial->params;
      *out = p.release();
      return;
    }
    mdpo::Trainer trainer =
        o.resume_path != nullptr && *o.resume_path != '\0'
            ? mdpo::Trainer::Resume(o.resume_path, pairs->pairs, tc, eval)
            : mdpo::Trainer(initial->params, pairs->pairs, tc, eval);
    trainer.Run(o.stop_after_epoch >= 0 ? std::optional<int>(o.stop_after_epoch) : std::nullopt);
    if (o.checkpoint_path != nullptr && *o.checkpoint_path != '\0') {
      trainer.SaveCheckpoint(o.checkpoint_path);
    }
    if (o.metrics_path != nullptr && *o.metrics_path != '\0') {
      mdpo::WriteMetrics(o.metrics_path, trainer.metrics());
    }
    p->params = trainer.params();
    *out = p.release();
  });
}

void mdpo_eval_config_default(mdpo_eval_config* cfg) {
  if (cfg == nullptr) return;
  cfg->max_tokens = 160;
  cfg->beta = 0.4;
  cfg->gamma = 0.5;
  cfg->include_hard = 1;
  cfg->hard_seed = 0;
}

mdpo_status mdpo_evaluate(const mdpo_policy* policy, const mdpo_corpus* problems,
                          const mdpo_pairs* pairs, const mdpo_eval_config* cfg, char** out_json,
                          char** out_text) {
  return Guard([&] {
    Require(policy != nullptr, "null policy");
    Require(problems != nullptr || pairs != nullptr, "nothing to evaluate");
    const mdpo::EvalOptions o = ToEvalOptions(cfg);
    const mdpo::EvalReport report =
        mdpo::Evaluate(policy->params, problems ? ProblemsOf(problems) : std::vector<mdpo::Problem>{},
                       pairs ? pairs->pairs : std::vector<mdpo::PreferencePair>{}, o);
    SetString(out_json, report.ToJson().dump(2));
    SetString(out_text, report.ToText());
  });
}

mdpo_status mdpo_compare(const mdpo_policy* warm_start, const mdpo_pairs* train_pairs,
                         const mdpo_corpus* eval_problems, const mdpo_pairs* eval_pairs,
                         const mdpo_method* methods, size_t n_methods, const mdpo_eval_config* cfg,
                         char** out_json, char** out_text) {
  return Guard([&] {
    Require(warm_start != nullptr && train_pairs != nullptr && eval_problems != nullptr &&
                eval_pairs != nullptr && (methods != nullptr || n_methods == 0),
            "null argument");
    std::vector<mdpo::MethodSpec> specs;
    for (size_t i = 0; i < n_methods; ++i) {
      mdpo::MethodSpec s;
      s.name = methods[i].name != nullptr ? methods[i].name : "method" + std::to_string(i);
      s.config = ToTrainConfig(methods[i].config);
      s.granularities = GranularitiesOf(methods[i].granularity_mask);
      specs.push_back(std::move(s));
    }
    const mdpo::Comparison cmp =
        mdpo::CompareMethods(warm_start->params, train_pairs->pairs, ProblemsOf(eval_problems),
                             eval_pairs->pairs, specs, ToEvalOptions(cfg));
    SetString(out_json, cmp.ToJson().dump(2));
    SetString(out_text, cmp.ToText());
  });
}

mdpo_status mdpo_report_render(const char* report_json, char** out_text) {
  return Guard([&] {
    Require(report_json != nullptr && out_text != nullptr, "null argument");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(report_json);
    } catch (const nlohmann::json::exception& ex) {
      throw mdpo::ParseError(ex.what());
    }
    std::string text;
    auto eval_lines = [&](const nlohmann::json& r, const std::string& indent) {
      text += indent + "config   " + r.value("config_digest", "") + "\n";
      text += indent + "accuracy " + PercentOf(r["splits"]["normal"], "correct", "total") + "\n";
      text += indent + "hard     " + PercentOf(r["splits"]["hard"], "correct", "total") + "\n";
      text += indent + "win rate " + PercentOf(r["pairs"], "wins", "total") + "\n";
      text += indent + "margin   " + PercentOf(r["pairs"], "margin_hits", "total") + "\n";
    };
    try {
      if (j.contains("methods")) {
        text += "warm start " + j.value("warm_start_digest", "") + "\n";
        text += "pairs      " + j.value("pairs_digest", "") + "\n";
        int rank = 0;
        for (const auto& m : j["methods"]) {
          text += std::to_string(++rank) + ". " + m.value("name", "") + "\n";
          if (m.value("ok", false)) {
            eval_lines(m["report"], "   ");
          } else {
            text += "   failed: " + m.value("error", "") + "\n";
          }
        }
      } else {
        eval_lines(j, "");
      }
    } catch (const nlohmann::json::exception& ex) {
      throw mdpo::ParseError(std::string("not a report: ") + ex.what());
    }
    *out_text = CopyString(text);
  });
}

mdpo_status mdpo_loss_mdpo(const double* chosen, size_t n_w, const double* rejected, size_t n_l,
                           double beta, double gamma, double* loss, double* grad_w,
                           double* grad_l) {
  return Guard([&] {
    Require(chosen != nullptr && rejected != nullptr && loss != nullptr, "null argument");
    const mdpo::LossOutput o =
        mdpo::MdpoLoss(mdpo::ScoredSequence{{chosen, chosen + n_w}},
                       mdpo::ScoredSequence{{rejected, rejected + n_l}}, {beta, gamma});
    *loss = o.loss;
    if (grad_w != nullptr) std::copy(o.grad_w.begin(), o.grad_w.end(), grad_w);
    if (grad_l != nullptr) std::copy(o.grad_l.begin(), o.grad_l.end(), grad_l);
  });
}

mdpo_status mdpo_loss_dpo(const double* chosen, const double* ref_chosen, size_t n_w,
                          const double* rejected, const double* ref_rejected, size_t n_l,
                          double beta, double* loss, double* grad_w, double* grad_l) {
  return Guard([&] {
    Require(chosen != nullptr && ref_chosen != nullptr && rejected != nullptr &&
                ref_rejected != nullptr && loss != nullptr,
            "null argument");
    mdpo::DpoConfig cfg{beta, mdpo::ScoredSequence{{ref_chosen, ref_chosen + n_w}},
                        mdpo::ScoredSequence{{ref_rejected, ref_rejected + n_l}}};
    const mdpo::LossOutput o = mdpo::DpoLoss(mdpo::ScoredSequence{{chosen, chosen + n_w}},
                                             mdpo::ScoredSequence{{rejected, rejected + n_l}}, cfg);
    *loss = o.loss;
    if (grad_w != nullptr) std::copy(o.grad_w.begin(), o.grad_w.end(), grad_w);
    if (grad_l != nullptr) std::copy(o.grad_l.begin(), o.grad_l.end(), grad_l);
  });
}

mdpo_status mdpo_gradcheck(int trials, uint64_t seed, double h, double tolerance, int* passed,
                           int* checks, double* max_relative_error) {
  return Guard([&] {
    const mdpo::GradCheckSummary s = mdpo::RunGradCheck(trials, seed, h, tolerance);
    if (passed != nullptr) *passed = s.passed() ? 1 : 0;
    if (checks != nullptr) *checks = s.checks;
    if (max_relative_error != nullptr) *max_relative_error = s.max_relative_error;
  });
}

}  // extern "C"
