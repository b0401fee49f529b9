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
// mdpo: command-line front end. Talks to the toolkit only through the C API.
//
// Exit codes: 0 success, 1 validation failure (bad flags, bad arguments,
// gradient check failure), 2 I/O, parse or generator failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mdpo/mdpo.h"

namespace {

struct CliFailure {
  int exit_code;
};

int ExitCodeFor(mdpo_status s) {
  switch (s) {
    case MDPO_OK:
      return 0;
    case MDPO_ERR_IO:
    case MDPO_ERR_PARSE:
    case MDPO_ERR_GENERATOR:
    case MDPO_ERR_CACHE_MISS:
    case MDPO_ERR_INTERNAL:
      return 2;
    default:
      return 1;
  }
}

void Check(mdpo_status s) {
  if (s == MDPO_OK) return;
  std::cerr << "error: " << mdpo_last_error() << "\n";
  throw CliFailure{ExitCodeFor(s)};
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};

using Corpus = Handle<mdpo_corpus, mdpo_corpus_free>;
using Policy = Handle<mdpo_policy, mdpo_policy_free>;
using Pairs = Handle<mdpo_pairs, mdpo_pairs_free>;

struct OwnedString {
  char* ptr = nullptr;
  ~OwnedString() { mdpo_free_string(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) {
    std::cerr << "error: cannot write " << path << "\n";
    throw CliFailure{2};
  }
}

std::string ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read " << path << "\n";
    throw CliFailure{2};
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::map<std::string, mdpo_split> kSplits = {{"all", MDPO_SPLIT_ALL},
                                                    {"train", MDPO_SPLIT_TRAIN},
                                                    {"pair-eval", MDPO_SPLIT_PAIR_EVAL},
                                                    {"accuracy-eval", MDPO_SPLIT_ACCURACY_EVAL}};

const std::map<std::string, unsigned> kGranularities = {{"sol2sol", MDPO_GRAN_SOL2SOL},
                                                         {"infer2infer", MDPO_GRAN_INFER2INFER},
                                                         {"step2step", MDPO_GRAN_STEP2STEP}};

unsigned MaskOf(const std::vector<std::string>& names) {
  unsigned mask = 0;
  for (const std::string& n : names) mask |= kGranularities.at(n);
  return mask == 0 ? MDPO_GRAN_ALL : mask;
}

// Training flags shared by train and compare.
struct TrainFlags {
  std::string loss = "mdpo";
  mdpo_train_config cfg{};

  TrainFlags() { mdpo_train_config_default(&cfg); }

  void Add(CLI::App* app) {
    app->add_option("--loss", loss, "mdpo or dpo")->check(CLI::IsMember({"mdpo", "dpo"}));
    app->add_option("--beta", cfg.beta, "reward scale")->capture_default_str();
    app->add_option("--gamma", cfg.gamma, "target reward margin")->capture_default_str();
    app->add_option("--epochs", cfg.epochs)->capture_default_str();
    app->add_option("--batch", cfg.batch_size)->capture_default_str();
    app->add_option("--lr", cfg.peak_lr, "peak learning rate")->capture_default_str();
    app->add_option("--warmup", cfg.warmup_ratio, "warmup ratio")->capture_default_str();
    app->add_option("--weight-decay", cfg.weight_decay)->capture_default_str();
  }

  mdpo_train_config Finish(std::uint64_t seed) const {
    mdpo_train_config c = cfg;
    c.loss = loss == "dpo" ? MDPO_LOSS_DPO : MDPO_LOSS_MDPO;
    c.seed = seed;
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MDPO toolkit: synthetic corpus, preference pairs, training and evaluation"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "seed for every random choice")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic arithmetic corpus");
  int count = 500;
  int min_diff = 2;
  int max_diff = 4;
  int operand_lo = 2;
  int operand_hi = 99;
  bool synth_hard = false;
  std::string out_path;
  synth->add_option("--count", count)->capture_default_str();
  synth->add_option("--min-difficulty", min_diff)->capture_default_str();
  synth->add_option("--max-difficulty", max_diff)->capture_default_str();
  synth->add_option("--operand-lo", operand_lo)->capture_default_str();
  synth->add_option("--operand-hi", operand_hi)->capture_default_str();
  synth->add_flag("--hard", synth_hard, "write the complexified corpus instead");
  synth->add_option("--out", out_path)->required();

  // build-pairs
  auto* build = app.add_subcommand("build-pairs", "construct preference pairs");
  std::string corpus_path;
  std::string params_path;
  std::vector<std::string> granularities;
  std::string generator = "local";
  std::string endpoint;
  std::string model;
  std::string auth_env;
  std::string cache_dir;
  bool record = false;
  std::string report_path;
  mdpo_build_config build_cfg;
  mdpo_build_config_default(&build_cfg);
  bool no_complexify = false;
  build->add_option("--corpus", corpus_path)->required();
  build->add_option("--params", params_path, "policy for the local generator");
  build->add_option("--out", out_path)->required();
  build->add_option("--k", build_cfg.k, "samples per window")->capture_default_str();
  build->add_option("--granularity", granularities)
      ->check(CLI::IsMember({"sol2sol", "infer2infer", "step2step"}));
  build->add_option("--generator", generator)->check(CLI::IsMember({"local", "http", "replay"}));
  build->add_option("--endpoint", endpoint);
  build->add_option("--model", model);
  build->add_option("--auth-env", auth_env, "environment variable holding the bearer token");
  build->add_option("--cache-dir", cache_dir);
  build->add_flag("--record", record, "replay: fill cache misses from --endpoint");
  build->add_option("--temperature", build_cfg.temperature)->capture_default_str();
  build->add_option("--max-tokens", build_cfg.max_tokens)->capture_default_str();
  build->add_option("--target-pairs", build_cfg.target_pairs)->capture_default_str();
  build->add_option("--max-pairs-per-problem", build_cfg.max_pairs_per_problem)
      ->capture_default_str();
  build->add_flag("--no-complexify", no_complexify);
  build->add_option("--report", report_path, "build report JSON");

  // train
  auto* train = app.add_subcommand("train", "SFT warm start (no --pairs) or preference training");
  std::string pairs_path;
  std::string metrics_path;
  std::string checkpoint_path;
  std::string resume_path;
  std::string split_name = "train";
  int stop_after = -1;
  int order = 3;
  double alpha = 0.1;
  bool backoff = false;
  TrainFlags train_flags;
  train->add_option("--corpus", corpus_path, "gold solutions for SFT");
  train->add_option("--params", params_path, "initial policy for preference training");
  train->add_option("--pairs", pairs_path);
  train->add_option("--out", out_path)->required();
  train->add_option("--split", split_name)->check(CLI::IsMember({"all", "train"}))
      ->capture_default_str();
  train->add_option("--granularity", granularities)
      ->check(CLI::IsMember({"sol2sol", "infer2infer", "step2step"}));
  train->add_option("--order", order, "SFT context length")->capture_default_str();
  train->add_option("--alpha", alpha, "SFT count smoothing")->capture_default_str();
  train->add_flag("--backoff", backoff, "SFT: sum all context suffixes");
  train->add_option("--metrics", metrics_path);
  train->add_option("--checkpoint", checkpoint_path);
  train->add_option("--resume", resume_path);
  train->add_option("--stop-after-epoch", stop_after);
  train_flags.Add(train);

  // eval
  auto* eval = app.add_subcommand("eval", "accuracy, win rate and margin satisfaction");
  bool hard = false;
  std::string text_path;
  mdpo_eval_config eval_cfg;
  mdpo_eval_config_default(&eval_cfg);
  std::string corpus_split = "accuracy-eval";
  std::string pairs_split = "pair-eval";
  eval->add_option("--params", params_path)->required();
  eval->add_option("--corpus", corpus_path);
  eval->add_option("--pairs", pairs_path);
  eval->add_option("--corpus-split", corpus_split)->check(CLI::IsMember({"all", "train", "pair-eval", "accuracy-eval"}))
      ->capture_default_str();
  eval->add_option("--pairs-split", pairs_split)->check(CLI::IsMember({"all", "train", "pair-eval", "accuracy-eval"}))
      ->capture_default_str();
  eval->add_flag("--hard", hard, "evaluate on the complexified problems only");
  eval->add_option("--beta", eval_cfg.beta)->capture_default_str();
  eval->add_option("--gamma", eval_cfg.gamma)->capture_default_str();
  eval->add_option("--max-tokens", eval_cfg.max_tokens)->capture_default_str();
  eval->add_option("--out", out_path, "report JSON");
  eval->add_option("--text", text_path, "plain-text report");

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the loss gradients");
  int trials = 100;
  double h = 1e-5;
  double tol = 1e-4;
  grad->add_option("--trials", trials)->capture_default_str();
  grad->add_option("--step", h, "finite-difference step")->capture_default_str();
  grad->add_option("--tol", tol)->capture_default_str();

  // compare
  auto* compare = app.add_subcommand("compare", "train several methods from one warm start");
  std::vector<std::string> methods = {"mdpo", "dpo"};
  TrainFlags compare_flags;
  compare->add_option("--params", params_path, "warm start")->required();
  compare->add_option("--pairs", pairs_path)->required();
  compare->add_option("--corpus", corpus_path)->required();
  compare->add_option("--methods", methods)->check(CLI::IsMember({"mdpo", "dpo"}))
      ->capture_default_str();
  compare->add_option("--out", out_path, "comparison JSON");
  compare->add_option("--text", text_path, "plain-text table");
  compare_flags.Add(compare);

  // report
  auto* report = app.add_subcommand("report", "render a JSON report as a table");
  std::string in_path;
  report->add_option("--in", in_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*synth) {
      Corpus corpus;
      Check(mdpo_corpus_synth(seed, count, min_diff, max_diff, operand_lo, operand_hi,
                              corpus.out()));
      if (synth_hard) {
        Corpus hard_corpus;
        Check(mdpo_corpus_complexify(corpus.get(), seed, hard_corpus.out()));
        Check(mdpo_corpus_save(hard_corpus.get(), out_path.c_str()));
      } else {
        Check(mdpo_corpus_save(corpus.get(), out_path.c_str()));
      }
      std::cout << "wrote " << count << " problems to " << out_path << "\n";
    } else if (*build) {
      Corpus corpus;
      Check(mdpo_corpus_load(corpus_path.c_str(), corpus.out()));
      Policy policy;
      if (generator == "local") {
        if (params_path.empty()) {
          std::cerr << "error: --generator local needs --params\n";
          return 1;
        }
        Check(mdpo_policy_load(params_path.c_str(), policy.out()));
      }
      mdpo_generator_config gen;
      mdpo_generator_config_default(&gen);
      gen.kind = generator == "local"  ? MDPO_GENERATOR_LOCAL
                 : generator == "http" ? MDPO_GENERATOR_HTTP
                                       : MDPO_GENERATOR_REPLAY;
      gen.endpoint = endpoint.c_str();
      gen.model = model.empty() ? nullptr : model.c_str();
      gen.auth_env = auth_env.empty() ? nullptr : auth_env.c_str();
      gen.cache_dir = cache_dir.c_str();
      gen.record = record ? 1 : 0;
      build_cfg.seed = seed;
      build_cfg.granularity_mask = MaskOf(granularities);
      build_cfg.complexify = no_complexify ? 0 : 1;
      Pairs pairs;
      OwnedString report_json;
      Check(mdpo_pairs_build(corpus.get(), policy.get(), &gen, &build_cfg, pairs.out(),
                             &report_json.ptr));
      Check(mdpo_pairs_save(pairs.get(), out_path.c_str()));
      if (!report_path.empty()) WriteText(report_path, report_json.str() + "\n");
      std::cout << report_json.str() << "\n";
    } else if (*train) {
      Policy result;
      if (pairs_path.empty()) {
        if (corpus_path.empty()) {
          std::cerr << "error: SFT needs --corpus (or pass --pairs for preference training)\n";
          return 1;
        }
        Corpus corpus;
        Corpus train_split;
        Check(mdpo_corpus_load(corpus_path.c_str(), corpus.out()));
        Check(mdpo_corpus_split(corpus.get(), kSplits.at(split_name), train_split.out()));
        Check(mdpo_policy_sft(train_split.get(), order, alpha, backoff ? 1 : 0, result.out()));
      } else {
        if (params_path.empty()) {
          std::cerr << "error: preference training needs --params\n";
          return 1;
        }
        Policy initial;
        Pairs all;
        Pairs selected;
        Check(mdpo_policy_load(params_path.c_str(), initial.out()));
        Check(mdpo_pairs_load(pairs_path.c_str(), all.out()));
        Check(mdpo_pairs_select(all.get(), kSplits.at(split_name), MaskOf(granularities),
                                selected.out()));
        const mdpo_train_config cfg = train_flags.Finish(seed);
        mdpo_train_options opts{nullptr,
                                metrics_path.empty() ? nullptr : metrics_path.c_str(),
                                checkpoint_path.empty() ? nullptr : checkpoint_path.c_str(),
                                resume_path.empty() ? nullptr : resume_path.c_str(), stop_after};
        Check(mdpo_train(initial.get(), selected.get(), &cfg, &opts, result.out()));
      }
      Check(mdpo_policy_save(result.get(), out_path.c_str()));
      OwnedString digest;
      Check(mdpo_policy_digest(result.get(), &digest.ptr));
      std::cout << "wrote " << out_path << " sha256 " << digest.str() << "\n";
    } else if (*eval) {
      if (corpus_path.empty() && pairs_path.empty()) {
        std::cerr << "error: eval needs --corpus and/or --pairs\n";
        return 1;
      }
      Policy policy;
      Check(mdpo_policy_load(params_path.c_str(), policy.out()));
      Corpus problems;
      if (!corpus_path.empty()) {
        Corpus corpus;
        Corpus split;
        Check(mdpo_corpus_load(corpus_path.c_str(), corpus.out()));
        Check(mdpo_corpus_split(corpus.get(), kSplits.at(corpus_split), split.out()));
        if (hard) {
          Check(mdpo_corpus_complexify(split.get(), seed, problems.out()));
        } else {
          std::swap(problems.ptr, split.ptr);
        }
      }
      Pairs pairs;
      if (!pairs_path.empty()) {
        Pairs all;
        Check(mdpo_pairs_load(pairs_path.c_str(), all.out()));
        Check(mdpo_pairs_select(all.get(), kSplits.at(pairs_split), MDPO_GRAN_ALL, pairs.out()));
      }
      eval_cfg.include_hard = hard ? 0 : 1;
      eval_cfg.hard_seed = seed;
      OwnedString json;
      OwnedString text;
      Check(mdpo_evaluate(policy.get(), problems.get(), pairs.get(), &eval_cfg, &json.ptr,
                          &text.ptr));
      if (!out_path.empty()) WriteText(out_path, json.str() + "\n");
      if (!text_path.empty()) WriteText(text_path, text.str());
      std::cout << text.str();
    } else if (*grad) {
      int passed = 0;
      int checks = 0;
      double max_err = 0.0;
      Check(mdpo_gradcheck(trials, seed, h, tol, &passed, &checks, &max_err));
      std::printf("%s gradcheck: %d checks over %d trials, max relative error %.3e (tol %.1e)\n",
                  passed ? "PASS" : "FAIL", checks, trials, max_err, tol);
      return passed ? 0 : 1;
    } else if (*compare) {
      Policy warm;
      Pairs all;
      Pairs train_pairs;
      Pairs eval_pairs;
      Corpus corpus;
      Corpus eval_problems;
      Check(mdpo_policy_load(params_path.c_str(), warm.out()));
      Check(mdpo_pairs_load(pairs_path.c_str(), all.out()));
      Check(mdpo_pairs_select(all.get(), MDPO_SPLIT_TRAIN, MDPO_GRAN_ALL, train_pairs.out()));
      Check(mdpo_pairs_select(all.get(), MDPO_SPLIT_PAIR_EVAL, MDPO_GRAN_ALL, eval_pairs.out()));
      Check(mdpo_corpus_load(corpus_path.c_str(), corpus.out()));
      Check(mdpo_corpus_split(corpus.get(), MDPO_SPLIT_ACCURACY_EVAL, eval_problems.out()));
      std::vector<mdpo_method> specs;
      for (const std::string& m : methods) {
        TrainFlags flags = compare_flags;
        flags.loss = m;
        specs.push_back(mdpo_method{m.c_str(), flags.Finish(seed), 0});
      }
      mdpo_eval_config cfg;
      mdpo_eval_config_default(&cfg);
      cfg.beta = compare_flags.cfg.beta;
      cfg.gamma = compare_flags.cfg.gamma;
      cfg.hard_seed = seed;
      OwnedString json;
      OwnedString text;
      Check(mdpo_compare(warm.get(), train_pairs.get(), eval_problems.get(), eval_pairs.get(),
                         specs.data(), specs.size(), &cfg, &json.ptr, &text.ptr));
      if (!out_path.empty()) WriteText(out_path, json.str() + "\n");
      if (!text_path.empty()) WriteText(text_path, text.str());
      std::cout << text.str();
    } else if (*report) {
      const std::string json = ReadText(in_path);
      OwnedString text;
      Check(mdpo_report_render(json.c_str(), &text.ptr));
      std::cout << text.str();
    }
  } catch (const CliFailure& f) {
    return f.exit_code;
  }
  return 0;
}
