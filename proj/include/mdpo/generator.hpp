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
// Sources of reasoning continuations for the pair-construction pipeline.
//
// A generator continues "problem + prefix steps" with the remaining steps and
// the answer sentence. Three backends exist: the local tabular policy, a
// chat-completions HTTP endpoint, and a content-addressed replay cache that
// answers from disk only.

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mdpo/corpus.hpp"
#include "mdpo/policy.hpp"

namespace mdpo {

enum class GeneratorKind { kLocalPolicy, kHttpEndpoint, kReplayCache };

const char* GeneratorKindName(GeneratorKind kind);

struct GenerationRequest {
  std::string prompt;
  std::vector<Step> prefix;  // starts with the guidance step
  SamplingConfig sampling;
  int sample_index = 0;
};

// Digest identifying a request in the replay cache.
std::string RequestDigest(const GenerationRequest& request);

class Generator {
 public:
  virtual ~Generator() = default;

  virtual GeneratorKind kind() const = 0;

  // Continuation text starting at the next "[Step k]" marker. Throws
  // GeneratorError when the backend cannot answer.
  std::string Complete(const GenerationRequest& request) {
    ++calls_;
    return DoComplete(request);
  }

  std::uint64_t calls() const { return calls_; }

 protected:
  virtual std::string DoComplete(const GenerationRequest& request) = 0;

 private:
  std::uint64_t calls_ = 0;
};

// Samples from a tabular policy. The per-sample seed is seed + sample_index,
// mixed with a hash of the conditioning text.
class LocalPolicyGenerator : public Generator {
 public:
  explicit LocalPolicyGenerator(std::shared_ptr<const PolicyParams> params)
      : params_(std::move(params)) {}

  GeneratorKind kind() const override { return GeneratorKind::kLocalPolicy; }

 protected:
  std::string DoComplete(const GenerationRequest& request) override;

 private:
  std::shared_ptr<const PolicyParams> params_;
};

struct HttpConfig {
  std::string endpoint;  // http://host:port/path
  std::string model = "default";
  std::string auth_env;  // name of the environment variable holding a bearer token
  int timeout_ms = 30000;
  int max_retries = 3;
  int backoff_ms = 200;
};

// Chat-completions style POST {model, messages, temperature, max_tokens, seed}.
class HttpGenerator : public Generator {
 public:
  explicit HttpGenerator(HttpConfig config);

  GeneratorKind kind() const override { return GeneratorKind::kHttpEndpoint; }

  // The user message sent for a request; exposed for tests.
  static std::string RenderUserMessage(const GenerationRequest& request);

 protected:
  std::string DoComplete(const GenerationRequest& request) override;

 private:
  HttpConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

// Reads <dir>/<digest>.json. When constructed with an upstream generator it
// fills misses from upstream and records them; otherwise a miss throws
// GeneratorError(kCacheMiss) and no network call is ever made.
class ReplayCacheGenerator : public Generator {
 public:
  explicit ReplayCacheGenerator(std::string dir, std::unique_ptr<Generator> upstream = nullptr);

  GeneratorKind kind() const override { return GeneratorKind::kReplayCache; }

  std::uint64_t hits() const { return hits_; }

 protected:
  std::string DoComplete(const GenerationRequest& request) override;

 private:
  std::string dir_;
  std::unique_ptr<Generator> upstream_;
  std::uint64_t hits_ = 0;
};

// One continuation for the given sample index, segmented. Unsegmentable
// output becomes a solution with no steps and no answer.
Solution SampleOnePath(Generator& gen, const std::string& prompt, const std::vector<Step>& prefix,
                       const SamplingConfig& sampling, int sample_index);

// k >= 2 continuations with sample indices 0..k-1.
std::vector<Solution> SamplePaths(Generator& gen, const std::string& prompt,
                                  const std::vector<Step>& prefix, const SamplingConfig& sampling,
                                  int k);

// Segments a continuation whose first marker is [Step first_index].
Solution ParseContinuation(const std::string& text, int first_index);

}  // namespace mdpo
