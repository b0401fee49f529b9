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
#include "mdpo/generator.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "mdpo/digest.hpp"
#include "mdpo/error.hpp"
#include "mdpo/random.hpp"

namespace mdpo {
namespace {

using json = nlohmann::json;

constexpr const char* kSystemPrompt =
    "Solve the arithmetic problem step by step. Write \"[Step i]\" before every step, "
    "put exactly one binary operation in each step as \"a op b=c\", and end with "
    "\"The answer is <number>.\" Continue from the steps already given.";

std::string TrimLeft(std::string s) {
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

json RequestJson(const GenerationRequest& request) {
  json prefix = json::array();
  for (const Step& s : request.prefix) prefix.push_back(s.text);
  return {{"prompt", request.prompt},
          {"prefix", prefix},
          {"temperature", request.sampling.temperature},
          {"seed", request.sampling.seed},
          {"max_tokens", request.sampling.max_tokens},
          {"sample_index", request.sample_index}};
}

}  // namespace

const char* GeneratorKindName(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::kLocalPolicy: return "local_policy";
    case GeneratorKind::kHttpEndpoint: return "http_endpoint";
    case GeneratorKind::kReplayCache: return "replay_cache";
  }
  return "unknown";
}

std::string RequestDigest(const GenerationRequest& request) {
  return Sha256Hex(RequestJson(request).dump());
}

std::string LocalPolicyGenerator::DoComplete(const GenerationRequest& request) {
  const std::string context = RenderContext(request.prompt, request.prefix);
  const std::vector<int> prompt_tokens = params_->vocab.Encode(context);
  SamplingConfig cfg = request.sampling;
  cfg.seed = MixSeed(request.sampling.seed + static_cast<std::uint64_t>(request.sample_index),
                     Fnv1a64(context));
  const std::vector<int> tokens = Sample(*params_, prompt_tokens, cfg);
  return TrimLeft(params_->vocab.Decode(tokens));
}

HttpGenerator::HttpGenerator(HttpConfig config) : config_(std::move(config)) {
  const std::size_t scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "endpoint must look like http://host:port/path");
  }
  const std::size_t path_begin = config_.endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = config_.endpoint.substr(0, path_begin);
  path_ = path_begin == std::string::npos ? "/v1/chat/completions"
                                          : config_.endpoint.substr(path_begin);
}

std::string HttpGenerator::RenderUserMessage(const GenerationRequest& request) {
  return RenderContext(request.prompt, request.prefix) + "\nContinue from [Step " +
         std::to_string(request.prefix.size()) + "].";
}

std::string HttpGenerator::DoComplete(const GenerationRequest& request) {
  json body = {{"model", config_.model},
               {"messages",
                json::array({{{"role", "system"}, {"content", kSystemPrompt}},
                             {{"role", "user"}, {"content", RenderUserMessage(request)}}})},
               {"temperature", request.sampling.temperature},
               {"max_tokens", request.sampling.max_tokens},
               {"seed", request.sampling.seed + static_cast<std::uint64_t>(request.sample_index)}};
  httplib::Headers headers;
  if (!config_.auth_env.empty()) {
    if (const char* token = std::getenv(config_.auth_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }
  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  std::string last_error;
  const int attempts = config_.max_retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
    }
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw GeneratorError(ErrorCode::kGenerator, "HTTP " + std::to_string(res->status) + ": " +
                                                      res->body.substr(0, 200),
                           attempt + 1, false);
    }
    try {
      const json reply = json::parse(res->body);
      return TrimLeft(reply.at("choices").at(0).at("message").at("content").get<std::string>());
    } catch (const json::exception& ex) {
      throw GeneratorError(ErrorCode::kGenerator, std::string("bad response body: ") + ex.what(),
                           attempt + 1, false);
    }
  }
  throw GeneratorError(ErrorCode::kGenerator,
                       "giving up after " + std::to_string(attempts) + " attempts (" + last_error +
                           ")",
                       attempts, true);
}

ReplayCacheGenerator::ReplayCacheGenerator(std::string dir, std::unique_ptr<Generator> upstream)
    : dir_(std::move(dir)), upstream_(std::move(upstream)) {
  if (upstream_) std::filesystem::create_directories(dir_);
}

std::string ReplayCacheGenerator::DoComplete(const GenerationRequest& request) {
  const std::string digest = RequestDigest(request);
  const std::filesystem::path file = std::filesystem::path(dir_) / (digest + ".json");
  if (std::ifstream in(file, std::ios::binary); in) {
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
      ++hits_;
      return json::parse(data).at("response").get<std::string>();
    } catch (const json::exception& ex) {
      throw ParseError("replay entry " + file.string() + ": " + ex.what());
    }
  }
  if (!upstream_) {
    throw GeneratorError(ErrorCode::kCacheMiss, "no replay entry " + digest);
  }
  const std::string response = upstream_->Complete(request);
  const json entry = {{"request", RequestJson(request)}, {"response", response}};
  const std::filesystem::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << entry.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, file);
  return response;
}

Solution ParseContinuation(const std::string& text, int first_index) {
  try {
    return ParseSolution(text, first_index);
  } catch (const Error& ex) {
    if (ex.code() == ErrorCode::kMalformedAnswer) {
      // Steps are fine but the answer sentence is not; keep the steps.
      try {
        Solution partial;
        partial.steps = SegmentSteps(text, first_index);
        partial.raw_text = text;
        return partial;
      } catch (const Error&) {
      }
    } else if (ex.code() != ErrorCode::kMalformedSolution) {
      throw;
    }
  }
  Solution wrong;
  wrong.raw_text = text;
  // A continuation may consist of the answer sentence alone.
  if (text.find("[Step") == std::string::npos) {
    try {
      wrong.final_answer = ExtractFinalAnswer(text);
    } catch (const Error&) {
    }
  }
  return wrong;
}

Solution SampleOnePath(Generator& gen, const std::string& prompt, const std::vector<Step>& prefix,
                       const SamplingConfig& sampling, int sample_index) {
  GenerationRequest request{prompt, prefix, sampling, sample_index};
  const std::string text = gen.Complete(request);
  return ParseContinuation(text, static_cast<int>(prefix.size()));
}

std::vector<Solution> SamplePaths(Generator& gen, const std::string& prompt,
                                  const std::vector<Step>& prefix, const SamplingConfig& sampling,
                                  int k) {
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "k must be >= 2");
  std::vector<Solution> paths;
  paths.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) paths.push_back(SampleOnePath(gen, prompt, prefix, sampling, i));
  return paths;
}

}  // namespace mdpo
