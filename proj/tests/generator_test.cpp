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
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "mdpo/error.hpp"
#include "mdpo/generator.hpp"

namespace {

using nlohmann::json;

std::string TempDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mdpo_gen_" + name);
  std::filesystem::remove_all(dir);
  return dir.string();
}

mdpo::GenerationRequest Request(int index = 0) {
  mdpo::GenerationRequest r;
  r.prompt = "Compute ((3+4)*2).";
  r.prefix = {mdpo::GuidanceStep()};
  r.sampling = mdpo::SamplingConfig{0.7, 11, 64};
  r.sample_index = index;
  return r;
}

// Chat-completions stand-in. The first `failures` requests get HTTP 503.
class FakeEndpoint {
 public:
  explicit FakeEndpoint(int failures, int status_after = 200) : failures_(failures) {
    server_.Post("/v1/chat/completions", [this, status_after](const httplib::Request& req,
                                                              httplib::Response& res) {
      const int n = requests_++;
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = req.body;
      if (n < failures_) {
        res.status = 503;
        return;
      }
      res.status = status_after;
      json reply = {{"choices", json::array({{{"message",
                                               {{"role", "assistant"},
                                                {"content", " [Step 1] 3+4=7 [Step 2] 7*2=14. The answer is 14."}}}}})}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  int requests() const { return requests_; }
  const std::string& last_auth() const { return last_auth_; }
  const std::string& last_body() const { return last_body_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  int failures_;
  std::atomic<int> requests_{0};
  std::string last_auth_;
  std::string last_body_;
};

mdpo::HttpConfig Config(const std::string& url) {
  mdpo::HttpConfig c;
  c.endpoint = url;
  c.model = "test-model";
  c.auth_env = "MDPO_TEST_TOKEN";
  c.timeout_ms = 2000;
  c.max_retries = 3;
  c.backoff_ms = 1;
  return c;
}

}  // namespace

TEST_CASE("local generator is a pure function of the request") {
  const mdpo::Vocabulary v;
  const auto prompt = v.Encode("Compute ((3+4)*2). Let's think step by step.");
  auto completion = v.Encode(" [Step 1] 3+4=7 [Step 2] 7*2=14. The answer is 14.");
  completion.push_back(v.terminator());
  auto params = std::make_shared<const mdpo::PolicyParams>(
      mdpo::SftFit(std::vector<mdpo::TokenizedExample>(3, {prompt, completion}), 6, 0.5, true));
  mdpo::LocalPolicyGenerator a(params);
  mdpo::LocalPolicyGenerator b(params);
  for (int i = 0; i < 5; ++i) CHECK(a.Complete(Request(i)) == b.Complete(Request(i)));
  CHECK(a.calls() == 5);
  auto greedy = Request();
  greedy.sampling.temperature = 0.0;
  CHECK(a.Complete(greedy) == "[Step 1] 3+4=7 [Step 2] 7*2=14. The answer is 14.");
  const auto paths = mdpo::SamplePaths(a, greedy.prompt, greedy.prefix, greedy.sampling, 3);
  REQUIRE(paths.size() == 3);
  CHECK(*paths[0].final_answer == 14);
  CHECK_THROWS_AS(mdpo::SamplePaths(a, greedy.prompt, greedy.prefix, greedy.sampling, 1), mdpo::Error);
}

TEST_CASE("request digest depends on every request field") {
  const std::string base = mdpo::RequestDigest(Request(0));
  CHECK(base.size() == 64);
  CHECK(mdpo::RequestDigest(Request(0)) == base);
  CHECK(mdpo::RequestDigest(Request(1)) != base);
  auto r = Request(0);
  r.sampling.temperature = 0.2;
  CHECK(mdpo::RequestDigest(r) != base);
  r = Request(0);
  r.prefix.push_back(mdpo::Step{1, "3+4=7", mdpo::StepKind::kArithmetic});
  CHECK(mdpo::RequestDigest(r) != base);
}

TEST_CASE("http generator posts chat requests with the bearer token") {
  FakeEndpoint endpoint(0);
  setenv("MDPO_TEST_TOKEN", "secret-token", 1);
  mdpo::HttpGenerator gen(Config(endpoint.url()));
  const std::string text = gen.Complete(Request(2));
  CHECK(text == "[Step 1] 3+4=7 [Step 2] 7*2=14. The answer is 14.");
  CHECK(endpoint.last_auth() == "Bearer secret-token");
  const json body = json::parse(endpoint.last_body());
  CHECK(body["model"] == "test-model");
  CHECK(body["messages"].size() == 2);
  CHECK(body["messages"][1]["content"] == mdpo::HttpGenerator::RenderUserMessage(Request(2)));
  CHECK(body["seed"] == 13);
  CHECK(body["max_tokens"] == 64);
  unsetenv("MDPO_TEST_TOKEN");
}

TEST_CASE("http generator retries transient failures") {
  FakeEndpoint endpoint(2);
  mdpo::HttpGenerator gen(Config(endpoint.url()));
  CHECK(gen.Complete(Request()).rfind("[Step 1]", 0) == 0);
  CHECK(endpoint.requests() == 3);
}

TEST_CASE("http generator gives up after the retry budget") {
  FakeEndpoint endpoint(100);
  mdpo::HttpGenerator gen(Config(endpoint.url()));
  try {
    gen.Complete(Request());
    FAIL("expected GeneratorError");
  } catch (const mdpo::GeneratorError& ex) {
    CHECK(ex.retryable());
    CHECK(ex.attempts() == 4);
    CHECK(ex.code() == mdpo::ErrorCode::kGenerator);
  }
  CHECK(endpoint.requests() == 4);
}

TEST_CASE("http generator does not retry client errors") {
  FakeEndpoint endpoint(0, 400);
  mdpo::HttpGenerator gen(Config(endpoint.url()));
  try {
    gen.Complete(Request());
    FAIL("expected GeneratorError");
  } catch (const mdpo::GeneratorError& ex) {
    CHECK_FALSE(ex.retryable());
  }
  CHECK(endpoint.requests() == 1);
}

TEST_CASE("http generator reports unreachable endpoints") {
  auto cfg = Config("http://127.0.0.1:1/v1/chat/completions");
  cfg.max_retries = 1;
  cfg.timeout_ms = 200;
  mdpo::HttpGenerator gen(cfg);
  CHECK_THROWS_AS(gen.Complete(Request()), mdpo::GeneratorError);
  CHECK_THROWS_AS(mdpo::HttpGenerator(mdpo::HttpConfig{}), mdpo::Error);
}

TEST_CASE("replay cache records and replays without the network") {
  const std::string dir = TempDir("replay");
  FakeEndpoint endpoint(0);
  {
    mdpo::ReplayCacheGenerator recorder(dir, std::make_unique<mdpo::HttpGenerator>(Config(endpoint.url())));
    recorder.Complete(Request(0));
    recorder.Complete(Request(1));
  }
  CHECK(endpoint.requests() == 2);
  mdpo::ReplayCacheGenerator replay(dir);
  CHECK(replay.Complete(Request(0)) == "[Step 1] 3+4=7 [Step 2] 7*2=14. The answer is 14.");
  CHECK(replay.Complete(Request(1)).size() > 0);
  CHECK(replay.hits() == 2);
  CHECK(endpoint.requests() == 2);
  try {
    replay.Complete(Request(7));
    FAIL("expected a cache miss");
  } catch (const mdpo::GeneratorError& ex) {
    CHECK(ex.code() == mdpo::ErrorCode::kCacheMiss);
  }
  CHECK(endpoint.requests() == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("continuation parsing") {
  const auto ok = mdpo::ParseContinuation("[Step 2] 7*2=14. The answer is 14.", 2);
  REQUIRE(ok.steps.size() == 1);
  CHECK(ok.steps[0].index == 2);
  CHECK(*ok.final_answer == 14);

  const auto bad_answer = mdpo::ParseContinuation("[Step 1] 3+4=7. The answer is seven.", 1);
  CHECK(bad_answer.steps.size() == 1);
  CHECK_FALSE(bad_answer.final_answer.has_value());

  const auto garbage = mdpo::ParseContinuation("3+4=7 7*2", 1);
  CHECK(garbage.steps.empty());
  CHECK_FALSE(garbage.final_answer.has_value());

  const auto answer_only = mdpo::ParseContinuation("The answer is 14.", 3);
  CHECK(answer_only.steps.empty());
  CHECK(*answer_only.final_answer == 14);

  const auto wrong_index = mdpo::ParseContinuation("[Step 3] 1+1=2. The answer is 2.", 1);
  CHECK(wrong_index.steps.empty());
}
