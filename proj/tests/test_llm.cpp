// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <thread>
#include <unistd.h>

#include "diffharness/error.hpp"
#include "diffharness/llm.hpp"
#include "diffharness/prompts.hpp"

using namespace diffharness;
using namespace std::chrono_literals;

namespace {

std::filesystem::path
scratch(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / fmt::format("dh_llm_{}_{}", name, ::getpid());
    std::filesystem::remove_all(dir);
    return dir;
}

class CountingTransport : public Transport {
  public:
    explicit CountingTransport(std::vector<HttpResponse> script) : script_(std::move(script)) {}
    HttpResponse post(const std::string& url, const Headers& headers, const std::string& body) override
    {
        last_url = url;
        last_headers = headers;
        last_body = body;
        const auto i = calls++;
        return i < script_.size() ? script_[i] : HttpResponse{500, "exhausted"};
    }
    std::size_t calls = 0;
    std::string last_url, last_body;
    Headers last_headers;

  private:
    std::vector<HttpResponse> script_;
};

std::string
completion_body(const std::string& text)
{
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

ProviderConfig
config(ProviderMode mode, const std::filesystem::path& dir)
{
    ProviderConfig c;
    c.mode = mode;
    c.fixtures_dir = dir;
    c.api_key = mode == ProviderMode::Replay ? "" : "test-key";
    c.backoff = 10ms;
    return c;
}

} // namespace

TEST(Canonical, SortedKeysAndStableHash)
{
    auto r = PromptRequest::user("sys", "  spaced\ttext \n", "m");
    EXPECT_EQ(canonicalize(r), R"({"messages":[{"content":"  spaced\ttext \n","role":"user"}],"model":"m","system":"sys"})");
    EXPECT_EQ(request_hash(r), sha256_hex(canonicalize(r)));
    EXPECT_EQ(request_hash(r).size(), 64u);
    EXPECT_NE(request_hash(r), request_hash(PromptRequest::user("sys", " spaced\ttext \n", "m")));
    // Known digest of the empty string.
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Replay, SeededFixtureIsReturned)
{
    const auto dir = scratch("replay");
    auto request = PromptRequest::user("s", "what does RSH do?", "gpt-4o");
    FixtureStore(dir).put(request_hash(request), "RSH shifts right");
    LlmProvider provider(config(ProviderMode::Replay, dir), nullptr);
    EXPECT_EQ(provider.complete(request), "RSH shifts right");
    std::filesystem::remove_all(dir);
}

TEST(Replay, MissIsHardError)
{
    const auto dir = scratch("miss");
    auto transport = std::make_shared<CountingTransport>(std::vector<HttpResponse>{{200, completion_body("x")}});
    LlmProvider provider(config(ProviderMode::Replay, dir), transport);
    try {
        provider.complete(PromptRequest::user("s", "unseen"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::FixtureMiss);
    }
    EXPECT_EQ(transport->calls, 0u);
}

TEST(Replay, EmptyModelIsStampedBeforeHashing)
{
    const auto dir = scratch("stamp");
    FixtureStore(dir).put(request_hash(PromptRequest::user("s", "q", default_model)), "answer");
    LlmProvider provider(config(ProviderMode::Replay, dir), nullptr);
    EXPECT_EQ(provider.complete(PromptRequest::user("s", "q")), "answer");
    std::filesystem::remove_all(dir);
}

TEST(Record, ThenReplayIsByteIdentical)
{
    const auto dir = scratch("record");
    const std::string text = "1. first\n2. second \xe2\x9c\x93\n\n";
    auto transport = std::make_shared<CountingTransport>(std::vector<HttpResponse>{{200, completion_body(text)}});
    auto request = PromptRequest::user("sys", "list things");
    {
        LlmProvider recorder(config(ProviderMode::Record, dir), transport);
        EXPECT_EQ(recorder.complete(request), text);
    }
    EXPECT_EQ(transport->calls, 1u);
    EXPECT_EQ(transport->last_url, "https://api.openai.com/v1/chat/completions");
    auto body = nlohmann::json::parse(transport->last_body);
    EXPECT_EQ(body.at("model"), default_model);
    EXPECT_EQ(body.at("messages").at(0).at("role"), "system");
    EXPECT_FALSE(body.contains("temperature"));

    auto failing = std::make_shared<CountingTransport>(std::vector<HttpResponse>{});
    LlmProvider replay(config(ProviderMode::Replay, dir), failing);
    EXPECT_EQ(replay.complete(request), text);
    EXPECT_EQ(failing->calls, 0u);
    std::filesystem::remove_all(dir);
}

TEST(Live, RetriesWithBackoff)
{
    auto transport = std::make_shared<CountingTransport>(
        std::vector<HttpResponse>{{429, "slow down"}, {503, "busy"}, {200, completion_body("ok")}});
    std::vector<std::chrono::milliseconds> sleeps;
    LlmProvider provider(config(ProviderMode::Live, {}), transport, [&](auto d) { sleeps.push_back(d); });
    EXPECT_EQ(provider.complete(PromptRequest::user("s", "q")), "ok");
    EXPECT_EQ(transport->calls, 3u);
    EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{10ms, 20ms}));
}

TEST(Live, GivesUpAfterThreeAttempts)
{
    auto transport = std::make_shared<CountingTransport>(
        std::vector<HttpResponse>{{500, "a"}, {500, "b"}, {500, "c"}, {200, completion_body("late")}});
    LlmProvider provider(config(ProviderMode::Live, {}), transport, [](auto) {});
    try {
        provider.complete(PromptRequest::user("s", "q"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::ProviderHttpError);
        EXPECT_NE(std::string(e.what()).find("500"), std::string::npos);
    }
    EXPECT_EQ(transport->calls, 3u);
}

TEST(Live, ClientErrorsAreNotRetried)
{
    auto transport = std::make_shared<CountingTransport>(std::vector<HttpResponse>{{401, "bad key"}});
    LlmProvider provider(config(ProviderMode::Live, {}), transport, [](auto) {});
    EXPECT_THROW(provider.complete(PromptRequest::user("s", "q")), Error);
    EXPECT_EQ(transport->calls, 1u);
}

TEST(Live, MissingApiKey)
{
    ::unsetenv(api_key_env);
    auto c = config(ProviderMode::Live, {});
    c.api_key.clear();
    try {
        LlmProvider provider(c, std::make_shared<CountingTransport>(std::vector<HttpResponse>{}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::ProviderConfig);
        EXPECT_NE(std::string(e.what()).find(api_key_env), std::string::npos);
    }
}

TEST(Live, MalformedBody)
{
    EXPECT_THROW(parse_chat_completion("{\"choices\": []}"), Error);
    EXPECT_THROW(parse_chat_completion("not json"), Error);
    EXPECT_EQ(parse_chat_completion(completion_body("x")), "x");
}

TEST(Live, InFlightIsBounded)
{
    class SlowTransport : public Transport {
      public:
        HttpResponse post(const std::string&, const Headers&, const std::string&) override
        {
            const int now = ++active;
            int seen = peak.load();
            while (now > seen && !peak.compare_exchange_weak(seen, now)) {
            }
            std::this_thread::sleep_for(20ms);
            --active;
            return {200, completion_body("ok")};
        }
        std::atomic<int> active{0}, peak{0};
    };
    auto transport = std::make_shared<SlowTransport>();
    auto c = config(ProviderMode::Live, {});
    c.max_in_flight = 2;
    LlmProvider provider(c, transport);
    std::vector<std::jthread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&provider, i] { provider.complete(PromptRequest::user("s", std::to_string(i))); });
    }
    threads.clear();
    EXPECT_LE(transport->peak.load(), 2);
    EXPECT_GE(transport->peak.load(), 1);
}

TEST(HttpTransportTest, TalksToLocalServer)
{
    httplib::Server server;
    std::string seen_auth, seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        res.set_content(completion_body("from server"), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread runner([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto c = config(ProviderMode::Live, {});
    c.endpoint = fmt::format("http://127.0.0.1:{}/v1/", port);
    LlmProvider provider(c, std::make_shared<HttpTransport>(5s));
    EXPECT_EQ(provider.complete(PromptRequest::user("s", "hello")), "from server");
    server.stop();
    runner.join();
    EXPECT_EQ(seen_auth, "Bearer test-key");
    EXPECT_EQ(nlohmann::json::parse(seen_body).at("messages").at(1).at("content"), "hello");
}

TEST(HttpTransportTest, ConnectionRefusedIsStatusZero)
{
    HttpTransport transport(1s);
    auto r = transport.post("http://127.0.0.1:1/v1/chat/completions", {}, "{}");
    EXPECT_EQ(r.status, 0);
}

TEST(Prompts, TaskTagsRoundTrip)
{
    auto r = prompts::extract_constraints("doc", "RSH");
    EXPECT_EQ(prompts::task_of(r), prompts::Task::ExtractConstraints);
    EXPECT_EQ(prompts::task_of(PromptRequest::user("no tag", "x")), std::nullopt);
    auto blocks = prompts::tagged_blocks("<a>one</a> junk <a>two</a><b>x</b>", "a");
    EXPECT_EQ(blocks, (std::vector<std::string>{"one", "two"}));
}
