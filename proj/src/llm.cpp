// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffharness/llm.hpp"

#include <atomic>
#include <cstdlib>
#include <fmt/format.h>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <sstream>
#include <thread>

#include "diffharness/error.hpp"

namespace diffharness {

using nlohmann::json;

PromptRequest
PromptRequest::user(std::string system, std::string content, std::string model)
{
    PromptRequest r;
    r.system = std::move(system);
    r.messages.push_back({"user", std::move(content)});
    r.model = std::move(model);
    return r;
}

std::string
canonicalize(const PromptRequest& request)
{
    // nlohmann::json objects are std::map backed, so keys come out sorted.
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back(json{{"role", m.role}, {"content", m.content}});
    }
    json doc{{"system", request.system}, {"messages", messages}, {"model", request.model}};
    return doc.dump(-1, ' ', false, json::error_handler_t::strict);
}

std::string
sha256_hex(std::string_view data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("EVP_Digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < length; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0x0f]);
    }
    return out;
}

std::string
request_hash(const PromptRequest& request)
{
    return sha256_hex(canonicalize(request));
}

FixtureStore::FixtureStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::optional<std::string>
FixtureStore::get(const std::string& hash) const
{
    std::shared_lock lock(mutex_);
    std::ifstream in(dir_ / hash, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void
FixtureStore::put(const std::string& hash, const std::string& text)
{
    static std::atomic<unsigned> counter{0};
    std::unique_lock lock(mutex_);
    std::filesystem::create_directories(dir_);
    auto tmp = dir_ / fmt::format(".{}.tmp{}", hash, counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) {
            throw Error(Errc::InvalidInput, fmt::format("cannot write fixture {}", tmp.string()));
        }
    }
    std::filesystem::rename(tmp, dir_ / hash);
}

std::optional<ProviderMode>
provider_mode_from_string(std::string_view s)
{
    if (s == "live") {
        return ProviderMode::Live;
    }
    if (s == "record") {
        return ProviderMode::Record;
    }
    if (s == "replay") {
        return ProviderMode::Replay;
    }
    return std::nullopt;
}

std::string_view
to_string(ProviderMode mode)
{
    switch (mode) {
    case ProviderMode::Live: return "live";
    case ProviderMode::Record: return "record";
    case ProviderMode::Replay: return "replay";
    }
    return "?";
}

std::string
chat_completion_body(const PromptRequest& request)
{
    json messages = json::array();
    if (!request.system.empty()) {
        messages.push_back(json{{"role", "system"}, {"content", request.system}});
    }
    for (const auto& m : request.messages) {
        messages.push_back(json{{"role", m.role}, {"content", m.content}});
    }
    return json{{"model", request.model}, {"messages", messages}}.dump();
}

std::string
parse_chat_completion(const std::string& body)
{
    try {
        auto doc = json::parse(body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(Errc::ProviderHttpError, fmt::format("malformed completion response: {}", e.what()));
    }
}

LlmProvider::LlmProvider(ProviderConfig config, std::shared_ptr<Transport> transport, Sleeper sleeper)
    : config_(std::move(config)), transport_(std::move(transport)), sleeper_(std::move(sleeper)),
      in_flight_(std::max(1, config_.max_in_flight))
{
    if (!sleeper_) {
        sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
    if (config_.mode != ProviderMode::Live) {
        store_ = std::make_unique<FixtureStore>(config_.fixtures_dir);
    }
    if (config_.mode == ProviderMode::Replay) {
        // Replay never needs a transport; drop it so no code path can use it.
        transport_.reset();
        return;
    }
    if (config_.api_key.empty()) {
        if (const char* key = std::getenv(api_key_env); key != nullptr) {
            config_.api_key = key;
        }
    }
    if (config_.api_key.empty()) {
        throw Error(
            Errc::ProviderConfig,
            fmt::format("{} mode requires an API key in the {} environment variable", to_string(config_.mode),
                        api_key_env));
    }
    if (!transport_) {
        throw Error(Errc::ProviderConfig, "no transport configured");
    }
}

std::string
LlmProvider::complete(const PromptRequest& request)
{
    if (request.messages.empty()) {
        throw Error(Errc::PreconditionViolated, "prompt request has no messages");
    }
    PromptRequest stamped = request;
    if (stamped.model.empty()) {
        stamped.model = config_.model;
    }
    const std::string hash = request_hash(stamped);

    if (config_.mode == ProviderMode::Replay) {
        if (auto text = store_->get(hash)) {
            return *text;
        }
        throw Error(Errc::FixtureMiss, fmt::format("no recorded completion for request {}", hash));
    }
    std::string text = complete_live(stamped);
    if (config_.mode == ProviderMode::Record) {
        store_->put(hash, text);
    }
    return text;
}

std::string
LlmProvider::complete_live(const PromptRequest& request)
{
    struct Slot {
        std::counting_semaphore<>& sem;
        explicit Slot(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
        ~Slot() { sem.release(); }
    } slot(in_flight_);

    std::string url = config_.endpoint;
    while (!url.empty() && url.back() == '/') {
        url.pop_back();
    }
    url += "/chat/completions";
    const Headers headers = {
        {"Authorization", "Bearer " + config_.api_key},
        {"Content-Type", "application/json"},
    };
    const std::string body = chat_completion_body(request);

    HttpResponse last;
    const int attempts = std::max(1, config_.max_attempts);
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            sleeper_(config_.backoff * (1 << (attempt - 1)));
        }
        last = transport_->post(url, headers, body);
        if (last.status == 200) {
            return parse_chat_completion(last.body);
        }
        const bool retryable = last.status == 429 || last.status >= 500 || last.status == 0;
        if (!retryable) {
            break;
        }
    }
    throw Error(Errc::ProviderHttpError, fmt::format("HTTP {}: {}", last.status, last.body));
}

} // namespace diffharness
