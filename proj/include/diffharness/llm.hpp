// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Completion providers: a live OpenAI-compatible chat client, a recording
// proxy that persists every completion, and a replay store that never touches
// the network.

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

namespace diffharness {

struct ChatMessage {
    std::string role;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

// Sampling parameters are deliberately absent: requests use provider defaults.
struct PromptRequest {
    std::string system;
    std::vector<ChatMessage> messages;
    std::string model;

    static PromptRequest user(std::string system, std::string content, std::string model = {});
};

// Sorted-key compact JSON, UTF-8, strings preserved byte for byte.
std::string canonicalize(const PromptRequest& request);
// Lowercase hex SHA-256 of canonicalize(request).
std::string request_hash(const PromptRequest& request);
std::string sha256_hex(std::string_view data);

// Abstract completion source used by extraction and generation.
class CompletionProvider {
  public:
    virtual ~CompletionProvider() = default;
    virtual std::string complete(const PromptRequest& request) = 0;
    // Model name stamped into requests that leave it empty.
    virtual std::string model() const = 0;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

class Transport {
  public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const std::string& url, const Headers& headers, const std::string& body) = 0;
};

// cpp-httplib backed transport (http and https).
class HttpTransport : public Transport {
  public:
    explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(300));
    HttpResponse post(const std::string& url, const Headers& headers, const std::string& body) override;

  private:
    std::chrono::seconds timeout_;
};

// One file per request hash; file content is the raw completion text.
class FixtureStore {
  public:
    explicit FixtureStore(std::filesystem::path dir);

    std::optional<std::string> get(const std::string& hash) const;
    // Atomic write (temp file then rename).
    void put(const std::string& hash, const std::string& text);
    const std::filesystem::path& dir() const { return dir_; }

  private:
    std::filesystem::path dir_;
    mutable std::shared_mutex mutex_;
};

enum class ProviderMode { Live, Record, Replay };

std::optional<ProviderMode> provider_mode_from_string(std::string_view s);
std::string_view to_string(ProviderMode mode);

inline constexpr const char* api_key_env = "DIFFHARNESS_API_KEY";
inline constexpr const char* default_model = "gpt-4o";

struct ProviderConfig {
    ProviderMode mode = ProviderMode::Replay;
    std::string endpoint = "https://api.openai.com/v1";
    std::string api_key; // read from DIFFHARNESS_API_KEY when empty
    std::string model = default_model;
    std::filesystem::path fixtures_dir = "fixtures/llm";
    int max_in_flight = 4;
    int max_attempts = 3;
    std::chrono::milliseconds backoff = std::chrono::milliseconds(1000);
};

class LlmProvider : public CompletionProvider {
  public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    // Throws Error{ProviderConfig} when live/record mode has no API key or no
    // transport. Replay mode ignores `transport` entirely.
    LlmProvider(ProviderConfig config, std::shared_ptr<Transport> transport, Sleeper sleeper = {});

    std::string complete(const PromptRequest& request) override;
    std::string model() const override { return config_.model; }

    const ProviderConfig& config() const { return config_; }

  private:
    std::string complete_live(const PromptRequest& request);

    ProviderConfig config_;
    std::shared_ptr<Transport> transport_;
    Sleeper sleeper_;
    std::unique_ptr<FixtureStore> store_;
    std::counting_semaphore<> in_flight_;
};

// Request body for POST {endpoint}/chat/completions.
std::string chat_completion_body(const PromptRequest& request);
// First choice text; throws Error{ProviderHttpError} on malformed bodies.
std::string parse_chat_completion(const std::string& body);

} // namespace diffharness
