// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Offline stand-in for a chat model. It answers every pipeline prompt from
// the prompt's own contents with fixed rules, so fixtures can be recorded
// without network access and re-recorded whenever a template changes.
//
// The answers imitate a capable but imperfect model: lists come with prose
// around them, excerpts are copied from the files it was shown, and a fixed
// fraction of written tests is malformed (fewer when guidelines are given).

#include <atomic>
#include <string>

#include "diffharness/llm.hpp"

namespace diffharness::fixture_model {

inline constexpr const char* model_name = "fixture-model-1";

// Descriptions written per describe-tests prompt, whatever the request asks for.
inline constexpr int descriptions_per_answer = 4;

class ScriptedModel : public CompletionProvider {
  public:
    std::string complete(const PromptRequest& request) override;
    std::string model() const override { return model_name; }

    std::atomic<int> calls{0};
};

// Serves ScriptedModel answers in the chat-completions wire format, for
// driving LlmProvider in record mode.
class ScriptedTransport : public Transport {
  public:
    HttpResponse post(const std::string& url, const Headers& headers, const std::string& body) override;

    std::atomic<int> calls{0};

  private:
    ScriptedModel model_;
};

} // namespace diffharness::fixture_model
