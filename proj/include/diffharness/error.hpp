// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace diffharness {

enum class Errc {
    // Assembly / encoding.
    UnknownMnemonic,
    BadRegister,
    ImmediateOutOfRange,
    UnresolvedLabel,
    SyntaxError,
    JumpOutOfRange,
    TruncatedInput,
    UnknownOpcode,
    MalformedLddwPair,
    MalformedInstruction,
    // Test files and corpora.
    MissingAsmSection,
    BothResultAndError,
    NeitherResultNorError,
    BadMemHex,
    BadResultLiteral,
    DuplicateTestName,
    // Runtimes.
    PluginNotFound,
    SpawnFailure,
    UnknownRuntime,
    // LLM provider.
    ProviderHttpError,
    FixtureMiss,
    ProviderConfig,
    // Extraction and generation.
    EmptyExtraction,
    PreconditionViolated,
    NoCandidateFiles,
    HallucinatedExcerpt,
    UnparseableCategories,
    MissingContext,
    UnparseableTest,
    // Metrics.
    IncompleteMatrix,
    // Generic input problems (bad paths, malformed JSON, ...).
    InvalidInput,
};

std::string_view errc_name(Errc code);

// Every failure in the library is reported as an Error carrying a machine
// readable code; parse errors additionally carry the 1-based source line.
class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string& message, std::optional<int> line = std::nullopt);

    Errc code() const noexcept { return code_; }
    std::optional<int> line() const noexcept { return line_; }

    // Message without the "line N:" prefix.
    const std::string& detail() const noexcept { return detail_; }

  private:
    Errc code_;
    std::optional<int> line_;
    std::string detail_;
};

// Error raised by the provider layer; the CLI maps these to exit code 2.
inline bool is_provider_error(Errc code)
{
    return code == Errc::ProviderHttpError || code == Errc::FixtureMiss || code == Errc::ProviderConfig;
}

} // namespace diffharness
