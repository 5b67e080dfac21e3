// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Prompt templates for every LLM step of the pipeline. Recorded fixtures are
// keyed by the hash of the rendered request, so any edit here invalidates
// them; bump `version` and re-record (see tools/make_fixtures).

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffharness/llm.hpp"

namespace diffharness::prompts {

inline constexpr int version = 1;

enum class Task {
    ExtractInstructions,
    ExtractConstraints,
    ExtractCode,
    DiffCode,
    DescribeCode,
    DiffDescriptions,
    CategorizeBugs,
    MapTests,
    SelectSection,
    DescribeTests,
    WriteTest,
    DirectTests,
};

std::string_view task_name(Task task);
// Recovers the task from a rendered request (last line of the system prompt).
std::optional<Task> task_of(const PromptRequest& request);

struct SourceFile {
    std::string path;
    std::string content;
};

struct NamedText {
    std::string name;
    std::string text;
};

PromptRequest extract_instructions(std::string_view document);
PromptRequest extract_constraints(std::string_view document, std::string_view mnemonic);
PromptRequest extract_code(
    std::string_view mnemonic, std::span<const std::string> constraints, std::span<const SourceFile> files);
PromptRequest diff_code(std::string_view mnemonic, const NamedText& a, const NamedText& b);
PromptRequest describe_code(std::string_view mnemonic, std::string_view snippet);
PromptRequest diff_descriptions(std::string_view mnemonic, const NamedText& a, const NamedText& b);
PromptRequest categorize_bugs(std::span<const NamedText> reports); // name = title, text = body
PromptRequest map_tests(std::span<const std::string> mnemonics, std::span<const std::string> test_names);
PromptRequest select_section(std::string_view mnemonic, std::span<const std::string> headings);

// Context blocks for the description phase; empty members are omitted.
struct DescriptionContext {
    std::string mnemonic;
    std::vector<std::string> constraints;
    std::optional<NamedText> bug_category;
    std::optional<std::string> code_difference;
    std::vector<NamedText> code_descriptions;
    std::optional<std::string> description_difference;
    int count = 10;
};
PromptRequest describe_tests(const DescriptionContext& context);

PromptRequest write_test(
    std::string_view mnemonic,
    std::string_view description,
    std::span<const std::string> examples,
    std::span<const std::string> guidelines);

// Single-phase baselines: `specification` is the whole document or the
// instruction's section.
PromptRequest direct_tests(
    std::string_view mnemonic, std::string_view specification, std::span<const std::string> examples, int count);

// Returns the body between "<tag...>" and "</tag>" for every occurrence.
// Used by the offline fixture model to read prompts back.
std::vector<std::string> tagged_blocks(std::string_view text, std::string_view tag);

} // namespace diffharness::prompts
