// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Two-phase test generation (descriptions, then test code) under the nine
// ablation configurations, plus the two single-phase baselines.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffharness/extraction.hpp"
#include "diffharness/llm.hpp"
#include "diffharness/test_case.hpp"

namespace diffharness {

enum class AblationId {
    ThreeShotRandom,
    TargetSection,
    PromptChain,
    PromptChainInstruct,
    BugCentric,
    CodeDescription,
    CodeDescriptionDiff,
    CodeDiff,
    BugGuidedCodeDiff,
};

std::string_view ablation_name(AblationId id); // "3shot-random", ...
std::optional<AblationId> ablation_from_name(std::string_view name);
std::span<const AblationId> all_ablations();

enum class ExampleSelection { Random, Mapped };

struct AblationConfig {
    AblationId id = AblationId::BugGuidedCodeDiff;
    int descriptions_per_prompt = 10;
    bool single_phase = false;
    bool use_guidelines = false;
    bool use_bug_categories = false;
    bool use_code_descriptions = false;
    bool use_desc_diffs = false;
    bool use_code_diffs = false;
    ExampleSelection examples = ExampleSelection::Mapped;
    int example_count = 3;

    // The context selector for `id`.
    static AblationConfig make(AblationId id);
};

struct TestDescription {
    std::string mnemonic;
    std::string text;
    std::optional<std::string> bug_category;
    std::optional<std::string> code_difference;
};

// Throws Error{MissingContext} when the bundle lacks a field the config uses.
void require_context(const ContextBundle& bundle, const AblationConfig& config);

// The description-phase prompts for one bundle, in order: one per
// (bug category x difference item) combination when both are used, one per
// item when only one is, otherwise one. Throws Error{MissingContext}.
std::vector<PromptRequest> description_prompts(const ContextBundle& bundle, const AblationConfig& config);

// Runs every description prompt, keeping at most descriptions_per_prompt
// items from each.
std::vector<TestDescription>
generate_descriptions(const ContextBundle& bundle, const AblationConfig& config, CompletionProvider& llm);

// Parses a completion holding one test (fenced or bare). Rejects, with
// Error{UnparseableTest} whose detail names the cause, anything that fails
// the test-file parser or the assembler, or has no EXIT.
TestCase parse_generated_test(std::string_view text);

struct GeneratedTest {
    TestCase test;            // name left empty; assigned by run_ablation
    std::string prompt_hash;
};

// Throws Error{UnparseableTest} for a rejected completion.
GeneratedTest generate_test(
    const TestDescription& description,
    std::span<const TestCase> examples,
    std::span<const std::string> guidelines,
    CompletionProvider& llm);

// Guideline file: one guideline per non-empty line; '#' lines are comments
// and list markers are stripped.
std::vector<std::string> load_guidelines(const std::filesystem::path& path);

// Markdown section whose heading names the mnemonic as a whole word, up to
// the next heading of the same or higher level.
std::optional<std::string> find_section(std::string_view document, std::string_view mnemonic);
std::vector<std::string> section_headings(std::string_view document);

struct CampaignInputs {
    std::vector<ContextBundle> bundles;
    Corpus corpus; // human-written tests used as few-shot examples
    std::vector<std::string> guidelines;
    std::string spec_text; // single-phase baselines only
    std::uint64_t seed = 0;
    int parallelism = 4;
};

struct Rejection {
    std::string mnemonic;
    std::string stage; // "description" | "test"
    std::string reason;
};

struct CampaignStats {
    std::map<std::string, int> prompts; // task name -> count
    int completions = 0;               // candidate tests seen
    int accepted = 0;
    int rejected = 0;
    int descriptions = 0;
    int provider_errors = 0;
    std::vector<Rejection> rejections;
    std::map<std::string, std::string> skipped_mnemonics; // mnemonic -> reason
    std::map<std::string, std::string> section_choices;   // target-section only
    std::vector<std::string> random_example_fallbacks;     // no mapped test
};

struct Campaign {
    AblationConfig config;
    Corpus corpus;
    CampaignStats stats;
};

// Never aborts on a per-item failure: rejections, missing context and
// provider errors are counted in the stats. Output order is by mnemonic,
// then prompt, then item.
Campaign run_ablation(const AblationConfig& config, const CampaignInputs& inputs, CompletionProvider& llm);

nlohmann::json to_json(const Campaign& campaign);

} // namespace diffharness
