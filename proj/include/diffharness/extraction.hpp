// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Builds per-instruction context bundles from a specification document,
// implementation source trees and historical bug reports.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffharness/llm.hpp"
#include "diffharness/prompts.hpp"
#include "diffharness/test_case.hpp"

namespace diffharness {

struct BugCategory {
    std::string name;
    std::string description;

    friend bool operator==(const BugCategory&, const BugCategory&) = default;
};

struct BugReport {
    std::string title;
    std::string body;
};

struct ContextBundle {
    std::string mnemonic;
    std::vector<std::string> constraints;
    std::map<std::string, std::string> code_snippets;     // runtime id -> excerpt
    std::map<std::string, std::string> code_descriptions; // runtime id -> description
    std::vector<std::string> code_diffs;
    std::vector<std::string> desc_diffs;
    std::vector<BugCategory> bug_categories;
    std::vector<std::string> example_tests;
    // Per-tree problems that did not stop extraction, e.g. "ubpf: NoCandidateFiles".
    std::vector<std::string> notes;

    friend bool operator==(const ContextBundle&, const ContextBundle&) = default;
};

nlohmann::json to_json(const ContextBundle& bundle);
ContextBundle bundle_from_json(const nlohmann::json& j);

// --- Completion parsing ---------------------------------------------------

// Items of a numbered ("1." / "1)") or bulleted ("-", "*", "+") list. Lines
// before the first enumerator are dropped; unmarked lines after it continue
// the current item. Without any enumerator every non-empty line is an item.
std::vector<std::string> parse_list(std::string_view completion);

// Bodies of ``` fenced blocks, in order.
std::vector<std::string> code_blocks(std::string_view completion);

// parse_list, except a sole "No differences" style answer yields no items.
std::vector<std::string> parse_differences(std::string_view completion);

// --- Operations -----------------------------------------------------------

struct InstructionList {
    std::vector<std::string> mnemonics; // canonical upper-case names, first-seen order
    std::vector<std::string> unknown;   // names not in the opcode table
};

// Throws Error{EmptyExtraction} for a blank document or when no known
// instruction is named.
InstructionList extract_instructions(std::string_view document, CompletionProvider& llm);

// Throws Error{PreconditionViolated} for names outside the opcode table and
// Error{EmptyExtraction} when the completion lists nothing.
std::vector<std::string>
extract_constraints(std::string_view document, std::string_view mnemonic, CompletionProvider& llm);

// Identifier segments that mark code handling `mnemonic`, e.g. "RSH" matches
// BPF_RSH and EBPF_OP_RSH_IMM.
std::vector<std::string> opcode_keywords(std::string_view mnemonic);

inline constexpr std::size_t default_candidate_cap = 96 * 1024;

// Files under `root` mentioning one of the mnemonic's keywords, most hits
// first, whole files while they fit `cap` bytes in total. A file that alone
// exceeds the cap contributes only the lines around its hits. Paths are
// relative to `root`. Throws Error{NoCandidateFiles}.
std::vector<prompts::SourceFile>
candidate_files(const std::filesystem::path& root, std::string_view mnemonic, std::size_t cap = default_candidate_cap);

// True when `excerpt` (ignoring surrounding blank lines) occurs verbatim in
// some file under `root`.
bool excerpt_in_tree(const std::filesystem::path& root, std::string_view excerpt);

// Throws Error{NoCandidateFiles | HallucinatedExcerpt}.
std::string extract_code_snippet(
    const std::filesystem::path& root,
    std::span<const std::string> constraints,
    std::string_view mnemonic,
    CompletionProvider& llm);

// Throws Error{PreconditionViolated} when either snippet is empty.
std::vector<std::string>
diff_code(std::string_view mnemonic, const prompts::NamedText& a, const prompts::NamedText& b, CompletionProvider& llm);

std::string describe_code(std::string_view mnemonic, std::string_view snippet, CompletionProvider& llm);

// Identical descriptions short-circuit to an empty list without a prompt.
std::vector<std::string> diff_descriptions(
    std::string_view mnemonic, const prompts::NamedText& a, const prompts::NamedText& b, CompletionProvider& llm);

// Items are "<name>: <description>". Throws Error{PreconditionViolated} for
// no reports and Error{UnparseableCategories} when no item has that shape.
std::vector<BugCategory> categorize_bugs(std::span<const BugReport> reports, CompletionProvider& llm);

// JSON array of {"title", "body"}. Throws Error{InvalidInput}.
std::vector<BugReport> load_bug_reports(const std::filesystem::path& path);

// --- Whole-pipeline driver ------------------------------------------------

struct SourceTree {
    std::string runtime_id;
    std::filesystem::path root;
};

struct ExtractionInputs {
    std::string spec_text;
    std::vector<SourceTree> trees;
    std::vector<BugReport> bugs;
    Corpus corpus; // human-written tests for the instruction map
};

struct ExtractionResult {
    InstructionList instructions;
    std::vector<ContextBundle> bundles; // in instruction order
    std::vector<BugCategory> bug_categories;
    InstructionMap instruction_map;
};

// Per-mnemonic work runs on up to `parallelism` threads; the result does not
// depend on scheduling. Provider errors propagate.
ExtractionResult extract_context(const ExtractionInputs& inputs, CompletionProvider& llm, int parallelism = 4);

// Writes <MNEMONIC>.json per bundle and coverage.json.
void write_context(const ExtractionResult& result, const std::filesystem::path& dir);

// Reads every <MNEMONIC>.json (coverage.json excluded), sorted by mnemonic.
std::vector<ContextBundle> load_context(const std::filesystem::path& dir);

} // namespace diffharness
