// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Conformance test files and corpora. File layout, one test per file:
//
//   # provenance: generated        (optional header comments)
//   -- asm
//   ldxw %r0, [%r1]
//   exit
//   -- mem
//   00 00 00 00
//   -- result
//   0x0
//
// Exactly one of "-- result" / "-- error" is present.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "diffharness/isa.hpp"

namespace diffharness {

class CompletionProvider;

enum class ProvenanceKind { Human, Generated, Fuzzed };

struct Provenance {
    ProvenanceKind kind = ProvenanceKind::Human;
    std::string ablation;    // Generated
    std::uint64_t seed = 0;  // Fuzzed
    std::string mnemonic;    // Generated: target instruction family
    std::string description; // Generated: single-line test description
    std::string prompt_hash; // Generated: hash of the test-code prompt

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct TestCase {
    std::string name;
    std::string asm_text;
    std::optional<std::vector<std::uint8_t>> mem;
    std::optional<std::uint64_t> expected_result;
    std::optional<std::string> expected_error;
    Provenance provenance;

    friend bool operator==(const TestCase&, const TestCase&) = default;
};

// Throws Error{MissingAsmSection | BothResultAndError | NeitherResultNorError
// | BadMemHex | BadResultLiteral}. Section bodies are normalised: trailing
// whitespace is stripped from each line and leading/trailing blank lines are
// dropped.
TestCase parse_test_file(std::string_view text, std::string name = {});

// Mem bytes are emitted as lowercase hex pairs, 16 per line.
std::string serialize_test_file(const TestCase& test);

// Instruction families appearing in the test's program (empty when the asm
// does not parse).
std::set<Mnemonic> mnemonics_in(const TestCase& test);

// The instruction a test is attributed to in per-instruction reports: the
// generation target if recorded, otherwise the first instruction family other
// than MOV/LDDW/EXIT, otherwise the first family, otherwise "UNPARSED".
std::string primary_instruction(const TestCase& test);

class Corpus {
  public:
    Corpus() = default;
    explicit Corpus(std::vector<TestCase> tests);

    // Throws Error{DuplicateTestName}.
    void add(TestCase test);
    const TestCase* find(std::string_view name) const;

    const std::vector<TestCase>& tests() const { return tests_; }
    std::size_t size() const { return tests_.size(); }
    bool empty() const { return tests_.empty(); }

  private:
    std::vector<TestCase> tests_;
    std::set<std::string, std::less<>> names_;
};

// Loads every *.data file under `dir` in name order; test names are file stems.
Corpus load_corpus(const std::filesystem::path& dir);
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

struct InstructionMap {
    // Mnemonic name -> test names (sorted, unique).
    std::map<std::string, std::vector<std::string>> tests;
    // True when the provider was absent or its answer contributed nothing.
    bool fallback_only = true;
    // Mnemonics with no mapped test.
    std::vector<std::string> gaps;
};

// Unions the provider's mapping (when `llm` is non-null) with a lexical
// mapping derived from the instructions each test contains.
InstructionMap map_tests_to_instructions(const Corpus& corpus, CompletionProvider* llm);

} // namespace diffharness
