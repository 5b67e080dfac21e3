// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Outcome classification, the corpus x runtime matrix, and differential
// detection.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffharness/runtime.hpp"
#include "diffharness/test_case.hpp"

namespace diffharness {

enum class OutcomeKind { Pass, Fail, Skip, Error, Crash };

std::string_view to_string(OutcomeKind kind); // "PASS", "FAIL", ...
std::optional<OutcomeKind> outcome_kind_from_string(std::string_view s);

struct Outcome {
    OutcomeKind kind = OutcomeKind::Pass;
    std::uint64_t actual = 0;             // Fail
    std::optional<std::uint64_t> expected; // Fail; absent when an error was expected
    int code = 0;                          // Error
    std::string message;                   // Skip reason, Error/Crash message

    friend bool operator==(const Outcome&, const Outcome&) = default;

    static Outcome pass() { return {}; }
    static Outcome fail(std::uint64_t actual, std::optional<std::uint64_t> expected);
    static Outcome skip(std::string reason);
    static Outcome error(int code, std::string message);
    static Outcome crash(std::string message);
};

// Runner-style line, e.g. "FAIL: Plugin returned incorrect return value 0x1 expected 0x0".
std::string describe(const Outcome& outcome);

// Total function. Expected errors match by case-insensitive substring.
Outcome classify(const ExecutionResponse& response, const TestCase& test);

struct RunRecord {
    std::string test_name;
    std::string runtime_id;
    Outcome outcome;
    double wall_time_ms = 0;
};

struct MatrixOptions {
    int parallelism = 1;
    std::chrono::milliseconds timeout = std::chrono::milliseconds(5000);
};

// One record per (test, runtime), ordered by test then runtime. Tests whose
// asm does not assemble are recorded as Skip on every runtime. Throws
// Error{PreconditionViolated} for fewer than two runtimes.
std::vector<RunRecord> run_matrix(
    const Corpus& corpus, const std::vector<RuntimeSpec>& runtimes, const MatrixOptions& options = {});

bool is_valid(const std::vector<Outcome>& outcomes);

enum class DivergenceKind { OutcomeClassDiffers, ReturnValuesDiffer, ErrorVsValue };
std::string_view to_string(DivergenceKind kind);

struct DifferentialFinding {
    std::string test_name;
    std::vector<std::pair<std::string, Outcome>> outcomes; // runtime order
    std::set<DivergenceKind> kinds;
    std::vector<std::string> runtime_pairs; // "a-b" labels
    bool involves_crash = false;

    bool valid() const;
};

struct DifferentialResult {
    std::vector<std::string> runtimes; // order of first appearance
    std::vector<DifferentialFinding> findings;
    // Tests with a Skip on any runtime; never reported as findings.
    std::vector<std::string> skipped_tests;
};

// Pair label for two runtimes, ordered by their position in `runtimes`.
std::string pair_label(const std::vector<std::string>& runtimes, const std::string& a, const std::string& b);

DifferentialResult find_differentials(const std::vector<RunRecord>& records);

// Serialisation. Records are JSON lines; 64-bit values are hex strings.
nlohmann::json to_json(const Outcome& outcome);
Outcome outcome_from_json(const nlohmann::json& j);
std::string records_to_jsonl(const std::vector<RunRecord>& records);
std::vector<RunRecord> records_from_jsonl(const std::string& text);
nlohmann::json to_json(const DifferentialResult& result);
DifferentialResult differentials_from_json(const nlohmann::json& j);

} // namespace diffharness
