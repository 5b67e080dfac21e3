// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Corpus metrics (validity, diversity, complexity) and the report bundle.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffharness/harness.hpp"
#include "diffharness/test_case.hpp"

namespace diffharness {

struct Validity {
    std::size_t valid = 0;
    std::size_t tests = 0;
    double rate() const { return tests == 0 ? 0.0 : static_cast<double>(valid) / static_cast<double>(tests); }
};

// A test is valid when every runtime gave PASS, FAIL or ERROR. Throws
// Error{IncompleteMatrix} when some (test, runtime) record is missing.
Validity validity(const Corpus& corpus, const std::vector<RunRecord>& records);
double validity_rate(const Corpus& corpus, const std::vector<RunRecord>& records);

// Instructions are assembler spellings (mov, mov32, ldxw, ...). Addresses are
// distinct (base register, displacement) memory operands. Immediates are
// distinct imm values of ALU-immediate, jump-immediate, lddw and store-immediate
// instructions; helper numbers and byte-swap widths are not immediates.
struct Diversity {
    std::size_t unique_instructions = 0;
    std::size_t unique_registers = 0;
    std::size_t unique_addresses = 0;
    std::size_t unique_immediates = 0;
    std::size_t unparseable = 0;

    friend bool operator==(const Diversity&, const Diversity&) = default;
};

Diversity diversity(const Corpus& corpus);

// Lines of the asm section that hold something other than whitespace or a comment.
std::size_t asm_line_count(const TestCase& test);

struct Complexity {
    std::vector<std::size_t> lines; // per test, corpus order
    std::size_t min = 0;
    double median = 0;
    double mean = 0;
    std::size_t max = 0;
    // Bucket lower bound -> count; buckets are [1,5], [6,10], ...
    std::map<std::size_t, std::size_t> histogram;

    static constexpr std::size_t bucket_width = 5;
};

Complexity complexity(const Corpus& corpus);

struct DifferentialCounts {
    std::map<std::string, std::size_t> pairs; // every pair label, zero included
    std::size_t total = 0;
    std::map<std::string, std::size_t> kinds;
    std::size_t involving_crash = 0;
    std::size_t excluded_invalid = 0;
};

// Counts valid findings only.
DifferentialCounts count_differentials(const DifferentialResult& result);

struct ReportBundle {
    std::string report_json;
    std::string per_instruction_csv;
    std::string summary_md;
    std::string complexity_dat;
};

// Deterministic: sorted keys, rates in percent with one decimal, no timings.
ReportBundle make_report(
    const Corpus& corpus,
    const std::vector<RunRecord>& records,
    const DifferentialResult& differentials,
    const std::map<std::string, std::string>& config = {});

// Writes report.json, per_instruction.csv, summary.md and complexity.dat.
void write_report(const ReportBundle& bundle, const std::filesystem::path& dir);

} // namespace diffharness
