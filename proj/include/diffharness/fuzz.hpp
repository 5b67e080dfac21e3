// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Grammar-aware random program generator. Every program is drawn from the
// opcode table, so it always assembles; expected values come from the
// reference interpreter.
//
// Randomness is std::mt19937_64 seeded with the user seed. Its output sequence
// is fixed by the C++ standard and only raw outputs are consumed (reduced with
// `% n`), so a seed yields the same corpus on every platform.

#include <chrono>
#include <cstdint>
#include <random>

#include "diffharness/test_case.hpp"

namespace diffharness {

struct FuzzOptions {
    std::uint64_t seed = 0;
    int max_len = 8;          // body instructions per program, before EXIT
    int max_mem = 32;         // input memory bytes
    int boundary_percent = 25; // chance an operand is drawn from a boundary set
};

// Stream of fuzzed tests; test i of a seed does not depend on how many tests
// are requested.
class Fuzzer {
  public:
    explicit Fuzzer(FuzzOptions options);
    TestCase next(); // named fuzz_<seed>_<index>

  private:
    std::uint64_t pick(std::uint64_t n) { return rng_() % n; }
    std::int64_t immediate();
    std::int16_t memory_offset();
    std::int64_t shift_amount(bool wide);
    const OpcodeInfo& opcode();

    FuzzOptions options_;
    std::mt19937_64 rng_;
    std::uint64_t index_ = 0;
};

// Throws Error{PreconditionViolated} for count < 1 or max_len < 1.
Corpus fuzz(std::uint64_t seed, int count, int max_len = 8);

// Generates until `budget` has elapsed (at least one test); the result is a
// prefix of the seed's stream.
Corpus fuzz_for(std::uint64_t seed, std::chrono::milliseconds budget, int max_len = 8);

} // namespace diffharness
