// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "diffharness/asm.hpp"
#include "diffharness/error.hpp"
#include "diffharness/fuzz.hpp"
#include "diffharness/harness.hpp"
#include "diffharness/interpreter.hpp"

using namespace diffharness;
using namespace std::chrono_literals;

namespace {

std::string
dump(const Corpus& c)
{
    std::string out;
    for (const auto& t : c.tests()) {
        out += t.name + "\n" + serialize_test_file(t);
    }
    return out;
}

RuntimeSpec
builtin(const std::string& id, const std::string& profile)
{
    return parse_runtime_spec(id + "=builtin:" + profile);
}

} // namespace

TEST(Fuzz, SameSeedSameCorpus)
{
    EXPECT_EQ(dump(fuzz(42, 200)), dump(fuzz(42, 200)));
    EXPECT_NE(dump(fuzz(42, 50)), dump(fuzz(43, 50)));
}

TEST(Fuzz, ShorterRunIsPrefix)
{
    const auto small = fuzz(7, 20);
    const auto large = fuzz(7, 60);
    for (std::size_t i = 0; i < small.size(); ++i) {
        EXPECT_EQ(serialize_test_file(small.tests()[i]), serialize_test_file(large.tests()[i]));
    }
    const auto timed = fuzz_for(7, 1ms);
    ASSERT_GE(timed.size(), 1u);
    EXPECT_EQ(serialize_test_file(timed.tests()[0]), serialize_test_file(large.tests()[0]));
}

TEST(Fuzz, NamesAndProvenance)
{
    const auto c = fuzz(9, 3);
    EXPECT_EQ(c.tests()[0].name, "fuzz_9_0");
    EXPECT_EQ(c.tests()[2].name, "fuzz_9_2");
    for (const auto& t : c.tests()) {
        EXPECT_EQ(t.provenance.kind, ProvenanceKind::Fuzzed);
        EXPECT_EQ(t.provenance.seed, 9u);
    }
}

TEST(Fuzz, RejectsBadArguments)
{
    EXPECT_THROW(fuzz(1, 0), Error);
    EXPECT_THROW(fuzz(1, 5, 0), Error);
}

TEST(Fuzz, EveryProgramAssemblesAndEndsInExit)
{
    const auto c = fuzz(1234, 10000, 8);
    std::set<Mnemonic> seen;
    for (const auto& t : c.tests()) {
        const auto program = parse_asm(t.asm_text);
        ASSERT_FALSE(program.instructions().empty()) << t.name;
        ASSERT_LE(program.instructions().size(), 9u) << t.name;
        EXPECT_EQ(program.instructions().back().info().mnemonic, Mnemonic::Exit) << t.name;
        // Text and binary forms agree.
        EXPECT_EQ(decode(encode(program)), program) << t.name;
        for (const auto& insn : program.instructions()) {
            seen.insert(insn.info().mnemonic);
        }
        // Expected values round-trip through the file format.
        const auto back = parse_test_file(serialize_test_file(t), t.name);
        EXPECT_EQ(back.expected_result, t.expected_result);
        EXPECT_EQ(back.expected_error, t.expected_error);
        EXPECT_EQ(back.mem, t.mem);
    }
    EXPECT_EQ(seen.size(), 34u);
}

TEST(Fuzz, ReferenceAgreesWithItself)
{
    const auto c = fuzz(2, 1000);
    const auto records = run_matrix(c, {builtin("a", "reference"), builtin("b", "reference")});
    for (const auto& r : records) {
        EXPECT_NE(r.outcome.kind, OutcomeKind::Fail) << r.test_name << " " << describe(r.outcome);
        EXPECT_NE(r.outcome.kind, OutcomeKind::Error) << r.test_name << " " << describe(r.outcome);
    }
    EXPECT_TRUE(find_differentials(records).findings.empty());
}

// Tests where a zero-shift RSH reaches r0: rewriting every `rsh dst, 0` to
// `mov dst, 0` (what the seeded bug computes) changes the reference result.
std::set<std::string>
zero_shift_reaches_r0(const Corpus& c)
{
    const auto reference = *builtin_profile("reference");
    std::set<std::string> out;
    for (const auto& t : c.tests()) {
        const auto program = parse_asm(t.asm_text);
        std::vector<Instruction> rewritten(program.instructions().begin(), program.instructions().end());
        bool any = false;
        for (auto& insn : rewritten) {
            if (insn.mnemonic() == Mnemonic::Rsh && insn.source() == Source::K && insn.imm == 0) {
                insn.opcode = insn.info().op_class == OpClass::Alu64 ? 0xb7 : 0xb4;
                any = true;
            }
        }
        if (!any) {
            continue;
        }
        const auto mem = t.mem.value_or(std::vector<std::uint8_t>{});
        if (interpret(program, mem, reference) != interpret(Program(std::move(rewritten)), mem, reference)) {
            out.insert(t.name);
        }
    }
    return out;
}

std::set<std::string>
valid_findings(const Corpus& c, const std::string& profile)
{
    const auto records = run_matrix(c, {builtin("ref", "reference"), builtin("bug", profile)});
    std::set<std::string> out;
    for (const auto& f : find_differentials(records).findings) {
        if (f.valid()) {
            out.insert(f.test_name);
        }
    }
    return out;
}

TEST(Fuzz, ZeroShiftDivergenceWhenItReachesR0)
{
    const auto c = fuzz(3, 1000);
    const auto found = valid_findings(c, "rsh-zero-bug");
    const auto expected = zero_shift_reaches_r0(c);
    EXPECT_EQ(found, expected);
}

TEST(Fuzz, RecordedSeedsHitZeroShift)
{
    std::ifstream in(std::filesystem::path(DH_SOURCE_DIR) / "fixtures/fuzz/seeds.json");
    const auto seeds = nlohmann::json::parse(in).at("rsh_zero_shift");
    ASSERT_FALSE(seeds.empty());
    const auto c = fuzz(seeds.at(0).get<std::uint64_t>(), 1000);
    const auto found = valid_findings(c, "rsh-zero-bug");
    EXPECT_GE(found.size(), 1u);
    EXPECT_EQ(found, zero_shift_reaches_r0(c));
}
