// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fmt/format.h>
#include <random>

#include "diffharness/asm.hpp"
#include "diffharness/error.hpp"
#include "diffharness/interpreter.hpp"
#include "agreement.hpp"

using namespace diffharness;

namespace {

ExecutionResponse
run(std::string_view text, std::vector<std::uint8_t> mem = {}, std::string_view profile = "reference")
{
    return interpret(parse_asm(text), mem, *builtin_profile(profile));
}

std::uint64_t
returned(const ExecutionResponse& r)
{
    EXPECT_TRUE(std::holds_alternative<Returned>(r)) << describe(r);
    return std::holds_alternative<Returned>(r) ? std::get<Returned>(r).value : ~0ULL;
}

std::string
error_message(const ExecutionResponse& r)
{
    EXPECT_TRUE(std::holds_alternative<RuntimeError>(r)) << describe(r);
    return std::holds_alternative<RuntimeError>(r) ? std::get<RuntimeError>(r).message : "";
}

const char* const zero_shift = "mov %r0, 0x12345678\nrsh %r0, 0\nexit";
const char* const jset_program = "mov %r1, 5\njset %r1, %r1, lbl1\nmov %r0, 0\nexit\nlbl1: mov %r0, 1\nexit";

} // namespace

TEST(Interpret, ZeroShiftKeepsValue)
{
    EXPECT_EQ(returned(run(zero_shift)), 0x12345678u);
}

TEST(Interpret, LoadWordFromMemory)
{
    EXPECT_EQ(returned(run("ldxw %r0, [%r1]\nexit", {0, 0, 0, 0})), 0u);
    EXPECT_EQ(returned(run("ldxw %r0, [%r1]\nexit", {0x78, 0x56, 0x34, 0x12})), 0x12345678u);
}

TEST(Interpret, JsetTaken)
{
    EXPECT_EQ(returned(run(jset_program)), 1u);
}

TEST(Interpret, EntryRegisters)
{
    EXPECT_EQ(returned(run("mov %r0, %r2\nexit", {1, 2, 3})), 3u);
    EXPECT_EQ(returned(run("mov %r0, %r1\nexit", {1})), input_base);
    EXPECT_EQ(returned(run("mov %r0, %r1\nexit")), 0u);
    EXPECT_EQ(returned(run("mov %r0, %r10\nexit")), stack_top);
}

TEST(Interpret, StackRoundTrip)
{
    EXPECT_EQ(returned(run("stdw [%r10-8], -2\nldxdw %r0, [%r10-8]\nexit")), 0xfffffffffffffffeULL);
    EXPECT_EQ(returned(run("mov %r2, 0x1234\nstxh [%r10-2], %r2\nldxb %r0, [%r10-1]\nexit")), 0x12u);
    EXPECT_EQ(returned(run("stb [%r10-1], 0x80\nldxsb %r0, [%r10-1]\nexit")), 0xffffffffffffff80ULL);
}

TEST(Interpret, MemoryFaults)
{
    EXPECT_NE(error_message(run("ldxw %r0, [%r1+1]\nexit", {0, 0, 0, 0})).find("invalid memory access"),
              std::string::npos);
    EXPECT_NE(error_message(run("ldxdw %r0, [%r10]\nexit")).find("invalid memory access"), std::string::npos);
    EXPECT_NE(error_message(run("ldxb %r0, [%r1]\nexit")).find("invalid memory access"), std::string::npos);
}

TEST(Interpret, DivisionByZeroIsDefined)
{
    EXPECT_EQ(returned(run("mov %r0, 7\ndiv %r0, 0\nexit")), 0u);
    EXPECT_EQ(returned(run("mov %r0, 7\nmov %r1, 0\nmod %r0, %r1\nexit")), 7u);
    EXPECT_EQ(returned(run("lddw %r0, 0x100000007\nmod32 %r0, 0\nexit")), 7u);
    EXPECT_EQ(returned(run("lddw %r0, 0x8000000000000000\nsdiv %r0, -1\nexit")), 0x8000000000000000ULL);
    EXPECT_EQ(returned(run("lddw %r0, 0x8000000000000000\nsmod %r0, -1\nexit")), 0u);
}

TEST(Interpret, Alu32ZeroExtends)
{
    EXPECT_EQ(returned(run("lddw %r0, 0xffffffffffffffff\nadd32 %r0, 1\nexit")), 0u);
    EXPECT_EQ(returned(run("mov32 %r0, -1\nexit")), 0xffffffffULL);
    EXPECT_EQ(returned(run("mov %r0, -1\nexit")), ~0ULL);
}

TEST(Interpret, ShiftAmountsAreMasked)
{
    EXPECT_EQ(returned(run("mov %r0, 1\nlsh %r0, 65\nexit")), 2u);
    EXPECT_EQ(returned(run("mov %r0, 1\nlsh32 %r0, 33\nexit")), 2u);
}

TEST(Interpret, FramePointerIsReadOnly)
{
    EXPECT_NE(error_message(run("mov %r10, 0\nmov %r0, 0\nexit")).find("frame pointer"), std::string::npos);
    EXPECT_EQ(returned(run("mov %r10, 0\nmov %r0, 0\nexit", {}, "fp-write-allow")), 0u);
}

TEST(Interpret, StepLimitGivesTimeout)
{
    EXPECT_TRUE(std::holds_alternative<Timeout>(run("ja -1\nexit")));
    EXPECT_EQ(returned(run("jeq %r0, 0, +1\nexit\nexit")), 0u);
    SemanticsProfile p;
    p.step_limit = 0;
    EXPECT_THROW(interpret(parse_asm("exit"), {}, p), Error);
}

TEST(Interpret, FallingOffTheEnd)
{
    EXPECT_NE(error_message(run("mov %r0, 1")).find("fell off"), std::string::npos);
}

TEST(Interpret, Helpers)
{
    EXPECT_EQ(returned(run("mov %r0, 9\ncall 5\nexit")), 0u);
    EXPECT_TRUE(std::holds_alternative<Unsupported>(run("call 1000\nexit")));
}

TEST(Profiles, ZeroShiftBugDiverges)
{
    auto v = returned(run(zero_shift, {}, "rsh-zero-bug"));
    EXPECT_NE(v, 0x12345678u);
    EXPECT_EQ(v, 0u);
    EXPECT_EQ(returned(run("mov %r0, 8\nrsh %r0, 1\nexit", {}, "rsh-zero-bug")), 4u);
}

TEST(Profiles, JumpOffsetBugLandsShort)
{
    // Taken jump lands on "mov %r0, 0" one slot early and returns 0.
    auto r = run("mov %r0, 0\njeq %r0, 0, +2\nmov %r0, 7\nexit\nmov %r0, 1\nexit", {}, "jump-offset-bug");
    EXPECT_EQ(returned(r), 0u);
    EXPECT_EQ(returned(run(jset_program, {}, "jump-offset-bug")), 0u);
    // Unconditional jumps are unaffected.
    EXPECT_EQ(returned(run("ja +1\nmov %r0, 3\nexit", {}, "jump-offset-bug")), 0u);
}

TEST(Profiles, UninitSentinel)
{
    EXPECT_EQ(returned(run("exit", {}, "uninit-sentinel")), 0xdeadbeefcafef00dULL);
    EXPECT_EQ(returned(run("mov %r0, 1\nexit", {}, "uninit-sentinel")), 1u);
    SemanticsProfile strict;
    strict.uninitialized_register_policy = UninitPolicy::RejectUse;
    auto r = interpret(parse_asm("add %r0, 1\nexit"), {}, strict);
    EXPECT_NE(error_message(r).find("uninitialized"), std::string::npos);
}

TEST(Profiles, TinyStepLimit)
{
    const char* loop = "mov %r0, 0\nmov %r1, 20\nadd %r0, 1\nsub %r1, 1\njne %r1, 0, -3\nexit";
    EXPECT_EQ(returned(run(loop)), 20u);
    EXPECT_TRUE(std::holds_alternative<Timeout>(run(loop, {}, "tiny-step-limit")));
}

TEST(Profiles, NarrowLoadLeak)
{
    EXPECT_EQ(returned(run("ldxw %r0, [%r1]\nexit", {0, 0, 0, 0}, "narrow-load-leak")), 0xffff8b0900000000ULL);
    EXPECT_EQ(returned(run("ldxdw %r0, [%r1]\nexit", std::vector<std::uint8_t>(8, 0), "narrow-load-leak")), 0u);
}

TEST(Profiles, ShiftImmReject)
{
    EXPECT_EQ(returned(run("mov %r0, 1\nlsh32 %r0, 31\nexit", {}, "shift-imm-reject")), 0x80000000u);
    EXPECT_NE(error_message(run("mov %r0, 1\nlsh32 %r0, 32\nexit", {}, "shift-imm-reject")).find("shift amount"),
              std::string::npos);
}

TEST(Profiles, Catalogue)
{
    EXPECT_EQ(builtin_profile_names().front(), "reference");
    EXPECT_EQ(divergence_profile_names().size(), 7u);
    for (const auto& name : builtin_profile_names()) {
        ASSERT_TRUE(builtin_profile(name)) << name;
        EXPECT_EQ(builtin_profile(name)->name, name);
    }
    EXPECT_FALSE(builtin_profile("nope"));
}

TEST(Interpret, IsPure)
{
    auto p = parse_asm("ldxw %r0, [%r1]\nstw [%r1], 9\nldxw %r2, [%r1]\nadd %r0, %r2\nexit");
    std::vector<std::uint8_t> mem = {1, 0, 0, 0};
    auto a = interpret(p, mem, SemanticsProfile{});
    auto b = interpret(p, mem, SemanticsProfile{});
    EXPECT_EQ(a, b);
    EXPECT_EQ(returned(a), 10u);
    EXPECT_EQ(mem[0], 1);
}

// Oracle agreement over generated single-instruction cases.

TEST(Oracle, AluAgreement)
{
    const auto r = agreement::alu(20240601);
    for (const auto& m : r.mismatches) {
        ADD_FAILURE() << m;
    }
    EXPECT_TRUE(r.mismatches.empty());
    EXPECT_GE(r.cases, 1000u);
}

TEST(Oracle, JumpAgreement)
{
    const auto r = agreement::jumps(7);
    for (const auto& m : r.mismatches) {
        ADD_FAILURE() << m;
    }
    EXPECT_TRUE(r.mismatches.empty());
    EXPECT_GE(r.cases, 8u * 11 * 2);
}
