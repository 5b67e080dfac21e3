// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "agreement.hpp"

#include <random>

#include <fmt/format.h>

#include "diffharness/asm.hpp"
#include "diffharness/interpreter.hpp"
#include "oracle.hpp"

using namespace diffharness;

namespace agreement {

namespace {

using Counter = Result;

ExecutionResponse
run(std::string_view text)
{
    return interpret(parse_asm(text), {}, *builtin_profile("reference"));
}

std::vector<std::uint64_t>
operand_values(std::mt19937_64& rng)
{
    std::vector<std::uint64_t> v = {0,
                                    1,
                                    2,
                                    ~0ULL,
                                    0x7fffffffULL,
                                    0x80000000ULL,
                                    0xffffffffULL,
                                    0x8000000000000000ULL,
                                    0x7fffffffffffffffULL,
                                    31,
                                    32,
                                    63,
                                    64,
                                    0x12345678ULL,
                                    0xfffffffffffffff8ULL};
    for (int i = 0; i < 6; ++i) {
        v.push_back(rng());
    }
    return v;
}

void
check_alu(Counter& c, const std::string& name, const oracle::AluCase& oc, const std::string& text)
{
    ++c.cases;
    const auto got = run(text);
    const auto want = oracle::alu(oc);
    if (!std::holds_alternative<Returned>(got) || std::get<Returned>(got).value != want) {
        c.mismatches.push_back(fmt::format("{}\n{}\nwant 0x{:x} got {}", name, text, want, describe(got)));
    }
}

} // namespace

Result
alu(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    Counter c;
    const auto values = operand_values(rng);
    const std::vector<std::string> binary = {"add", "sub", "mul", "div", "sdiv", "or",  "and",
                                             "lsh", "rsh", "mod", "smod", "xor", "mov", "arsh"};
    for (const auto& op : binary) {
        for (bool is64 : {true, false}) {
            const std::string name = is64 ? op : op + "32";
            for (std::size_t i = 0; i < values.size(); ++i) {
                const auto a = values[i];
                const auto b = values[(i * 7 + 3) % values.size()];
                // Register form.
                check_alu(c, name, {op, is64, a, b},
                          fmt::format("lddw %r0, 0x{:x}\nlddw %r1, 0x{:x}\n{} %r0, %r1\nexit", a, b, name));
                // Immediate form: the immediate is the low 32 bits, sign-extended.
                const auto imm = static_cast<std::int32_t>(static_cast<std::uint32_t>(b));
                check_alu(c, name, {op, is64, a, static_cast<std::uint64_t>(std::int64_t{imm})},
                          fmt::format("lddw %r0, 0x{:x}\n{} %r0, {}\nexit", a, name, imm));
            }
        }
    }
    for (bool is64 : {true, false}) {
        for (auto a : values) {
            check_alu(c, "neg", {"neg", is64, a, 0},
                      fmt::format("lddw %r0, 0x{:x}\n{} %r0\nexit", a, is64 ? "neg" : "neg32"));
        }
    }
    const std::pair<int, bool> movsx[] = {{8, false}, {16, false}, {8, true}, {16, true}, {32, true}};
    for (auto [width, is64] : movsx) {
        for (auto a : values) {
            const auto name = fmt::format("movsx{}{}", width, is64 ? 64 : 32);
            check_alu(c, name, {"movsx", is64, 0, a, width},
                      fmt::format("lddw %r1, 0x{:x}\n{} %r0, %r1\nexit", a, name));
        }
    }
    for (std::string kind : {"le", "be", "bswap"}) {
        for (int width : {16, 32, 64}) {
            for (auto a : values) {
                const auto name = fmt::format("{}{}", kind, width);
                check_alu(c, name, {kind, true, a, 0, width}, fmt::format("lddw %r0, 0x{:x}\n{} %r0\nexit", a, name));
            }
        }
    }
    return c;
}

Result
jumps(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    Counter c;
    const auto values = operand_values(rng);
    const std::vector<std::string> conds = {"jeq", "jne", "jgt", "jge", "jlt", "jle",
                                            "jset", "jsgt", "jsge", "jslt", "jsle"};
    for (const auto& cond : conds) {
        for (bool is64 : {true, false}) {
            const std::string name = is64 ? cond : cond + "32";
            for (std::size_t i = 0; i < values.size(); ++i) {
                for (std::size_t k : {i, (i * 5 + 1) % values.size()}) {
                    const auto a = values[i];
                    const auto b = values[k];
                    const auto imm = static_cast<std::int32_t>(static_cast<std::uint32_t>(b));
                    const std::pair<std::string, std::uint64_t> forms[] = {
                        {"%r1", b}, {std::to_string(imm), static_cast<std::uint64_t>(std::int64_t{imm})}};
                    for (const auto& [operand, value] : forms) {
                        ++c.cases;
                        const auto text = fmt::format(
                            "lddw %r0, 0x{:x}\nlddw %r1, 0x{:x}\n{} %r0, {}, +2\nmov %r0, 1\nexit\nmov %r0, 2\nexit",
                            a, b, name, operand);
                        const std::uint64_t want = oracle::jump(cond, is64, a, value) ? 2 : 1;
                        const auto got = run(text);
                        if (!std::holds_alternative<Returned>(got) || std::get<Returned>(got).value != want) {
                            c.mismatches.push_back(fmt::format("{}\nwant {} got {}", text, want, describe(got)));
                        }
                    }
                }
            }
        }
    }
    return c;
}

} // namespace agreement
