// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffharness/fuzz.hpp"

#include <array>
#include <fmt/format.h>
#include <limits>

#include "diffharness/asm.hpp"
#include "diffharness/error.hpp"
#include "diffharness/interpreter.hpp"

namespace diffharness {

namespace {

constexpr std::array<std::int64_t, 16> boundary_imms = {
    0, 1, -1, 2, 7, 8, 15, 16, 31, 32, 63, 64, 0x7fffffff, -0x80000000LL, 0xff, 0xffff,
};

constexpr std::array<std::int64_t, 8> boundary_imm64 = {
    0, 1, -1, 0x100000000LL, std::numeric_limits<std::int64_t>::max(), std::numeric_limits<std::int64_t>::min(),
    0xffffffffLL, 0x8000000000000000ULL >> 1,
};

constexpr std::array<std::int64_t, 6> boundary_shifts = {0, 1, 31, 32, 63, 64};

constexpr std::array<std::int16_t, 8> boundary_offsets = {0, 1, 2, 4, 8, -1, -8, -512};

} // namespace

Fuzzer::Fuzzer(FuzzOptions options) : options_(options), rng_(options.seed) {}

std::int64_t
Fuzzer::immediate()
{
    if (pick(100) < static_cast<std::uint64_t>(options_.boundary_percent)) {
        return boundary_imms[pick(boundary_imms.size())];
    }
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(rng_()));
}

std::int16_t
Fuzzer::memory_offset()
{
    if (pick(100) < static_cast<std::uint64_t>(options_.boundary_percent) * 2) {
        return boundary_offsets[pick(boundary_offsets.size())];
    }
    return static_cast<std::int16_t>(static_cast<std::uint16_t>(rng_()));
}

std::int64_t
Fuzzer::shift_amount(bool wide)
{
    switch (pick(5)) {
    case 0:
    case 1: return boundary_shifts[pick(boundary_shifts.size())];
    case 2:
    case 3: return static_cast<std::int64_t>(pick(wide ? 64 : 32));
    default: return immediate();
    }
}

const OpcodeInfo&
Fuzzer::opcode()
{
    // Uniform over families first, so wide families (loads, jumps) do not
    // crowd out the rest.
    const auto table = opcode_table();
    const auto family = static_cast<Mnemonic>(pick(mnemonic_count));
    std::vector<const OpcodeInfo*> entries;
    for (const auto& info : table) {
        if (info.mnemonic == family) {
            entries.push_back(&info);
        }
    }
    return *entries[pick(entries.size())];
}

TestCase
Fuzzer::next()
{
    const auto len = static_cast<std::size_t>(1 + pick(static_cast<std::uint64_t>(options_.max_len)));

    std::vector<Instruction> insns;
    std::vector<std::optional<std::size_t>> jump_target(len + 1);
    for (std::size_t i = 0; i < len; ++i) {
        const OpcodeInfo& info = opcode();
        Instruction insn;
        insn.opcode = info.opcode;
        insn.dst = Register(static_cast<int>(pick(2) == 0 ? 0 : pick(11)));
        insn.src = Register(static_cast<int>(pick(11)));
        insn.offset = memory_offset();
        insn.imm = immediate();
        const Register r0;
        switch (info.form) {
        case Form::AluImm:
            insn.src = r0;
            if (info.mnemonic == Mnemonic::Lsh || info.mnemonic == Mnemonic::Rsh || info.mnemonic == Mnemonic::Arsh) {
                insn.imm = shift_amount(info.op_class == OpClass::Alu64);
            }
            break;
        case Form::StoreImm: insn.src = r0; break;
        case Form::AluReg:
        case Form::MovSx:
        case Form::Load:
        case Form::StoreReg: insn.imm = 0; break;
        case Form::Neg:
        case Form::ByteSwap: insn.src = r0; insn.imm = 0; break;
        case Form::JumpAlways: insn.dst = r0; insn.src = r0; insn.imm = 0; break;
        case Form::JumpImm: insn.src = r0; break;
        case Form::JumpReg: insn.imm = 0; break;
        case Form::Call:
            insn.dst = r0;
            insn.src = r0;
            insn.imm = pick(2) == 0 ? static_cast<std::int64_t>(pick(16)) : insn.imm;
            break;
        case Form::Exit: insn.dst = r0; insn.src = r0; insn.imm = 0; break;
        case Form::LoadImm64:
            insn.src = r0;
            insn.imm = pick(100) < static_cast<std::uint64_t>(options_.boundary_percent)
                           ? boundary_imm64[pick(boundary_imm64.size())]
                           : static_cast<std::int64_t>(rng_());
            break;
        }
        const bool memory = info.form == Form::Load || info.form == Form::StoreImm || info.form == Form::StoreReg;
        const bool jump = info.form == Form::JumpAlways || info.form == Form::JumpImm || info.form == Form::JumpReg;
        if (!memory && !jump) {
            insn.offset = 0;
        }
        if (info.selector == Selector::Offset) {
            insn.offset = static_cast<std::int16_t>(info.selector_value);
        } else if (info.selector == Selector::Imm) {
            insn.imm = info.selector_value;
        }
        if (jump) {
            // Forward targets only, in (i, len + 1]; the EXIT that closes the
            // program is instruction len, and len + 1 falls off the end.
            jump_target[i] = i + 1 + static_cast<std::size_t>(pick(len + 1 - i));
        }
        insns.push_back(insn);
    }
    Instruction exit_insn;
    exit_insn.opcode = 0x95;
    insns.push_back(exit_insn);

    // Resolve targets to slot offsets now that every width is known.
    std::vector<std::size_t> slot_of(insns.size() + 1, 0);
    for (std::size_t i = 0; i < insns.size(); ++i) {
        slot_of[i + 1] = slot_of[i] + insns[i].slots();
    }
    for (std::size_t i = 0; i < len; ++i) {
        if (jump_target[i]) {
            const auto target = static_cast<std::int64_t>(slot_of[*jump_target[i]]);
            insns[i].offset = static_cast<std::int16_t>(target - static_cast<std::int64_t>(slot_of[i + 1]));
        }
    }

    const Program program(std::move(insns));
    TestCase test;
    test.name = fmt::format("fuzz_{}_{}", options_.seed, index_++);
    test.asm_text = format_asm(program);
    if (pick(2) == 0) {
        std::vector<std::uint8_t> mem(static_cast<std::size_t>(pick(static_cast<std::uint64_t>(options_.max_mem) + 1)));
        for (auto& b : mem) {
            b = static_cast<std::uint8_t>(rng_());
        }
        test.mem = std::move(mem);
    }
    test.provenance.kind = ProvenanceKind::Fuzzed;
    test.provenance.seed = options_.seed;

    static const SemanticsProfile reference = *builtin_profile("reference");
    const auto response = interpret(program, test.mem.value_or(std::vector<std::uint8_t>{}), reference);
    if (const auto* r = std::get_if<Returned>(&response)) {
        test.expected_result = r->value;
    } else if (const auto* e = std::get_if<RuntimeError>(&response)) {
        test.expected_error = e->message;
    } else {
        test.expected_error = describe(response);
    }
    return test;
}

Corpus
fuzz(std::uint64_t seed, int count, int max_len)
{
    if (count < 1 || max_len < 1) {
        throw Error(Errc::PreconditionViolated, "fuzz needs count >= 1 and max_len >= 1");
    }
    Fuzzer f({.seed = seed, .max_len = max_len});
    Corpus out;
    for (int i = 0; i < count; ++i) {
        out.add(f.next());
    }
    return out;
}

Corpus
fuzz_for(std::uint64_t seed, std::chrono::milliseconds budget, int max_len)
{
    if (max_len < 1) {
        throw Error(Errc::PreconditionViolated, "fuzz needs max_len >= 1");
    }
    Fuzzer f({.seed = seed, .max_len = max_len});
    Corpus out;
    const auto deadline = std::chrono::steady_clock::now() + budget;
    do {
        out.add(f.next());
    } while (std::chrono::steady_clock::now() < deadline);
    return out;
}

} // namespace diffharness
