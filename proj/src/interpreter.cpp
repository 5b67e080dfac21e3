// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffharness/interpreter.hpp"

#include <array>
#include <cstring>
#include <fmt/format.h>

#include "diffharness/error.hpp"

namespace diffharness {

std::string
describe(const ExecutionResponse& response)
{
    struct Visitor {
        std::string operator()(const Returned& r) const { return fmt::format("returned 0x{:x}", r.value); }
        std::string operator()(const RuntimeError& e) const
        {
            return fmt::format("runtime error {}: {}", e.code, e.message);
        }
        std::string operator()(const Timeout&) const { return "timeout"; }
        std::string operator()(const PluginCrash& c) const { return fmt::format("crash: {}", c.message); }
        std::string operator()(const Unsupported& u) const { return fmt::format("unsupported: {}", u.reason); }
    };
    return std::visit(Visitor{}, response);
}

namespace {

// Thrown inside the interpreter loop, converted to a response at the top.
struct Fault {
    ExecutionResponse response;
};

[[noreturn]] void
_fail(std::string message)
{
    throw Fault{RuntimeError{runtime_error_code, std::move(message)}};
}

std::uint64_t
_bswap(std::uint64_t v, int bits)
{
    std::uint64_t out = 0;
    for (int i = 0; i < bits / 8; ++i) {
        out = (out << 8) | ((v >> (8 * i)) & 0xff);
    }
    return out;
}

std::uint64_t
_width_mask(int bytes)
{
    return bytes >= 8 ? ~0ULL : ((1ULL << (8 * bytes)) - 1);
}

std::int64_t
_sext(std::uint64_t v, int bits)
{
    if (bits >= 64) {
        return static_cast<std::int64_t>(v);
    }
    const std::uint64_t m = 1ULL << (bits - 1);
    v &= (1ULL << bits) - 1;
    return static_cast<std::int64_t>((v ^ m) - m);
}

class Machine {
  public:
    Machine(const Program& program, std::span<const std::uint8_t> mem, const SemanticsProfile& profile)
        : program_(program), profile_(profile), input_(mem.begin(), mem.end())
    {
        if (profile.uninitialized_register_policy == UninitPolicy::Sentinel) {
            regs_.fill(profile.uninit_sentinel);
        }
        set_initial(1, input_.empty() ? 0 : input_base);
        set_initial(2, input_.size());
        set_initial(10, stack_top);
    }

    ExecutionResponse run()
    {
        std::size_t index = 0;
        std::uint64_t steps = 0;
        while (true) {
            if (index >= program_.size()) {
                _fail("program fell off the end");
            }
            if (steps >= profile_.step_limit) {
                return Timeout{};
            }
            ++steps;
            const Instruction& insn = program_.instructions()[index];
            const OpcodeInfo& info = insn.info();
            std::optional<std::int64_t> jump;
            switch (info.form) {
            case Form::AluImm:
            case Form::AluReg:
            case Form::Neg:
                alu(insn, info);
                break;
            case Form::MovSx: {
                const bool is64 = info.op_class == OpClass::Alu64;
                const std::int64_t v = _sext(read(insn.src), insn.offset);
                write(insn.dst, is64 ? static_cast<std::uint64_t>(v) : static_cast<std::uint32_t>(v));
                break;
            }
            case Form::ByteSwap: {
                const int bits = static_cast<int>(insn.imm);
                std::uint64_t v = read(insn.dst);
                if (insn.opcode != 0xd4) {
                    v = _bswap(v, bits);
                }
                write(insn.dst, v & _width_mask(bits / 8));
                break;
            }
            case Form::JumpAlways:
                jump = insn.offset;
                break;
            case Form::JumpImm:
            case Form::JumpReg:
                if (compare(insn, info)) {
                    jump = profile_.jump_offset_bug ? insn.offset - 1 : insn.offset;
                }
                break;
            case Form::Call:
                if (!profile_.supported_helpers.contains(static_cast<std::int32_t>(insn.imm))) {
                    throw Fault{Unsupported{fmt::format("helper function {} is not supported", insn.imm)}};
                }
                write(Register(0), 0);
                break;
            case Form::Exit:
                return Returned{read(Register(0))};
            case Form::LoadImm64:
                write(insn.dst, static_cast<std::uint64_t>(insn.imm));
                break;
            case Form::Load: {
                const std::uint64_t addr = read(insn.src) + static_cast<std::uint64_t>(std::int64_t{insn.offset});
                std::uint64_t v = load(addr, info.width);
                if (info.is_signed) {
                    v = static_cast<std::uint64_t>(_sext(v, 8 * info.width));
                } else if (profile_.narrow_load_garbage && info.width < 8) {
                    v |= *profile_.narrow_load_garbage & ~_width_mask(info.width);
                }
                write(insn.dst, v);
                break;
            }
            case Form::StoreImm:
            case Form::StoreReg: {
                const std::uint64_t addr = read(insn.dst) + static_cast<std::uint64_t>(std::int64_t{insn.offset});
                const std::uint64_t v =
                    info.form == Form::StoreImm ? static_cast<std::uint64_t>(insn.imm) : read(insn.src);
                store(addr, info.width, v);
                break;
            }
            }
            if (jump) {
                const std::int64_t target = static_cast<std::int64_t>(program_.slot_of(index)) + 1 + *jump;
                auto next = program_.index_at_slot(target);
                if (!next) {
                    _fail("jump target out of range");
                }
                index = *next;
            } else {
                ++index;
            }
        }
    }

  private:
    void set_initial(int r, std::uint64_t v)
    {
        regs_[r] = v;
        init_ |= 1u << r;
    }

    std::uint64_t read(Register r)
    {
        const int i = r.index();
        if (!(init_ & (1u << i)) && profile_.uninitialized_register_policy == UninitPolicy::RejectUse) {
            _fail(fmt::format("use of uninitialized register r{}", i));
        }
        return regs_[i];
    }

    void write(Register r, std::uint64_t v)
    {
        const int i = r.index();
        if (i == Register::frame_pointer &&
            profile_.frame_pointer_write_policy == FramePointerWritePolicy::Reject) {
            _fail("write to read-only frame pointer r10");
        }
        regs_[i] = v;
        init_ |= 1u << i;
    }

    std::uint8_t* resolve(std::uint64_t addr, std::size_t width)
    {
        if (!input_.empty() && addr >= input_base && addr - input_base <= input_.size() &&
            input_.size() - (addr - input_base) >= width) {
            return input_.data() + (addr - input_base);
        }
        const std::uint64_t stack_base = stack_top - stack_size;
        if (addr >= stack_base && addr <= stack_top && stack_top - addr >= width) {
            return stack_.data() + (addr - stack_base);
        }
        _fail(fmt::format("invalid memory access at 0x{:x} ({} bytes)", addr, width));
    }

    std::uint64_t load(std::uint64_t addr, std::size_t width)
    {
        const std::uint8_t* p = resolve(addr, width);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < width; ++i) {
            v |= std::uint64_t{p[i]} << (8 * i);
        }
        return v;
    }

    void store(std::uint64_t addr, std::size_t width, std::uint64_t v)
    {
        std::uint8_t* p = resolve(addr, width);
        for (std::size_t i = 0; i < width; ++i) {
            p[i] = static_cast<std::uint8_t>(v >> (8 * i));
        }
    }

    void alu(const Instruction& insn, const OpcodeInfo& info)
    {
        const bool is64 = info.op_class == OpClass::Alu64;
        const int bits = is64 ? 64 : 32;
        const std::uint64_t mask = is64 ? ~0ULL : 0xffffffffULL;
        const bool from_imm = info.form == Form::AluImm;
        auto operand = [&]() -> std::uint64_t {
            if (from_imm) {
                // 64-bit operations sign-extend the immediate.
                return static_cast<std::uint64_t>(insn.imm) & mask;
            }
            return read(insn.src) & mask;
        };

        const Mnemonic m = info.mnemonic;
        if (m == Mnemonic::Mov) {
            write(insn.dst, operand());
            return;
        }
        const std::uint64_t a = read(insn.dst) & mask;
        if (m == Mnemonic::Neg) {
            write(insn.dst, (0 - a) & mask);
            return;
        }
        const std::uint64_t b = operand();
        std::uint64_t r = 0;
        switch (m) {
        case Mnemonic::Add: r = a + b; break;
        case Mnemonic::Sub: r = a - b; break;
        case Mnemonic::Mul: r = a * b; break;
        case Mnemonic::Or: r = a | b; break;
        case Mnemonic::And: r = a & b; break;
        case Mnemonic::Xor: r = a ^ b; break;
        case Mnemonic::Div:
            if (b == 0) {
                r = 0;
            } else if (info.is_signed) {
                const std::int64_t sa = _sext(a, bits);
                const std::int64_t sb = _sext(b, bits);
                r = (sb == -1) ? (0 - a) : static_cast<std::uint64_t>(sa / sb);
            } else {
                r = a / b;
            }
            break;
        case Mnemonic::Mod:
            if (b == 0) {
                r = a;
            } else if (info.is_signed) {
                const std::int64_t sa = _sext(a, bits);
                const std::int64_t sb = _sext(b, bits);
                r = (sb == -1) ? 0 : static_cast<std::uint64_t>(sa % sb);
            } else {
                r = a % b;
            }
            break;
        case Mnemonic::Lsh:
        case Mnemonic::Rsh:
        case Mnemonic::Arsh: {
            if (from_imm && profile_.shift_imm_policy == ShiftImmPolicy::RejectOverWidth &&
                (insn.imm < 0 || insn.imm >= bits)) {
                _fail(fmt::format("shift amount {} out of range", insn.imm));
            }
            if (m == Mnemonic::Rsh && from_imm && insn.imm == 0 && profile_.rsh_zero_shift_bug) {
                r = 0;
                break;
            }
            const unsigned n = static_cast<unsigned>(b & static_cast<unsigned>(bits - 1));
            if (m == Mnemonic::Lsh) {
                r = a << n;
            } else if (m == Mnemonic::Rsh) {
                r = a >> n;
            } else {
                r = static_cast<std::uint64_t>(_sext(a, bits) >> n);
            }
            break;
        }
        default:
            _fail(fmt::format("unhandled ALU operation {}", mnemonic_name(m)));
        }
        write(insn.dst, r & mask);
    }

    bool compare(const Instruction& insn, const OpcodeInfo& info)
    {
        const bool is64 = info.op_class == OpClass::Jmp;
        const int bits = is64 ? 64 : 32;
        const std::uint64_t mask = is64 ? ~0ULL : 0xffffffffULL;
        const std::uint64_t a = read(insn.dst) & mask;
        const std::uint64_t b = info.form == Form::JumpImm ? static_cast<std::uint64_t>(insn.imm) & mask
                                                           : read(insn.src) & mask;
        const std::int64_t sa = _sext(a, bits);
        const std::int64_t sb = _sext(b, bits);
        switch (info.mnemonic) {
        case Mnemonic::Jeq: return a == b;
        case Mnemonic::Jne: return a != b;
        case Mnemonic::Jgt: return a > b;
        case Mnemonic::Jge: return a >= b;
        case Mnemonic::Jlt: return a < b;
        case Mnemonic::Jle: return a <= b;
        case Mnemonic::Jset: return (a & b) != 0;
        case Mnemonic::Jsgt: return sa > sb;
        case Mnemonic::Jsge: return sa >= sb;
        case Mnemonic::Jslt: return sa < sb;
        case Mnemonic::Jsle: return sa <= sb;
        default: _fail(fmt::format("unhandled jump {}", mnemonic_name(info.mnemonic)));
        }
    }

    const Program& program_;
    const SemanticsProfile& profile_;
    std::vector<std::uint8_t> input_;
    std::array<std::uint8_t, stack_size> stack_{};
    std::array<std::uint64_t, 11> regs_{};
    unsigned init_ = 0;
};

} // namespace

ExecutionResponse
interpret(const Program& program, std::span<const std::uint8_t> mem, const SemanticsProfile& profile)
{
    if (profile.step_limit < 1) {
        throw Error(Errc::PreconditionViolated, "step_limit must be at least 1");
    }
    try {
        return Machine(program, mem, profile).run();
    } catch (const Fault& f) {
        return f.response;
    }
}

std::optional<SemanticsProfile>
builtin_profile(std::string_view name)
{
    SemanticsProfile p;
    p.name = std::string(name);
    if (name == "reference") {
        return p;
    }
    if (name == "rsh-zero-bug") {
        p.rsh_zero_shift_bug = true;
    } else if (name == "jump-offset-bug") {
        p.jump_offset_bug = true;
    } else if (name == "uninit-sentinel") {
        p.uninitialized_register_policy = UninitPolicy::Sentinel;
    } else if (name == "fp-write-allow") {
        p.frame_pointer_write_policy = FramePointerWritePolicy::SilentlyAllow;
    } else if (name == "tiny-step-limit") {
        p.step_limit = 32;
    } else if (name == "narrow-load-leak") {
        p.narrow_load_garbage = 0xffff8b0900000000ULL;
    } else if (name == "shift-imm-reject") {
        p.shift_imm_policy = ShiftImmPolicy::RejectOverWidth;
    } else {
        return std::nullopt;
    }
    return p;
}

std::vector<std::string>
builtin_profile_names()
{
    return {"reference",      "rsh-zero-bug",    "jump-offset-bug",  "uninit-sentinel",
            "fp-write-allow", "tiny-step-limit", "narrow-load-leak", "shift-imm-reject"};
}

std::vector<std::string>
divergence_profile_names()
{
    auto names = builtin_profile_names();
    names.erase(names.begin());
    return names;
}

} // namespace diffharness
