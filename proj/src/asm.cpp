// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffharness/asm.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fmt/format.h>
#include <limits>
#include <optional>
#include <variant>

#include "diffharness/error.hpp"

namespace diffharness {

namespace {

std::string_view
_trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

bool
_is_label_char(char c, bool first)
{
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.' ||
           (!first && std::isdigit(static_cast<unsigned char>(c)));
}

bool
_is_label_name(std::string_view s)
{
    if (s.empty() || !_is_label_char(s[0], true)) {
        return false;
    }
    return std::all_of(s.begin() + 1, s.end(), [](char c) { return _is_label_char(c, false); });
}

// Integer literal: optional sign, decimal or 0x hex. Values are returned as a
// sign flag plus magnitude so callers can apply their own range rules.
struct Literal {
    bool negative = false;
    bool hex = false;
    std::uint64_t magnitude = 0;
};

std::optional<Literal>
_parse_literal(std::string_view s)
{
    Literal lit;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
        lit.negative = s[0] == '-';
        s.remove_prefix(1);
    }
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        base = 16;
        lit.hex = true;
        s.remove_prefix(2);
    }
    if (s.empty()) {
        return std::nullopt;
    }
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), lit.magnitude, base);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return lit;
}

class LineParser {
  public:
    LineParser(std::string_view text, int line) : text_(text), line_(line) {}

    [[noreturn]] void fail(Errc code, const std::string& message) const { throw Error(code, message, line_); }

    Register reg(std::string_view tok) const
    {
        tok = _trim(tok);
        if (!tok.empty() && tok[0] == '%') {
            tok.remove_prefix(1);
        }
        if (tok.size() < 2 || (tok[0] != 'r' && tok[0] != 'R')) {
            fail(Errc::SyntaxError, fmt::format("expected register, got '{}'", tok));
        }
        int index = 0;
        auto digits = tok.substr(1);
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
        if (ec != std::errc() || ptr != digits.data() + digits.size()) {
            fail(Errc::SyntaxError, fmt::format("expected register, got '{}'", tok));
        }
        if (index > Register::max_index) {
            fail(Errc::BadRegister, fmt::format("invalid register r{}", index));
        }
        return Register(index);
    }

    static bool looks_like_register(std::string_view tok)
    {
        tok = _trim(tok);
        return tok.size() >= 2 && (tok[0] == '%' || ((tok[0] == 'r' || tok[0] == 'R') &&
                                                     std::isdigit(static_cast<unsigned char>(tok[1]))));
    }

    // Signed 32-bit immediate; hex literals are bit patterns.
    std::int32_t imm32(std::string_view tok) const
    {
        tok = _trim(tok);
        auto lit = _parse_literal(tok);
        if (!lit) {
            fail(Errc::SyntaxError, fmt::format("expected immediate, got '{}'", tok));
        }
        if (lit->negative) {
            if (lit->magnitude > 0x80000000ULL) {
                fail(Errc::ImmediateOutOfRange, fmt::format("immediate {} does not fit 32 bits", tok));
            }
            return static_cast<std::int32_t>(-static_cast<std::int64_t>(lit->magnitude));
        }
        const std::uint64_t limit = lit->hex ? 0xffffffffULL : 0x7fffffffULL;
        if (lit->magnitude > limit) {
            fail(Errc::ImmediateOutOfRange, fmt::format("immediate {} does not fit 32 bits", tok));
        }
        return static_cast<std::int32_t>(static_cast<std::uint32_t>(lit->magnitude));
    }

    std::int64_t imm64(std::string_view tok) const
    {
        tok = _trim(tok);
        auto lit = _parse_literal(tok);
        if (!lit) {
            fail(Errc::SyntaxError, fmt::format("expected immediate, got '{}'", tok));
        }
        if (lit->negative) {
            if (lit->magnitude > 0x8000000000000000ULL) {
                fail(Errc::ImmediateOutOfRange, fmt::format("immediate {} does not fit 64 bits", tok));
            }
            return static_cast<std::int64_t>(0 - lit->magnitude);
        }
        if (!lit->hex && lit->magnitude > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
            fail(Errc::ImmediateOutOfRange, fmt::format("immediate {} does not fit 64 bits", tok));
        }
        return static_cast<std::int64_t>(lit->magnitude);
    }

    std::int16_t offset16(std::string_view tok) const
    {
        tok = _trim(tok);
        auto lit = _parse_literal(tok);
        if (!lit) {
            fail(Errc::SyntaxError, fmt::format("expected offset, got '{}'", tok));
        }
        const std::int64_t value =
            lit->negative ? -static_cast<std::int64_t>(lit->magnitude) : static_cast<std::int64_t>(lit->magnitude);
        if (lit->magnitude > 0x8000 || value > std::numeric_limits<std::int16_t>::max()) {
            fail(Errc::ImmediateOutOfRange, fmt::format("offset {} does not fit 16 bits", tok));
        }
        return static_cast<std::int16_t>(value);
    }

    // "[%rN]", "[%rN+off]" or "[%rN-off]".
    std::pair<Register, std::int16_t> memory(std::string_view tok) const
    {
        tok = _trim(tok);
        if (tok.size() < 2 || tok.front() != '[' || tok.back() != ']') {
            fail(Errc::SyntaxError, fmt::format("expected memory operand, got '{}'", tok));
        }
        auto inner = tok.substr(1, tok.size() - 2);
        auto sign = inner.find_first_of("+-");
        if (sign == std::string_view::npos) {
            return {reg(inner), 0};
        }
        auto off_text = std::string(_trim(inner.substr(sign)));
        off_text.erase(std::remove_if(off_text.begin(), off_text.end(), ::isspace), off_text.end());
        return {reg(inner.substr(0, sign)), offset16(off_text)};
    }

    int line() const { return line_; }

  private:
    std::string_view text_;
    int line_;
};

std::vector<std::string_view>
_split_operands(std::string_view s)
{
    std::vector<std::string_view> out;
    s = _trim(s);
    if (s.empty()) {
        return out;
    }
    int depth = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '[') {
            ++depth;
        } else if (s[i] == ']') {
            --depth;
        } else if (s[i] == ',' && depth == 0) {
            out.push_back(_trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    out.push_back(_trim(s.substr(start)));
    return out;
}

std::string_view
_strip_comment(std::string_view line)
{
    auto hash = line.find('#');
    auto slashes = line.find("//");
    auto cut = std::min(hash, slashes);
    return cut == std::string_view::npos ? line : line.substr(0, cut);
}

// A jump operand is either resolved now or refers to a label.
struct PendingJump {
    std::size_t instruction;
    std::string label;
    int line;
};

std::string
_format_imm(std::int64_t value)
{
    if (value < 0) {
        return fmt::format("-{}", static_cast<std::uint64_t>(0) - static_cast<std::uint64_t>(value));
    }
    if (value < 10) {
        return fmt::format("{}", value);
    }
    return fmt::format("0x{:x}", value);
}

std::string
_format_offset(std::int16_t offset)
{
    return offset < 0 ? fmt::format("-{}", -static_cast<int>(offset)) : fmt::format("+{}", offset);
}

std::string
_format_mem(Register base, std::int16_t offset)
{
    if (offset == 0) {
        return fmt::format("[%r{}]", base.index());
    }
    return fmt::format("[%r{}{}]", base.index(), _format_offset(offset));
}

} // namespace

Program
parse_asm(std::string_view text)
{
    std::vector<Instruction> instructions;
    std::map<std::string, std::size_t> labels;
    std::vector<PendingJump> pending;

    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) {
            eol = text.size();
        }
        ++line_no;
        std::string_view line = _trim(_strip_comment(text.substr(pos, eol - pos)));
        pos = eol + 1;

        LineParser p(line, line_no);
        // Leading "name:" label definitions.
        while (true) {
            auto colon = line.find(':');
            if (colon == std::string_view::npos) {
                break;
            }
            auto name = _trim(line.substr(0, colon));
            if (!_is_label_name(name)) {
                break;
            }
            if (!labels.emplace(std::string(name), instructions.size()).second) {
                p.fail(Errc::SyntaxError, fmt::format("duplicate label '{}'", name));
            }
            line = _trim(line.substr(colon + 1));
        }
        if (line.empty()) {
            if (pos > text.size()) {
                break;
            }
            continue;
        }

        auto space = line.find_first_of(" \t");
        std::string_view name = line.substr(0, space);
        auto operands = _split_operands(space == std::string_view::npos ? std::string_view{} : line.substr(space));
        std::string lowered(name);
        std::transform(lowered.begin(), lowered.end(), lowered.begin(), ::tolower);
        if (lowered.size() > 2 && lowered.ends_with("64") && find_asm_name(lowered).empty()) {
            // "add64" is accepted as an alias of "add".
            lowered.resize(lowered.size() - 2);
        }
        auto candidates = find_asm_name(lowered);
        if (candidates.empty()) {
            p.fail(Errc::UnknownMnemonic, fmt::format("unknown mnemonic '{}'", name));
        }

        auto expect_operands = [&](std::size_t n) {
            if (operands.size() != n) {
                p.fail(
                    Errc::SyntaxError,
                    fmt::format("'{}' expects {} operand(s), got {}", name, n, operands.size()));
            }
        };
        // Picks the K or X variant sharing this asm name.
        auto pick = [&](bool reg_operand) -> const OpcodeInfo& {
            for (const auto* c : candidates) {
                if ((c->source == Source::X) == reg_operand || candidates.size() == 1) {
                    return *c;
                }
            }
            return *candidates.front();
        };

        Instruction insn;
        const OpcodeInfo* info = candidates.front();
        std::optional<std::string> jump_label;
        auto jump_target = [&](std::string_view tok) {
            tok = _trim(tok);
            if (!tok.empty() && (tok[0] == '+' || tok[0] == '-' || std::isdigit(static_cast<unsigned char>(tok[0])))) {
                insn.offset = p.offset16(tok);
            } else if (_is_label_name(tok)) {
                jump_label = std::string(tok);
            } else {
                p.fail(Errc::SyntaxError, fmt::format("bad jump target '{}'", tok));
            }
        };

        switch (info->form) {
        case Form::AluImm:
        case Form::AluReg: {
            expect_operands(2);
            const bool reg_operand = LineParser::looks_like_register(operands[1]);
            info = &pick(reg_operand);
            insn.dst = p.reg(operands[0]);
            if (reg_operand) {
                insn.src = p.reg(operands[1]);
            } else {
                insn.imm = p.imm32(operands[1]);
            }
            insn.offset = static_cast<std::int16_t>(info->selector == Selector::Offset ? info->selector_value : 0);
            break;
        }
        case Form::Neg:
        case Form::ByteSwap:
            expect_operands(1);
            insn.dst = p.reg(operands[0]);
            if (info->form == Form::ByteSwap) {
                insn.imm = info->selector_value;
            }
            break;
        case Form::MovSx:
            expect_operands(2);
            insn.dst = p.reg(operands[0]);
            insn.src = p.reg(operands[1]);
            insn.offset = static_cast<std::int16_t>(info->selector_value);
            break;
        case Form::JumpAlways:
            expect_operands(1);
            jump_target(operands[0]);
            break;
        case Form::JumpImm:
        case Form::JumpReg: {
            expect_operands(3);
            const bool reg_operand = LineParser::looks_like_register(operands[1]);
            info = &pick(reg_operand);
            insn.dst = p.reg(operands[0]);
            if (reg_operand) {
                insn.src = p.reg(operands[1]);
            } else {
                insn.imm = p.imm32(operands[1]);
            }
            jump_target(operands[2]);
            break;
        }
        case Form::Call:
            expect_operands(1);
            insn.imm = p.imm32(operands[0]);
            break;
        case Form::Exit: expect_operands(0); break;
        case Form::LoadImm64:
            expect_operands(2);
            insn.dst = p.reg(operands[0]);
            insn.imm = p.imm64(operands[1]);
            break;
        case Form::Load: {
            expect_operands(2);
            insn.dst = p.reg(operands[0]);
            auto [base, off] = p.memory(operands[1]);
            insn.src = base;
            insn.offset = off;
            break;
        }
        case Form::StoreImm:
        case Form::StoreReg: {
            expect_operands(2);
            auto [base, off] = p.memory(operands[0]);
            insn.dst = base;
            insn.offset = off;
            if (info->form == Form::StoreReg) {
                insn.src = p.reg(operands[1]);
            } else {
                insn.imm = p.imm32(operands[1]);
            }
            break;
        }
        }
        insn.opcode = info->opcode;
        try {
            validate(insn);
        } catch (const Error& e) {
            throw Error(e.code(), e.detail(), line_no);
        }
        if (jump_label) {
            pending.push_back({instructions.size(), *jump_label, line_no});
        }
        instructions.push_back(insn);
        if (pos > text.size()) {
            break;
        }
    }

    // Label targets are instruction indices; offsets count slots.
    std::vector<std::size_t> slot_of(instructions.size() + 1, 0);
    for (std::size_t i = 0; i < instructions.size(); ++i) {
        slot_of[i + 1] = slot_of[i] + instructions[i].slots();
    }
    for (const auto& jump : pending) {
        auto it = labels.find(jump.label);
        if (it == labels.end()) {
            throw Error(Errc::UnresolvedLabel, fmt::format("undefined label '{}'", jump.label), jump.line);
        }
        const std::int64_t delta = static_cast<std::int64_t>(slot_of[it->second]) -
                                   static_cast<std::int64_t>(slot_of[jump.instruction]) - 1;
        if (delta < std::numeric_limits<std::int16_t>::min() || delta > std::numeric_limits<std::int16_t>::max()) {
            throw Error(Errc::JumpOutOfRange, fmt::format("label '{}' is too far away", jump.label), jump.line);
        }
        instructions[jump.instruction].offset = static_cast<std::int16_t>(delta);
    }

    try {
        return Program(std::move(instructions), std::move(labels));
    } catch (const Error& e) {
        throw Error(e.code(), e.detail(), line_no);
    }
}

std::string
format_instruction(const Instruction& insn)
{
    const OpcodeInfo& info = insn.info();
    const int dst = insn.dst.index();
    const int src = insn.src.index();
    switch (info.form) {
    case Form::AluImm: return fmt::format("{} %r{}, {}", info.asm_name, dst, _format_imm(insn.imm));
    case Form::AluReg:
    case Form::MovSx: return fmt::format("{} %r{}, %r{}", info.asm_name, dst, src);
    case Form::Neg:
    case Form::ByteSwap: return fmt::format("{} %r{}", info.asm_name, dst);
    case Form::JumpAlways: return fmt::format("{} {}", info.asm_name, _format_offset(insn.offset));
    case Form::JumpImm:
        return fmt::format("{} %r{}, {}, {}", info.asm_name, dst, _format_imm(insn.imm), _format_offset(insn.offset));
    case Form::JumpReg:
        return fmt::format("{} %r{}, %r{}, {}", info.asm_name, dst, src, _format_offset(insn.offset));
    case Form::Call: return fmt::format("call {}", _format_imm(insn.imm));
    case Form::Exit: return "exit";
    case Form::LoadImm64: return fmt::format("lddw %r{}, {}", dst, _format_imm(insn.imm));
    case Form::Load: return fmt::format("{} %r{}, {}", info.asm_name, dst, _format_mem(insn.src, insn.offset));
    case Form::StoreImm:
        return fmt::format("{} {}, {}", info.asm_name, _format_mem(insn.dst, insn.offset), _format_imm(insn.imm));
    case Form::StoreReg:
        return fmt::format("{} {}, %r{}", info.asm_name, _format_mem(insn.dst, insn.offset), src);
    }
    return {};
}

std::string
format_asm(const Program& program)
{
    std::string out;
    for (const auto& insn : program.instructions()) {
        if (!out.empty()) {
            out += '\n';
        }
        out += format_instruction(insn);
    }
    return out;
}

std::vector<std::uint8_t>
encode(const Program& program)
{
    std::vector<std::uint8_t> out;
    out.reserve(program.slot_count() * 8);
    auto emit = [&](std::uint8_t op, std::uint8_t regs, std::int16_t offset, std::int32_t imm) {
        out.push_back(op);
        out.push_back(regs);
        const auto off = static_cast<std::uint16_t>(offset);
        out.push_back(static_cast<std::uint8_t>(off & 0xff));
        out.push_back(static_cast<std::uint8_t>(off >> 8));
        const auto u = static_cast<std::uint32_t>(imm);
        for (int i = 0; i < 4; ++i) {
            out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
        }
    };
    for (const auto& insn : program.instructions()) {
        const auto regs = static_cast<std::uint8_t>(insn.dst.index() | (insn.src.index() << 4));
        const auto bits = static_cast<std::uint64_t>(insn.imm);
        emit(insn.opcode, regs, insn.offset, static_cast<std::int32_t>(static_cast<std::uint32_t>(bits)));
        if (insn.opcode == Instruction::lddw_opcode) {
            emit(0, 0, 0, static_cast<std::int32_t>(static_cast<std::uint32_t>(bits >> 32)));
        }
    }
    return out;
}

Program
decode(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() % 8 != 0) {
        throw Error(Errc::TruncatedInput, fmt::format("input length {} is not a multiple of 8", bytes.size()));
    }
    auto read_slot = [&](std::size_t slot) {
        const auto* b = bytes.data() + slot * 8;
        struct Raw {
            std::uint8_t op;
            std::uint8_t regs;
            std::int16_t offset;
            std::int32_t imm;
        } raw{};
        raw.op = b[0];
        raw.regs = b[1];
        raw.offset = static_cast<std::int16_t>(static_cast<std::uint16_t>(b[2] | (b[3] << 8)));
        raw.imm = static_cast<std::int32_t>(
            static_cast<std::uint32_t>(b[4]) | (static_cast<std::uint32_t>(b[5]) << 8) |
            (static_cast<std::uint32_t>(b[6]) << 16) | (static_cast<std::uint32_t>(b[7]) << 24));
        return raw;
    };

    std::vector<Instruction> instructions;
    const std::size_t slots = bytes.size() / 8;
    for (std::size_t slot = 0; slot < slots; ++slot) {
        auto raw = read_slot(slot);
        if (find_opcode(raw.op, raw.offset, raw.imm) == nullptr) {
            throw Error(Errc::UnknownOpcode, fmt::format("unknown opcode 0x{:02x} at byte {}", raw.op, slot * 8));
        }
        const int dst = raw.regs & 0x0f;
        const int src = raw.regs >> 4;
        if (dst > Register::max_index || src > Register::max_index) {
            throw Error(
                Errc::BadRegister,
                fmt::format("invalid register r{} at byte {}", std::max(dst, src), slot * 8));
        }
        Instruction insn{raw.op, Register(dst), Register(src), raw.offset, raw.imm};
        if (raw.op == Instruction::lddw_opcode) {
            if (slot + 1 >= slots) {
                throw Error(Errc::MalformedLddwPair, fmt::format("lddw at byte {} is missing its second slot", slot * 8));
            }
            auto hi = read_slot(++slot);
            if (hi.op != 0 || hi.regs != 0 || hi.offset != 0) {
                throw Error(
                    Errc::MalformedLddwPair, fmt::format("lddw second slot at byte {} is not a pseudo slot", slot * 8));
            }
            insn.imm = static_cast<std::int64_t>(
                (static_cast<std::uint64_t>(static_cast<std::uint32_t>(hi.imm)) << 32) |
                static_cast<std::uint32_t>(raw.imm));
        }
        instructions.push_back(insn);
    }
    return Program(std::move(instructions));
}

std::string
to_hex(std::span<const std::uint8_t> bytes)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

std::vector<std::uint8_t>
from_hex(std::string_view text)
{
    std::vector<std::uint8_t> out;
    int pending = -1;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (pending >= 0) {
                throw Error(Errc::BadMemHex, "odd number of hex digits in byte");
            }
            continue;
        }
        int v;
        if (c >= '0' && c <= '9') {
            v = c - '0';
        } else if (c >= 'a' && c <= 'f') {
            v = c - 'a' + 10;
        } else if (c >= 'A' && c <= 'F') {
            v = c - 'A' + 10;
        } else {
            throw Error(Errc::BadMemHex, fmt::format("invalid hex character '{}'", c));
        }
        if (pending < 0) {
            pending = v;
        } else {
            out.push_back(static_cast<std::uint8_t>((pending << 4) | v));
            pending = -1;
        }
    }
    if (pending >= 0) {
        throw Error(Errc::BadMemHex, "odd number of hex digits");
    }
    return out;
}

} // namespace diffharness
