// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffharness/isa.hpp"

#include <algorithm>
#include <cctype>
#include <fmt/format.h>
#include <limits>

#include "diffharness/error.hpp"

namespace diffharness {

std::string_view errc_name(Errc code)
{
    switch (code) {
    case Errc::UnknownMnemonic: return "UnknownMnemonic";
    case Errc::BadRegister: return "BadRegister";
    case Errc::ImmediateOutOfRange: return "ImmediateOutOfRange";
    case Errc::UnresolvedLabel: return "UnresolvedLabel";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::JumpOutOfRange: return "JumpOutOfRange";
    case Errc::TruncatedInput: return "TruncatedInput";
    case Errc::UnknownOpcode: return "UnknownOpcode";
    case Errc::MalformedLddwPair: return "MalformedLddwPair";
    case Errc::MalformedInstruction: return "MalformedInstruction";
    case Errc::MissingAsmSection: return "MissingAsmSection";
    case Errc::BothResultAndError: return "BothResultAndError";
    case Errc::NeitherResultNorError: return "NeitherResultNorError";
    case Errc::BadMemHex: return "BadMemHex";
    case Errc::BadResultLiteral: return "BadResultLiteral";
    case Errc::DuplicateTestName: return "DuplicateTestName";
    case Errc::PluginNotFound: return "PluginNotFound";
    case Errc::SpawnFailure: return "SpawnFailure";
    case Errc::UnknownRuntime: return "UnknownRuntime";
    case Errc::ProviderHttpError: return "ProviderHttpError";
    case Errc::FixtureMiss: return "FixtureMiss";
    case Errc::ProviderConfig: return "ProviderConfig";
    case Errc::EmptyExtraction: return "EmptyExtraction";
    case Errc::PreconditionViolated: return "PreconditionViolated";
    case Errc::NoCandidateFiles: return "NoCandidateFiles";
    case Errc::HallucinatedExcerpt: return "HallucinatedExcerpt";
    case Errc::UnparseableCategories: return "UnparseableCategories";
    case Errc::MissingContext: return "MissingContext";
    case Errc::UnparseableTest: return "UnparseableTest";
    case Errc::IncompleteMatrix: return "IncompleteMatrix";
    case Errc::InvalidInput: return "InvalidInput";
    }
    return "Unknown";
}

static std::string
_with_line(const std::string& message, std::optional<int> line)
{
    return line ? fmt::format("line {}: {}", *line, message) : message;
}

Error::Error(Errc code, const std::string& message, std::optional<int> line)
    : std::runtime_error(_with_line(message, line)), code_(code), line_(line), detail_(message)
{
}

Register::Register(int index)
{
    if (index < 0 || index > max_index) {
        throw Error(Errc::BadRegister, fmt::format("invalid register r{}", index));
    }
    index_ = static_cast<std::uint8_t>(index);
}

namespace {

constexpr std::array<std::string_view, mnemonic_count> mnemonic_names = {
    "ADD", "SUB", "MUL",  "DIV",  "OR",   "AND",  "LSH", "RSH",  "NEG",  "MOD",  "XOR",  "MOV",
    "MOVSX", "ARSH", "END", "JA", "JEQ", "JGT", "JGE", "JSET", "JNE", "JSGT", "JSGE", "CALL",
    "EXIT", "JLT", "JLE", "JSLT", "JSLE", "LDDW", "LDX", "LDXS", "ST", "STX",
};

std::vector<OpcodeInfo>
_build_table()
{
    std::vector<OpcodeInfo> table;
    auto add = [&](std::uint8_t opcode, Selector sel, std::int32_t sel_value, Mnemonic m, Source src, Form form,
                   std::uint8_t width, bool is_signed, std::string_view name) {
        table.push_back(OpcodeInfo{
            opcode, sel, sel_value, m, static_cast<OpClass>(opcode & 0x07), src, form, width, is_signed, name});
    };

    struct AluOp {
        std::uint8_t code;
        Mnemonic mnemonic;
        std::string_view name64;
        std::string_view name32;
    };
    static constexpr AluOp alu_ops[] = {
        {0x00, Mnemonic::Add, "add", "add32"},   {0x10, Mnemonic::Sub, "sub", "sub32"},
        {0x20, Mnemonic::Mul, "mul", "mul32"},   {0x30, Mnemonic::Div, "div", "div32"},
        {0x40, Mnemonic::Or, "or", "or32"},      {0x50, Mnemonic::And, "and", "and32"},
        {0x60, Mnemonic::Lsh, "lsh", "lsh32"},   {0x70, Mnemonic::Rsh, "rsh", "rsh32"},
        {0x90, Mnemonic::Mod, "mod", "mod32"},   {0xa0, Mnemonic::Xor, "xor", "xor32"},
        {0xb0, Mnemonic::Mov, "mov", "mov32"},   {0xc0, Mnemonic::Arsh, "arsh", "arsh32"},
    };
    for (const auto& op : alu_ops) {
        const bool has_signed = op.mnemonic == Mnemonic::Div || op.mnemonic == Mnemonic::Mod;
        const Selector sel = (has_signed || op.mnemonic == Mnemonic::Mov) ? Selector::Offset : Selector::None;
        for (auto [cls, name] : {std::pair{0x07, op.name64}, std::pair{0x04, op.name32}}) {
            for (auto src : {Source::K, Source::X}) {
                const auto opcode = static_cast<std::uint8_t>(op.code | static_cast<int>(src) | cls);
                const Form form = src == Source::K ? Form::AluImm : Form::AluReg;
                add(opcode, sel, 0, op.mnemonic, src, form, 0, false, name);
                if (has_signed) {
                    const std::string_view signed_name =
                        op.mnemonic == Mnemonic::Div ? (cls == 0x07 ? "sdiv" : "sdiv32")
                                                     : (cls == 0x07 ? "smod" : "smod32");
                    add(opcode, sel, 1, op.mnemonic, src, form, 0, true, signed_name);
                }
            }
        }
    }
    add(0x87, Selector::None, 0, Mnemonic::Neg, Source::K, Form::Neg, 0, false, "neg");
    add(0x84, Selector::None, 0, Mnemonic::Neg, Source::K, Form::Neg, 0, false, "neg32");
    add(0xbc, Selector::Offset, 8, Mnemonic::Movsx, Source::X, Form::MovSx, 0, true, "movsx832");
    add(0xbc, Selector::Offset, 16, Mnemonic::Movsx, Source::X, Form::MovSx, 0, true, "movsx1632");
    add(0xbf, Selector::Offset, 8, Mnemonic::Movsx, Source::X, Form::MovSx, 0, true, "movsx864");
    add(0xbf, Selector::Offset, 16, Mnemonic::Movsx, Source::X, Form::MovSx, 0, true, "movsx1664");
    add(0xbf, Selector::Offset, 32, Mnemonic::Movsx, Source::X, Form::MovSx, 0, true, "movsx3264");
    static constexpr std::pair<int, std::string_view> le[] = {{16, "le16"}, {32, "le32"}, {64, "le64"}};
    static constexpr std::pair<int, std::string_view> be[] = {{16, "be16"}, {32, "be32"}, {64, "be64"}};
    static constexpr std::pair<int, std::string_view> bswap[] = {{16, "bswap16"}, {32, "bswap32"}, {64, "bswap64"}};
    for (auto [bits, name] : le) {
        add(0xd4, Selector::Imm, bits, Mnemonic::End, Source::K, Form::ByteSwap, 0, false, name);
    }
    for (auto [bits, name] : be) {
        add(0xdc, Selector::Imm, bits, Mnemonic::End, Source::X, Form::ByteSwap, 0, false, name);
    }
    for (auto [bits, name] : bswap) {
        add(0xd7, Selector::Imm, bits, Mnemonic::End, Source::K, Form::ByteSwap, 0, false, name);
    }

    struct JmpOp {
        std::uint8_t code;
        Mnemonic mnemonic;
        std::string_view name;
    };
    static constexpr JmpOp jmp_ops[] = {
        {0x10, Mnemonic::Jeq, "jeq"},   {0x20, Mnemonic::Jgt, "jgt"},   {0x30, Mnemonic::Jge, "jge"},
        {0x40, Mnemonic::Jset, "jset"}, {0x50, Mnemonic::Jne, "jne"},   {0x60, Mnemonic::Jsgt, "jsgt"},
        {0x70, Mnemonic::Jsge, "jsge"}, {0xa0, Mnemonic::Jlt, "jlt"},   {0xb0, Mnemonic::Jle, "jle"},
        {0xc0, Mnemonic::Jslt, "jslt"}, {0xd0, Mnemonic::Jsle, "jsle"},
    };
    add(0x05, Selector::None, 0, Mnemonic::Ja, Source::K, Form::JumpAlways, 0, false, "ja");
    for (const auto& op : jmp_ops) {
        for (int cls : {0x05, 0x06}) {
            for (auto src : {Source::K, Source::X}) {
                const auto opcode = static_cast<std::uint8_t>(op.code | static_cast<int>(src) | cls);
                std::string_view name = op.name;
                if (cls == 0x06) {
                    // Names for the 32-bit variants live in a static pool so
                    // string_views stay valid.
                    static const std::vector<std::string> pool = [] {
                        std::vector<std::string> names;
                        for (const auto& j : jmp_ops) {
                            names.push_back(std::string(j.name) + "32");
                        }
                        return names;
                    }();
                    name = pool[static_cast<std::size_t>(&op - jmp_ops)];
                }
                add(opcode, Selector::None, 0, op.mnemonic, src, src == Source::K ? Form::JumpImm : Form::JumpReg,
                    0, op.mnemonic == Mnemonic::Jsgt || op.mnemonic == Mnemonic::Jsge ||
                           op.mnemonic == Mnemonic::Jslt || op.mnemonic == Mnemonic::Jsle,
                    name);
            }
        }
    }
    add(0x85, Selector::None, 0, Mnemonic::Call, Source::K, Form::Call, 0, false, "call");
    add(0x95, Selector::None, 0, Mnemonic::Exit, Source::K, Form::Exit, 0, false, "exit");

    add(Instruction::lddw_opcode, Selector::None, 0, Mnemonic::Lddw, Source::K, Form::LoadImm64, 8, false, "lddw");
    struct Size {
        std::uint8_t bits;
        std::uint8_t width;
        std::string_view suffix;
    };
    static constexpr Size sizes[] = {{0x00, 4, "w"}, {0x08, 2, "h"}, {0x10, 1, "b"}, {0x18, 8, "dw"}};
    static const std::vector<std::string> mem_names = [] {
        std::vector<std::string> names;
        for (std::string_view prefix : {"ldx", "ldxs", "st", "stx"}) {
            for (const auto& s : sizes) {
                names.push_back(std::string(prefix) + std::string(s.suffix));
            }
        }
        return names;
    }();
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& s = sizes[i];
        add(static_cast<std::uint8_t>(0x61 | s.bits), Selector::None, 0, Mnemonic::Ldx, Source::X, Form::Load,
            s.width, false, mem_names[i]);
        if (s.width != 8) {
            add(static_cast<std::uint8_t>(0x81 | s.bits), Selector::None, 0, Mnemonic::Ldxs, Source::X, Form::Load,
                s.width, true, mem_names[4 + i]);
        }
        add(static_cast<std::uint8_t>(0x62 | s.bits), Selector::None, 0, Mnemonic::St, Source::K, Form::StoreImm,
            s.width, false, mem_names[8 + i]);
        add(static_cast<std::uint8_t>(0x63 | s.bits), Selector::None, 0, Mnemonic::Stx, Source::X, Form::StoreReg,
            s.width, false, mem_names[12 + i]);
    }
    return table;
}

const std::vector<OpcodeInfo>&
_table()
{
    static const std::vector<OpcodeInfo> table = _build_table();
    return table;
}

bool
_iequals(std::string_view a, std::string_view b)
{
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

} // namespace

std::string_view
mnemonic_name(Mnemonic m)
{
    return mnemonic_names.at(static_cast<std::size_t>(m));
}

std::optional<Mnemonic>
mnemonic_from_name(std::string_view name)
{
    for (std::size_t i = 0; i < mnemonic_names.size(); ++i) {
        if (_iequals(mnemonic_names[i], name)) {
            return static_cast<Mnemonic>(i);
        }
    }
    return std::nullopt;
}

std::span<const Mnemonic>
all_mnemonics()
{
    static const std::array<Mnemonic, mnemonic_count> all = [] {
        std::array<Mnemonic, mnemonic_count> out{};
        for (std::size_t i = 0; i < mnemonic_count; ++i) {
            out[i] = static_cast<Mnemonic>(i);
        }
        return out;
    }();
    return all;
}

std::span<const OpcodeInfo>
opcode_table()
{
    return _table();
}

const OpcodeInfo*
find_opcode(std::uint8_t opcode, std::int16_t offset, std::int64_t imm)
{
    for (const auto& info : _table()) {
        if (info.opcode != opcode) {
            continue;
        }
        switch (info.selector) {
        case Selector::None: return &info;
        case Selector::Offset:
            if (info.selector_value == offset) {
                return &info;
            }
            break;
        case Selector::Imm:
            if (info.selector_value == imm) {
                return &info;
            }
            break;
        }
    }
    return nullptr;
}

std::vector<const OpcodeInfo*>
find_asm_name(std::string_view name)
{
    std::vector<const OpcodeInfo*> out;
    for (const auto& info : _table()) {
        if (_iequals(info.asm_name, name)) {
            out.push_back(&info);
        }
    }
    return out;
}

const OpcodeInfo&
Instruction::info() const
{
    const OpcodeInfo* found = find_opcode(opcode, offset, imm);
    if (found == nullptr) {
        throw Error(Errc::UnknownOpcode, fmt::format("unknown opcode 0x{:02x}", opcode));
    }
    return *found;
}

bool
Instruction::is_jump() const
{
    const Form f = form();
    return f == Form::JumpAlways || f == Form::JumpImm || f == Form::JumpReg;
}

void
validate(const Instruction& insn)
{
    const OpcodeInfo& info = insn.info();
    auto require_zero = [&](bool ok, std::string_view field) {
        if (!ok) {
            throw Error(
                Errc::MalformedInstruction,
                fmt::format("{}: field '{}' must be zero", info.asm_name, field));
        }
    };
    const bool imm32 = insn.imm >= std::numeric_limits<std::int32_t>::min() &&
                       insn.imm <= std::numeric_limits<std::int32_t>::max();
    if (info.form != Form::LoadImm64 && !imm32) {
        throw Error(Errc::ImmediateOutOfRange, fmt::format("{}: immediate does not fit 32 bits", info.asm_name));
    }
    const bool offset_is_selector = info.selector == Selector::Offset;
    switch (info.form) {
    case Form::AluImm:
        require_zero(insn.src.index() == 0, "src");
        require_zero(offset_is_selector || insn.offset == 0, "offset");
        break;
    case Form::AluReg:
    case Form::MovSx:
        require_zero(insn.imm == 0, "imm");
        require_zero(offset_is_selector || insn.offset == 0, "offset");
        break;
    case Form::Neg:
        require_zero(insn.src.index() == 0, "src");
        require_zero(insn.offset == 0, "offset");
        require_zero(insn.imm == 0, "imm");
        break;
    case Form::ByteSwap:
        require_zero(insn.src.index() == 0, "src");
        require_zero(insn.offset == 0, "offset");
        break;
    case Form::JumpAlways:
        require_zero(insn.dst.index() == 0, "dst");
        require_zero(insn.src.index() == 0, "src");
        require_zero(insn.imm == 0, "imm");
        break;
    case Form::JumpImm:
        require_zero(insn.src.index() == 0, "src");
        break;
    case Form::JumpReg:
    case Form::Load:
    case Form::StoreReg:
        require_zero(insn.imm == 0, "imm");
        break;
    case Form::Call:
        require_zero(insn.dst.index() == 0, "dst");
        require_zero(insn.src.index() == 0, "src");
        require_zero(insn.offset == 0, "offset");
        break;
    case Form::Exit:
        require_zero(insn.dst.index() == 0, "dst");
        require_zero(insn.src.index() == 0, "src");
        require_zero(insn.offset == 0, "offset");
        require_zero(insn.imm == 0, "imm");
        break;
    case Form::LoadImm64:
        require_zero(insn.src.index() == 0, "src");
        require_zero(insn.offset == 0, "offset");
        break;
    case Form::StoreImm:
        require_zero(insn.src.index() == 0, "src");
        break;
    }
}

Program::Program(std::vector<Instruction> instructions, std::map<std::string, std::size_t> labels)
    : instructions_(std::move(instructions)), labels_(std::move(labels))
{
    slot_of_.reserve(instructions_.size() + 1);
    std::size_t slot = 0;
    for (const auto& insn : instructions_) {
        validate(insn);
        slot_of_.push_back(slot);
        slot += insn.slots();
    }
    slot_of_.push_back(slot);

    for (std::size_t i = 0; i < instructions_.size(); ++i) {
        const auto& insn = instructions_[i];
        if (!insn.is_jump()) {
            continue;
        }
        const std::int64_t target = static_cast<std::int64_t>(slot_of_[i]) + 1 + insn.offset;
        if (!index_at_slot(target)) {
            throw Error(
                Errc::JumpOutOfRange,
                fmt::format("jump at instruction {} targets slot {} outside the program or inside lddw", i, target));
        }
    }
    for (const auto& [name, index] : labels_) {
        if (index > instructions_.size()) {
            throw Error(Errc::UnresolvedLabel, fmt::format("label '{}' points past the end of the program", name));
        }
    }
}

std::optional<std::size_t>
Program::index_at_slot(std::int64_t slot) const
{
    if (slot < 0) {
        return std::nullopt;
    }
    auto it = std::lower_bound(slot_of_.begin(), slot_of_.end(), static_cast<std::size_t>(slot));
    if (it == slot_of_.end() || *it != static_cast<std::size_t>(slot)) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - slot_of_.begin());
}

} // namespace diffharness
