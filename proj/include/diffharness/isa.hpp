// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Instruction model for the eBPF ISA: registers, the opcode table, decoded
// instructions and programs. Encoding layout per 8-byte slot:
//   op:8 | dst:4 src:4 | offset:16 (signed LE) | imm:32 (signed LE)
// LDDW occupies two slots; the second slot carries the high 32 bits of imm.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace diffharness {

class Register {
  public:
    static constexpr int max_index = 10;
    static constexpr int frame_pointer = 10;

    constexpr Register() = default;
    // Throws Error{BadRegister} when index is outside 0..=10.
    explicit Register(int index);

    constexpr int index() const noexcept { return index_; }
    friend constexpr bool operator==(Register, Register) = default;
    friend constexpr auto operator<=>(Register, Register) = default;

  private:
    std::uint8_t index_ = 0;
};

enum class OpClass : std::uint8_t {
    Ld = 0x00,
    Ldx = 0x01,
    St = 0x02,
    Stx = 0x03,
    Alu = 0x04,
    Jmp = 0x05,
    Jmp32 = 0x06,
    Alu64 = 0x07,
};

enum class Source : std::uint8_t {
    K = 0x00, // immediate
    X = 0x08, // register
};

// The 34 instruction families exercised by the framework. Version of this
// table is isa_table_version; bump it whenever an entry changes.
enum class Mnemonic : std::uint8_t {
    Add,
    Sub,
    Mul,
    Div,
    Or,
    And,
    Lsh,
    Rsh,
    Neg,
    Mod,
    Xor,
    Mov,
    Movsx,
    Arsh,
    End,
    Ja,
    Jeq,
    Jgt,
    Jge,
    Jset,
    Jne,
    Jsgt,
    Jsge,
    Call,
    Exit,
    Jlt,
    Jle,
    Jslt,
    Jsle,
    Lddw,
    Ldx,
    Ldxs,
    St,
    Stx,
};

inline constexpr std::size_t mnemonic_count = 34;
inline constexpr int isa_table_version = 1;

std::string_view mnemonic_name(Mnemonic m);
// Case-insensitive.
std::optional<Mnemonic> mnemonic_from_name(std::string_view name);
std::span<const Mnemonic> all_mnemonics();

// Syntactic shape of an instruction; selects operand syntax and semantics.
enum class Form : std::uint8_t {
    AluImm,    // add %r0, 1
    AluReg,    // add %r0, %r1
    Neg,       // neg %r0
    MovSx,     // movsx832 %r0, %r1
    ByteSwap,  // le16 %r0
    JumpAlways, // ja +1
    JumpImm,   // jeq %r0, 1, +1
    JumpReg,   // jeq %r0, %r1, +1
    Call,      // call 1
    Exit,      // exit
    LoadImm64, // lddw %r0, 0x1
    Load,      // ldxw %r0, [%r1+2]
    StoreImm,  // stw [%r1+2], 1
    StoreReg,  // stxw [%r1+2], %r2
};

// Instructions sharing an opcode byte are told apart by a selector held in
// either the offset field (sdiv, movsx) or the imm field (byte swaps).
enum class Selector : std::uint8_t { None, Offset, Imm };

struct OpcodeInfo {
    std::uint8_t opcode;
    Selector selector;
    std::int32_t selector_value;
    Mnemonic mnemonic;
    OpClass op_class;
    Source source;
    Form form;
    std::uint8_t width; // access width in bytes for memory forms, 0 otherwise
    bool is_signed;     // sdiv/smod and sign-extending loads
    std::string_view asm_name;
};

std::span<const OpcodeInfo> opcode_table();

// Resolve a raw (opcode, offset, imm) triple. Returns nullptr when the opcode
// byte is absent from the table or its selector value is not recognised.
const OpcodeInfo* find_opcode(std::uint8_t opcode, std::int16_t offset, std::int64_t imm);

// All table entries spelled `name` in assembly (K and X forms share names).
std::vector<const OpcodeInfo*> find_asm_name(std::string_view name);

struct Instruction {
    std::uint8_t opcode = 0;
    Register dst;
    Register src;
    std::int16_t offset = 0;
    std::int64_t imm = 0; // 32-bit signed except for LDDW

    // Table entry; throws Error{UnknownOpcode} for instructions that were not
    // validated.
    const OpcodeInfo& info() const;
    Mnemonic mnemonic() const { return info().mnemonic; }
    OpClass op_class() const { return static_cast<OpClass>(opcode & 0x07); }
    Source source() const { return info().source; }
    Form form() const { return info().form; }
    std::size_t slots() const { return opcode == lddw_opcode ? 2 : 1; }
    bool is_jump() const;

    friend bool operator==(const Instruction&, const Instruction&) = default;

    static constexpr std::uint8_t lddw_opcode = 0x18;
};

// Checks the opcode exists and every field unused by the instruction's form is
// zero. Throws Error{UnknownOpcode | MalformedInstruction | ImmediateOutOfRange}.
void validate(const Instruction& insn);

// Ordered instruction sequence. Jump offsets count encoding slots relative to
// the slot following the jump; every target must land on an instruction
// boundary or one past the last slot.
class Program {
  public:
    Program() = default;
    // Throws Error{JumpOutOfRange} or the errors of validate().
    explicit Program(std::vector<Instruction> instructions, std::map<std::string, std::size_t> labels = {});

    std::span<const Instruction> instructions() const noexcept { return instructions_; }
    const std::map<std::string, std::size_t>& labels() const noexcept { return labels_; }
    std::size_t size() const noexcept { return instructions_.size(); }
    bool empty() const noexcept { return instructions_.empty(); }
    std::size_t slot_count() const noexcept { return slot_of_.empty() ? 0 : slot_of_.back(); }

    // First slot of instruction `index`; slot_of(size()) == slot_count().
    std::size_t slot_of(std::size_t index) const { return slot_of_.at(index); }
    // Instruction starting at `slot`, if any.
    std::optional<std::size_t> index_at_slot(std::int64_t slot) const;

    // Labels are surface syntax and do not take part in equality.
    friend bool operator==(const Program& a, const Program& b) { return a.instructions_ == b.instructions_; }

  private:
    std::vector<Instruction> instructions_;
    std::map<std::string, std::size_t> labels_;
    std::vector<std::size_t> slot_of_;
};

} // namespace diffharness
