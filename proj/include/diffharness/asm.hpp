// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Assembler and disassembler for the bpf_conformance assembly dialect:
//
//   mov %r0, 0x12345678      ; immediates in decimal or 0x hex
//   ldxw %r0, [%r1+4]        ; memory operands
//   jset %r1, %r1, lbl1      ; label or +N/-N slot offsets
//   lbl1: mov %r0, 1
//   exit
//
// Comments start with '#' or "//". Labels are resolved at parse time.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffharness/isa.hpp"

namespace diffharness {

// Throws Error with one of UnknownMnemonic, BadRegister, ImmediateOutOfRange,
// UnresolvedLabel, SyntaxError or JumpOutOfRange; every error carries the
// 1-based line number.
Program parse_asm(std::string_view text);

std::string format_instruction(const Instruction& insn);

// One instruction per line, newline separated, no trailing newline. Jump
// targets are emitted as numeric offsets.
std::string format_asm(const Program& program);

// Byte encoding (little-endian 8-byte slots).
std::vector<std::uint8_t> encode(const Program& program);

// Throws Error{TruncatedInput | UnknownOpcode | MalformedLddwPair |
// MalformedInstruction | BadRegister | JumpOutOfRange}.
Program decode(std::span<const std::uint8_t> bytes);

// Lowercase hex, no separators.
std::string to_hex(std::span<const std::uint8_t> bytes);
// Accepts hex pairs optionally separated by whitespace. Throws
// Error{BadMemHex}.
std::vector<std::uint8_t> from_hex(std::string_view text);

} // namespace diffharness
