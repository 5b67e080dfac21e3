// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Built-in eBPF interpreter. A SemanticsProfile selects either the reference
// semantics or one of the seeded divergences used to exercise the
// differential pipeline offline.
//
// Memory model: input memory is mapped at input_base, the 512-byte stack ends
// at stack_top. At entry r1 = input_base (0 without memory), r2 = input length
// and r10 = stack_top.

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "diffharness/isa.hpp"

namespace diffharness {

struct Returned {
    std::uint64_t value = 0;
    friend bool operator==(const Returned&, const Returned&) = default;
};
struct RuntimeError {
    int code = 1;
    std::string message;
    friend bool operator==(const RuntimeError&, const RuntimeError&) = default;
};
struct Timeout {
    friend bool operator==(const Timeout&, const Timeout&) = default;
};
struct PluginCrash {
    std::string message;
    friend bool operator==(const PluginCrash&, const PluginCrash&) = default;
};
struct Unsupported {
    std::string reason;
    friend bool operator==(const Unsupported&, const Unsupported&) = default;
};

using ExecutionResponse = std::variant<Returned, RuntimeError, Timeout, PluginCrash, Unsupported>;

// "returned 0x2a", "runtime error 1: ...", "timeout", ...
std::string describe(const ExecutionResponse& response);

enum class ShiftImmPolicy { MaskToWidth, RejectOverWidth };
enum class UninitPolicy { ZeroInit, RejectUse, Sentinel };
enum class FramePointerWritePolicy { Reject, SilentlyAllow };

struct SemanticsProfile {
    std::string name = "reference";
    ShiftImmPolicy shift_imm_policy = ShiftImmPolicy::MaskToWidth;
    // RSH by an immediate of zero writes 0 to dst.
    bool rsh_zero_shift_bug = false;
    UninitPolicy uninitialized_register_policy = UninitPolicy::ZeroInit;
    std::uint64_t uninit_sentinel = 0xdeadbeefcafef00dULL;
    // Taken conditional jumps land one slot short of their target.
    bool jump_offset_bug = false;
    FramePointerWritePolicy frame_pointer_write_policy = FramePointerWritePolicy::Reject;
    // Loads narrower than 8 bytes OR these bits in above the loaded width.
    std::optional<std::uint64_t> narrow_load_garbage;
    std::uint64_t step_limit = 1'000'000;
    std::set<std::int32_t> supported_helpers = {5, 6, 7, 8};

    friend bool operator==(const SemanticsProfile&, const SemanticsProfile&) = default;
};

inline constexpr std::uint64_t input_base = 0x100000000ULL;
inline constexpr std::uint64_t stack_top = 0x200000000ULL;
inline constexpr std::size_t stack_size = 512;
inline constexpr int runtime_error_code = 1;

// Throws Error{PreconditionViolated} when step_limit is 0.
ExecutionResponse interpret(const Program& program, std::span<const std::uint8_t> mem, const SemanticsProfile& profile);

// Shipped profiles: reference, rsh-zero-bug, jump-offset-bug, uninit-sentinel,
// fp-write-allow, tiny-step-limit, narrow-load-leak, shift-imm-reject.
std::optional<SemanticsProfile> builtin_profile(std::string_view name);
std::vector<std::string> builtin_profile_names();
// Every shipped profile except the reference.
std::vector<std::string> divergence_profile_names();

} // namespace diffharness
