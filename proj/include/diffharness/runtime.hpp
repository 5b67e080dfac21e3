// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Runtimes under test: built-in interpreter profiles and external plugins.
//
// Plugin protocol. The plugin is started with no arguments and receives on
// stdin
//
//   <program bytes as lowercase hex, no separators>\n
//   <input memory as lowercase hex, or nothing>\n
//
// It prints the value of r0 as "0x%x" on stdout and exits 0, or exits
// nonzero with a message on stderr. Exceeding the timeout gets it SIGKILLed.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>

#include "diffharness/interpreter.hpp"

namespace diffharness {

// Throws Error{PluginNotFound} when `plugin` is missing or not executable and
// Error{SpawnFailure} when the process cannot be started.
ExecutionResponse run_external_plugin(
    const std::filesystem::path& plugin,
    std::span<const std::uint8_t> program_bytes,
    std::span<const std::uint8_t> mem,
    std::chrono::milliseconds timeout);

struct PluginRuntime {
    std::filesystem::path path;
    friend bool operator==(const PluginRuntime&, const PluginRuntime&) = default;
};

struct RuntimeSpec {
    std::string id;
    std::variant<SemanticsProfile, PluginRuntime> target;
};

// "<id>=builtin:<profile>" or "<id>=plugin:<path>". Throws
// Error{UnknownRuntime} for malformed specs and unknown profiles.
RuntimeSpec parse_runtime_spec(std::string_view spec);

// Executes an assembled program. Plugin spawn failures are reported as
// PluginCrash so a matrix run never aborts on one cell.
ExecutionResponse execute(
    const RuntimeSpec& runtime,
    const Program& program,
    std::span<const std::uint8_t> mem,
    std::chrono::milliseconds timeout);

} // namespace diffharness
