// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

// Exposes a builtin interpreter profile through the plugin protocol, so the
// subprocess path can be exercised without an external runtime. The profile
// is taken from DIFFHARNESS_PLUGIN_PROFILE (default "reference").

#include <cstdlib>
#include <fmt/format.h>
#include <iostream>
#include <string>

#include "diffharness/asm.hpp"
#include "diffharness/error.hpp"
#include "diffharness/interpreter.hpp"

using namespace diffharness;

int
main()
{
    const char* name = std::getenv("DIFFHARNESS_PLUGIN_PROFILE");
    auto profile = builtin_profile(name != nullptr ? name : "reference");
    if (!profile) {
        std::cerr << "unknown profile " << name << "\n";
        return 2;
    }
    std::string program_hex, mem_hex;
    std::getline(std::cin, program_hex);
    std::getline(std::cin, mem_hex);
    try {
        const auto program = decode(from_hex(program_hex));
        const auto mem = from_hex(mem_hex);
        const auto response = interpret(program, mem, *profile);
        if (const auto* r = std::get_if<Returned>(&response)) {
            fmt::print("0x{:x}\n", r->value);
            return 0;
        }
        if (const auto* e = std::get_if<RuntimeError>(&response)) {
            std::cerr << e->message << "\n";
            return e->code;
        }
        if (std::holds_alternative<Timeout>(response)) {
            // Mirror a hung runtime: the harness's timeout kills us.
            while (true) {
                std::cin.get();
                if (!std::cin) {
                    std::abort();
                }
            }
        }
        std::cerr << describe(response) << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}
