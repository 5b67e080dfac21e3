// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "diffharness/llm.hpp"

namespace diffharness::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_findings = 1,
    exit_provider = 2,
    exit_input = 3,
};

struct Environment {
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;
    // Transport for live and record modes; HttpTransport when unset.
    std::shared_ptr<Transport> transport;
    // Environment lookup, std::getenv when unset.
    std::function<std::optional<std::string>(const std::string&)> getenv;
};

// args excludes the program name.
int run(const std::vector<std::string>& args, const Environment& env);

} // namespace diffharness::cli
