// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

// Re-records fixtures/llm by running the shipped pipeline in record mode
// against the scripted fixture model. Run from the repository root after any
// prompt template change:
//
//   build/tools/make_fixtures [--keep-context <dir>]

#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include <fmt/format.h>

#include "cli.hpp"
#include "fixture_model.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;
using namespace diffharness;

int
main(int argc, char** argv)
{
    fs::path context = fs::temp_directory_path() / "diffharness_fixture_context";
    const bool keep = argc == 3 && std::string(argv[1]) == "--keep-context";
    if (keep) {
        context = argv[2];
    } else if (argc != 1) {
        std::cerr << "usage: make_fixtures [--keep-context <dir>]\n";
        return cli::exit_input;
    }
    if (!fs::exists(pipeline::settings)) {
        std::cerr << "run from the repository root\n";
        return cli::exit_input;
    }
    fs::remove_all("fixtures/llm");
    fs::create_directories("fixtures/llm");

    auto transport = std::make_shared<fixture_model::ScriptedTransport>();
    cli::Environment env;
    env.transport = transport;
    env.getenv = [](const std::string&) -> std::optional<std::string> { return "unused"; };

    auto record = [&](std::vector<std::string> args) {
        args.push_back("--provider-mode");
        args.push_back("record");
        const int rc = cli::run(args, env);
        if (rc != cli::exit_ok) {
            std::cerr << fmt::format("{} failed with exit code {}\n", args.front(), rc);
            std::exit(rc);
        }
    };
    record(pipeline::extract_args(context.string()));
    const auto out = fs::temp_directory_path() / "diffharness_fixture_corpus";
    for (const auto& config : pipeline::recorded_configs) {
        record(pipeline::generate_args(config, context.string(), (out / config).string()));
    }
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator("fixtures/llm")) {
        ++files;
    }
    std::cout << fmt::format("{} completions recorded in fixtures/llm\n", files);
    if (!keep) {
        fs::remove_all(context);
    }
    fs::remove_all(out);
    return 0;
}
