// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <unistd.h>

#include "diffharness/asm.hpp"
#include "diffharness/error.hpp"
#include "diffharness/io.hpp"
#include "diffharness/runtime.hpp"

using namespace diffharness;
using namespace std::chrono_literals;

namespace {

const std::filesystem::path source_dir = DH_SOURCE_DIR;
const std::filesystem::path scripted = source_dir / "fixtures/plugins/scripted_plugin.sh";

ExecutionResponse
run_mode(int mode, std::vector<std::uint8_t> mem = {}, std::chrono::milliseconds timeout = 5000ms)
{
    auto program = parse_asm(fmt::format("mov %r0, {}\nexit", mode));
    return run_external_plugin(scripted, encode(program), mem, timeout);
}

class Transcript : public ::testing::Test {
  protected:
    void SetUp() override
    {
        path_ = std::filesystem::temp_directory_path() / fmt::format("dh_transcript_{}", ::getpid());
        ::setenv("DIFFHARNESS_TRANSCRIPT", path_.c_str(), 1);
    }
    void TearDown() override
    {
        ::unsetenv("DIFFHARNESS_TRANSCRIPT");
        std::filesystem::remove(path_);
    }
    std::string transcript() const { return read_file(path_); }
    std::string golden(const std::string& name) const
    {
        return read_file(source_dir / "fixtures/plugins/golden" / name);
    }

    std::filesystem::path path_;
};

} // namespace

TEST_F(Transcript, SuccessReturnsValue)
{
    auto r = run_mode(1);
    ASSERT_TRUE(std::holds_alternative<Returned>(r)) << describe(r);
    EXPECT_EQ(std::get<Returned>(r).value, 42u);
    EXPECT_EQ(transcript(), golden("mode1.txt"));
}

TEST_F(Transcript, MemoryIsSecondLine)
{
    auto program = parse_asm("mov %r0, 1\nldxw %r0, [%r1]\nexit");
    auto r = run_external_plugin(scripted, encode(program), std::vector<std::uint8_t>{0, 1, 2, 3, 4}, 5000ms);
    EXPECT_TRUE(std::holds_alternative<Returned>(r));
    EXPECT_EQ(transcript(), golden("mode1_mem.txt"));
}

TEST_F(Transcript, ErrorExit)
{
    auto r = run_mode(2);
    ASSERT_TRUE(std::holds_alternative<RuntimeError>(r)) << describe(r);
    EXPECT_EQ(std::get<RuntimeError>(r), (RuntimeError{1, "invalid register"}));
    EXPECT_EQ(transcript(), golden("mode2.txt"));
}

TEST_F(Transcript, SignalIsCrash)
{
    auto r = run_mode(3);
    ASSERT_TRUE(std::holds_alternative<PluginCrash>(r)) << describe(r);
    EXPECT_NE(std::get<PluginCrash>(r).message.find("signal 11"), std::string::npos);
    EXPECT_EQ(transcript(), golden("mode3.txt"));
}

TEST_F(Transcript, HangIsTimeout)
{
    const auto start = std::chrono::steady_clock::now();
    auto r = run_mode(4, {}, 300ms);
    EXPECT_TRUE(std::holds_alternative<Timeout>(r)) << describe(r);
    EXPECT_LT(std::chrono::steady_clock::now() - start, 5s);
    EXPECT_EQ(transcript(), golden("mode4.txt"));
}

TEST_F(Transcript, GarbageIsCrash)
{
    auto r = run_mode(5);
    ASSERT_TRUE(std::holds_alternative<PluginCrash>(r)) << describe(r);
    EXPECT_NE(std::get<PluginCrash>(r).message.find("unparseable"), std::string::npos);
}

TEST(Plugin, MissingPlugin)
{
    EXPECT_THROW(run_external_plugin("/nonexistent/plugin", {}, {}, 1000ms), Error);
    try {
        run_external_plugin("/nonexistent/plugin", {}, {}, 1000ms);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::PluginNotFound);
    }
}

TEST(Plugin, ReferencePluginMatchesBuiltin)
{
    const std::filesystem::path plugin = std::filesystem::path(DH_BINARY_DIR) / "tools/diffharness-plugin";
    ASSERT_TRUE(std::filesystem::exists(plugin));
    const std::pair<const char*, std::vector<std::uint8_t>> cases[] = {
        {"mov %r0, 0x12345678\nrsh %r0, 0\nexit", {}},
        {"ldxw %r0, [%r1]\nexit", {0x78, 0x56, 0x34, 0x12}},
        {"lddw %r0, 0xfedcba9876543210\nexit", {}},
        {"mov %r10, 1\nexit", {}},
    };
    auto plugin_rt = parse_runtime_spec("p=plugin:" + plugin.string());
    auto builtin_rt = parse_runtime_spec("b=builtin:reference");
    for (const auto& [text, mem] : cases) {
        auto program = parse_asm(text);
        EXPECT_EQ(execute(plugin_rt, program, mem, 5000ms), execute(builtin_rt, program, mem, 5000ms)) << text;
    }
}

TEST(RuntimeSpec, Parsing)
{
    auto b = parse_runtime_spec("ref=builtin:reference");
    EXPECT_EQ(b.id, "ref");
    EXPECT_EQ(std::get<SemanticsProfile>(b.target).name, "reference");
    auto p = parse_runtime_spec("ext=plugin:/bin/true");
    EXPECT_EQ(std::get<PluginRuntime>(p.target).path, "/bin/true");
    for (const char* bad : {"noequals", "=builtin:reference", "x=builtin:nope", "x=docker:foo", "x=plugin:"}) {
        try {
            parse_runtime_spec(bad);
            ADD_FAILURE() << bad;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::UnknownRuntime) << bad;
        }
    }
}

TEST(RuntimeSpec, SpawnFailuresBecomeCrashes)
{
    auto rt = parse_runtime_spec("x=plugin:/nonexistent/plugin");
    auto r = execute(rt, parse_asm("exit"), {}, 1000ms);
    EXPECT_TRUE(std::holds_alternative<PluginCrash>(r));
}
