// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "diffharness/harness.hpp"
#include "diffharness/io.hpp"
#include "diffharness/test_case.hpp"
#include "pipeline.hpp"

using namespace diffharness;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class FailingTransport : public Transport {
  public:
    HttpResponse post(const std::string&, const Headers&, const std::string&) override
    {
        ++calls;
        return {503, "unavailable"};
    }
    std::atomic<int> calls{0};
};

struct Result {
    int code;
    std::string out;
    std::string err;
};

class Cli : public ::testing::Test {
  protected:
    static void SetUpTestSuite()
    {
        root_ = fs::temp_directory_path() / "dh_cli_tests";
        fs::remove_all(root_);
        fs::create_directories(root_);
        transport_ = std::make_shared<FailingTransport>();
        const auto r = call(pipeline::extract_args((root_ / "ctx").string()));
        ASSERT_EQ(r.code, 0) << r.err;
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }

    static Result call(const std::vector<std::string>& args, std::map<std::string, std::string> vars = {})
    {
        std::ostringstream out;
        std::ostringstream err;
        cli::Environment env;
        env.out = &out;
        env.err = &err;
        env.transport = transport_;
        env.getenv = [vars](const std::string& name) -> std::optional<std::string> {
            const auto it = vars.find(name);
            return it == vars.end() ? std::nullopt : std::optional<std::string>(it->second);
        };
        const int code = cli::run(args, env);
        return {code, out.str(), err.str()};
    }

    static fs::path path(const std::string& name) { return root_ / name; }

    static inline fs::path root_;
    static inline std::shared_ptr<FailingTransport> transport_;
};

std::size_t
count_files(const fs::path& dir, const std::string& ext)
{
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        n += e.path().extension() == ext;
    }
    return n;
}

} // namespace

TEST_F(Cli, ExtractWritesOneBundlePerInstruction)
{
    EXPECT_EQ(count_files(path("ctx"), ".json"), 35u); // 34 bundles and coverage.json
    EXPECT_TRUE(fs::exists(path("ctx") / "RSH.json"));
    EXPECT_EQ(transport_->calls.load(), 0);
}

TEST_F(Cli, ExtractWithoutSpecIsUsageError)
{
    const auto r = call({"extract", "--tree", "a=fixtures/trees/ubpf", "--out", path("x").string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("--spec"), std::string::npos);
    EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST_F(Cli, LiveModeWithoutKey)
{
    auto args = pipeline::extract_args(path("live").string());
    args.insert(args.end(), {"--provider-mode", "live"});
    const auto r = call(args);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("DIFFHARNESS_API_KEY"), std::string::npos);
    EXPECT_EQ(transport_->calls.load(), 0);
}

TEST_F(Cli, LiveModeReportsTransportFailure)
{
    const int before = transport_->calls.load();
    auto args = pipeline::extract_args(path("live").string());
    args.insert(args.end(), {"--provider-mode", "live", "--fixtures", path("live_fixtures").string()});
    const auto r = call(args, {{"DIFFHARNESS_API_KEY", "k"}});
    EXPECT_EQ(r.code, 2);
    EXPECT_GT(transport_->calls.load(), before);
    EXPECT_NE(r.err.find("ProviderHttpError"), std::string::npos);
}

TEST_F(Cli, ReplayMissIsProviderError)
{
    auto args = pipeline::extract_args(path("miss").string());
    args.insert(args.end(), {"--model", "some-other-model"});
    const auto r = call(args);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("FixtureMiss"), std::string::npos);
}

TEST_F(Cli, SettingsInterpolateOnlySecrets)
{
    const auto settings = path("settings.json");
    std::ofstream(settings) << R"({"provider": {"model": "${HOME}"}})";
    auto args = pipeline::extract_args(path("s").string());
    args[args.size() - 3] = settings.string();
    const auto r = call(args);
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("only api_key"), std::string::npos);

    std::ofstream(settings) << R"({"provider": {"mode": "live", "api_key": "${MY_KEY}"}})";
    EXPECT_EQ(call(args).code, 2);
    const int before = transport_->calls.load();
    EXPECT_EQ(call(args, {{"MY_KEY", "secret"}}).code, 2);
    EXPECT_GT(transport_->calls.load(), before);
}

TEST_F(Cli, GenerateBugGuided)
{
    const auto out = path("bug-guided");
    const auto r = call(pipeline::generate_args("bug-guided-code-diff", path("ctx").string(), out.string()));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto corpus = load_corpus(out);
    EXPECT_GT(corpus.size(), 1000u);
    const auto campaign = json::parse(read_file(out / "campaign.json"));
    EXPECT_EQ(campaign.at("accepted").get<std::size_t>(), corpus.size());
    EXPECT_TRUE(campaign.at("prompts").contains("describe-tests"));
    // Same inputs, same files.
    const auto first = read_file(out / "campaign.json");
    ASSERT_EQ(call(pipeline::generate_args("bug-guided-code-diff", path("ctx").string(), out.string())).code, 0);
    EXPECT_EQ(read_file(out / "campaign.json"), first);
    EXPECT_EQ(load_corpus(out).tests(), corpus.tests());
}

TEST_F(Cli, GenerateThreeShotSkipsDescriptions)
{
    const auto out = path("3shot");
    const auto r = call(pipeline::generate_args("3shot-random", path("ctx").string(), out.string()));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto prompts = json::parse(read_file(out / "campaign.json")).at("prompts");
    EXPECT_EQ(prompts, json({{"direct-tests", 34}}));
}

TEST_F(Cli, UnknownConfigListsIds)
{
    const auto r = call(pipeline::generate_args("bug-guided", path("ctx").string(), path("g").string()));
    EXPECT_EQ(r.code, 3);
    for (const auto* id : {"3shot-random", "target-section", "prompt-chain", "prompt-chain-instruct", "bug-centric",
                           "code-description", "code-description-diff", "code-diff", "bug-guided-code-diff"}) {
        EXPECT_NE(r.err.find(id), std::string::npos) << id;
    }
}

TEST_F(Cli, ListingTestRunDiff)
{
    const auto corpus = path("listing");
    fs::create_directories(corpus);
    std::ofstream(corpus / "rsh_zero.data") << "-- asm\nmov %r0, 0x12345678\nrsh %r0, 0\nexit\n-- result\n0x12345678\n";
    const auto records = path("listing.jsonl");
    auto r = call({"run", "--corpus", corpus.string(), "--runtime", "ref=builtin:reference", "--runtime",
                   "bug=builtin:rsh-zero-bug", "--out", records.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto recs = records_from_jsonl(read_file(records));
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].outcome.kind, OutcomeKind::Pass);
    EXPECT_EQ(recs[1].outcome.kind, OutcomeKind::Fail);

    r = call({"diff", "--records", records.string(), "--out", path("listing_findings.json").string()});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("1 findings (1 valid)"), std::string::npos);
    EXPECT_EQ(call({"diff", "--records", records.string(), "--fail-on-diff"}).code, 1);

    const auto report = path("listing_report");
    r = call({"report", "--records", records.string(), "--findings", path("listing_findings.json").string(), "--corpus",
              corpus.string(), "--out", report.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(read_file(report / "report.json")).at("differentials").at("total"), 1);
}

TEST_F(Cli, FuzzedReferenceAgainstItself)
{
    const auto corpus = path("fuzz");
    ASSERT_EQ(call({"fuzz", "--seed", "1", "--count", "100", "--out", corpus.string()}).code, 0);
    EXPECT_EQ(load_corpus(corpus).size(), 100u);
    const auto records = path("fuzz.jsonl");
    ASSERT_EQ(call({"run", "--corpus", corpus.string(), "--runtime", "a=builtin:reference", "--runtime",
                    "b=builtin:reference", "--jobs", "2", "--out", records.string()})
                  .code,
              0);
    const auto r = call({"diff", "--records", records.string(), "--fail-on-diff"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("0 findings"), std::string::npos);
}

TEST_F(Cli, FuzzArgumentErrors)
{
    EXPECT_EQ(call({"fuzz", "--seed", "1", "--out", path("f").string()}).code, 3);
    EXPECT_EQ(call({"fuzz", "--seed", "1", "--count", "5", "--duration", "1s", "--out", path("f").string()}).code, 3);
    EXPECT_EQ(call({"fuzz", "--seed", "1", "--duration", "soon", "--out", path("f").string()}).code, 3);
    EXPECT_EQ(call({"fuzz", "--seed", "1", "--duration", "50ms", "--out", path("f").string()}).code, 0);
}

TEST_F(Cli, RunArgumentErrors)
{
    EXPECT_EQ(call({"run", "--corpus", "fixtures/corpus/human", "--runtime", "a=builtin:reference"}).code, 3);
    EXPECT_EQ(call({"run", "--corpus", "fixtures/corpus/human", "--runtime", "a=builtin:reference", "--runtime",
                    "b=builtin:nonsense"})
                  .code,
              3);
    EXPECT_EQ(call({"run", "--corpus", path("absent").string(), "--runtime", "a=builtin:reference", "--runtime",
                    "b=builtin:reference"})
                  .code,
              3);
    EXPECT_EQ(call({}).code, 3);
    EXPECT_EQ(call({"--help"}).code, 0);
}
