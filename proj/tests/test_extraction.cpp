// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include <fmt/format.h>
#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>

#include "diffharness/error.hpp"
#include "diffharness/extraction.hpp"
#include "diffharness/io.hpp"
#include "fixture_model.hpp"

using namespace diffharness;
namespace fs = std::filesystem;

namespace {

const fs::path source_dir(DH_SOURCE_DIR);
const fs::path linux_tree = source_dir / "fixtures/trees/linux-arm";
const fs::path ubpf_tree = source_dir / "fixtures/trees/ubpf";

std::string
spec_text()
{
    return read_file(source_dir / "fixtures/spec/ebpf-isa.md");
}

class FnProvider : public CompletionProvider {
  public:
    explicit FnProvider(std::function<std::string(const PromptRequest&)> fn) : fn_(std::move(fn)) {}
    std::string complete(const PromptRequest& r) override
    {
        ++calls;
        return fn_(r);
    }
    std::string model() const override { return "fn"; }
    int calls = 0;

  private:
    std::function<std::string(const PromptRequest&)> fn_;
};

Errc
code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return Errc::InvalidInput;
}

bool
contains(const std::vector<std::string>& items, std::string_view needle)
{
    return std::any_of(items.begin(), items.end(), [&](const auto& s) { return s.find(needle) != std::string::npos; });
}

struct TempDir {
    fs::path path;
    TempDir()
    {
        path = fs::temp_directory_path() / fmt::format("dh_extract_{}", ::testing::UnitTest::GetInstance()->random_seed());
        path += "_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ExtractionInputs
fixture_inputs()
{
    ExtractionInputs in;
    in.spec_text = spec_text();
    in.trees = {{"linux-arm", linux_tree}, {"ubpf", ubpf_tree}};
    in.bugs = load_bug_reports(source_dir / "fixtures/bugs/bug_reports.json");
    in.corpus = load_corpus(source_dir / "fixtures/corpus/human");
    return in;
}

} // namespace

// --- Completion parsing ------------------------------------------------------

TEST(ParseList, NumberedWithPreambleAndContinuation)
{
    const auto items = parse_list("Here you go:\n\n1. first item\n   continues here\n2) second\n\n3. third\n");
    EXPECT_EQ(items, (std::vector<std::string>{"first item continues here", "second", "third"}));
}

TEST(ParseList, Bullets)
{
    EXPECT_EQ(parse_list("- a\n* b\n+ c\n"), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(ParseList, BlankLineEndsItem)
{
    EXPECT_EQ(parse_list("1. a\n\ntrailing prose\n2. b"), (std::vector<std::string>{"a", "b"}));
}

TEST(ParseList, NoMarkersMeansLines)
{
    EXPECT_EQ(parse_list("ADD\n\nSUB\n"), (std::vector<std::string>{"ADD", "SUB"}));
    EXPECT_TRUE(parse_list("").empty());
}

TEST(ParseList, FencedBlocksIgnored)
{
    EXPECT_EQ(parse_list("1. a\n```\n2. not an item\n```\n2. b"), (std::vector<std::string>{"a", "b"}));
}

TEST(CodeBlocks, BodiesInOrder)
{
    const auto blocks = code_blocks("x\n```c\nint a;\n```\ny\n```\nb\n```\n");
    EXPECT_EQ(blocks, (std::vector<std::string>{"int a;\n", "b\n"}));
    EXPECT_TRUE(code_blocks("no code").empty());
}

TEST(ParseDifferences, NoDifferencesIsEmpty)
{
    EXPECT_TRUE(parse_differences("No differences.").empty());
    EXPECT_TRUE(parse_differences("none").empty());
    EXPECT_EQ(parse_differences("1. x\n2. y").size(), 2u);
}

// --- Instructions and constraints ---------------------------------------------

TEST(ExtractInstructions, FixtureDocumentNames34)
{
    fixture_model::ScriptedModel llm;
    const auto list = extract_instructions(spec_text(), llm);
    EXPECT_EQ(list.mnemonics.size(), 34u);
    EXPECT_TRUE(contains(list.mnemonics, "RSH"));
    EXPECT_TRUE(list.unknown.empty());
}

TEST(ExtractInstructions, UnknownNamesReportedNotKept)
{
    FnProvider llm([](const PromptRequest&) { return "1. add\n2. FOO\n3. ADD\n4. rsh32\n"; });
    const auto list = extract_instructions("doc", llm);
    EXPECT_EQ(list.mnemonics, (std::vector<std::string>{"ADD", "RSH"}));
    EXPECT_EQ(list.unknown, (std::vector<std::string>{"FOO"}));
}

TEST(ExtractInstructions, EmptyDocument)
{
    FnProvider llm([](const PromptRequest&) { return "1. ADD"; });
    EXPECT_EQ(code_of([&] { extract_instructions("  \n", llm); }), Errc::EmptyExtraction);
    EXPECT_EQ(llm.calls, 0);
    FnProvider nothing([](const PromptRequest&) { return "1. FOO"; });
    EXPECT_EQ(code_of([&] { extract_instructions("doc", nothing); }), Errc::EmptyExtraction);
}

TEST(ExtractConstraints, RshMentionsShift)
{
    fixture_model::ScriptedModel llm;
    const auto c = extract_constraints(spec_text(), "RSH", llm);
    EXPECT_TRUE(contains(c, "dst >> imm"));
    EXPECT_FALSE(extract_constraints(spec_text(), "EXIT", llm).empty());
}

TEST(ExtractConstraints, ItemsVerbatim)
{
    FnProvider llm([](const PromptRequest&) { return "1. {RSH, K, ALU} means dst = (u32)(dst >> imm)\n2. second"; });
    const auto c = extract_constraints("doc", "RSH", llm);
    EXPECT_EQ(c, (std::vector<std::string>{"{RSH, K, ALU} means dst = (u32)(dst >> imm)", "second"}));
}

TEST(ExtractConstraints, Errors)
{
    FnProvider llm([](const PromptRequest&) { return ""; });
    EXPECT_EQ(code_of([&] { extract_constraints("doc", "FOO", llm); }), Errc::PreconditionViolated);
    EXPECT_EQ(llm.calls, 0);
    EXPECT_EQ(code_of([&] { extract_constraints("doc", "ADD", llm); }), Errc::EmptyExtraction);
}

// --- Source excerpts -----------------------------------------------------------

TEST(CandidateFiles, KeywordSegments)
{
    EXPECT_EQ(opcode_keywords("RSH"), (std::vector<std::string>{"RSH"}));
    EXPECT_EQ(opcode_keywords("LDDW"), (std::vector<std::string>{"LDDW", "LD_IMM64"}));
    const auto files = candidate_files(linux_tree, "RSH");
    ASSERT_FALSE(files.empty());
    EXPECT_EQ(files.front().path, "arch/arm/net/bpf_jit_32.c");
    // Suffixed forms count: RSH64 in the ubpf header, LDXW for LDX.
    EXPECT_FALSE(candidate_files(ubpf_tree, "RSH").empty());
    const auto ldx = candidate_files(ubpf_tree, "LDX");
    EXPECT_TRUE(std::any_of(ldx.begin(), ldx.end(), [](const auto& f) { return f.path == "vm/ebpf.h"; }));
}

TEST(CandidateFiles, NoMentionMeansNoCandidates)
{
    TempDir dir;
    std::ofstream(dir.path / "a.c") << "int main(void) { return 0; }\n";
    EXPECT_EQ(code_of([&] { candidate_files(dir.path, "RSH"); }), Errc::NoCandidateFiles);
}

TEST(CandidateFiles, LargeFileCutToWindows)
{
    TempDir dir;
    {
        std::ofstream f(dir.path / "big.c");
        for (int i = 0; i < 400; ++i) {
            f << (i == 100 || i == 300 ? "case BPF_RSH:\n" : "int filler_line_with_some_text;\n");
        }
    }
    const auto files = candidate_files(dir.path, "RSH", 2048);
    ASSERT_EQ(files.size(), 1u);
    EXPECT_NE(files[0].content.find("case BPF_RSH:"), std::string::npos);
    EXPECT_NE(files[0].content.find("..."), std::string::npos);
    EXPECT_LT(files[0].content.size(), 400u * 31u);
}

TEST(CandidateFiles, HiddenEntriesSkipped)
{
    TempDir dir;
    fs::create_directories(dir.path / ".git");
    std::ofstream(dir.path / ".git" / "x.c") << "BPF_RSH\n";
    EXPECT_EQ(code_of([&] { candidate_files(dir.path, "RSH"); }), Errc::NoCandidateFiles);
}

TEST(ExtractCodeSnippet, LinuxRshExcerpt)
{
    fixture_model::ScriptedModel llm;
    const auto constraints = extract_constraints(spec_text(), "RSH", llm);
    const auto snippet = extract_code_snippet(linux_tree, constraints, "RSH", llm);
    EXPECT_NE(snippet.find("BPF_ALU | BPF_RSH"), std::string::npos);
    EXPECT_TRUE(excerpt_in_tree(linux_tree, snippet));
}

TEST(ExtractCodeSnippet, HallucinationRejected)
{
    FnProvider llm([](const PromptRequest&) { return "```c\ncase BPF_ALU | BPF_RSH | BPF_K:\n\tdst >>= imm & 7;\n```"; });
    EXPECT_EQ(code_of([&] { extract_code_snippet(linux_tree, {}, "RSH", llm); }), Errc::HallucinatedExcerpt);
    FnProvider prose([](const PromptRequest&) { return "I could not find it."; });
    EXPECT_EQ(code_of([&] { extract_code_snippet(linux_tree, {}, "RSH", prose); }), Errc::HallucinatedExcerpt);
}

TEST(ExtractCodeSnippet, SecondBlockAcceptedWhenFirstIsInvented)
{
    FnProvider llm([](const PromptRequest&) {
        return "```c\ninvented();\n```\n```c\n\t\tif (unlikely(imm > 31))\n\t\t\treturn -EINVAL;\n```";
    });
    EXPECT_EQ(extract_code_snippet(linux_tree, {}, "RSH", llm), "\t\tif (unlikely(imm > 31))\n\t\t\treturn -EINVAL;");
}

TEST(ExtractCodeSnippet, TreeWithoutMnemonic)
{
    TempDir dir;
    std::ofstream(dir.path / "a.c") << "nothing here\n";
    FnProvider llm([](const PromptRequest&) { return ""; });
    EXPECT_EQ(code_of([&] { extract_code_snippet(dir.path, {}, "RSH", llm); }), Errc::NoCandidateFiles);
    EXPECT_EQ(llm.calls, 0);
}

TEST(ExcerptInTree, VerbatimOnly)
{
    EXPECT_TRUE(excerpt_in_tree(ubpf_tree, "\n\ncase EBPF_OP_RSH_IMM:\n\n"));
    EXPECT_FALSE(excerpt_in_tree(ubpf_tree, "case  EBPF_OP_RSH_IMM:"));
    EXPECT_FALSE(excerpt_in_tree(ubpf_tree, "   \n"));
}

// --- Differences and descriptions ------------------------------------------------

TEST(DiffCode, LinuxVersusUbpfMentionsImmediateCheck)
{
    fixture_model::ScriptedModel llm;
    const auto a = extract_code_snippet(linux_tree, {}, "RSH", llm);
    const auto b = extract_code_snippet(ubpf_tree, {}, "RSH", llm);
    const auto diffs = diff_code("RSH", {"linux-arm", a}, {"ubpf", b}, llm);
    EXPECT_TRUE(contains(diffs, "immediate"));
}

TEST(DiffCode, IdenticalAndEmpty)
{
    fixture_model::ScriptedModel llm;
    EXPECT_TRUE(diff_code("RSH", {"a", "x = 1;"}, {"b", "x = 1;"}, llm).empty());
    EXPECT_EQ(code_of([&] { diff_code("RSH", {"a", ""}, {"b", "x"}, llm); }), Errc::PreconditionViolated);
}

TEST(DescribeCode, NonEmptyAndDiffs)
{
    fixture_model::ScriptedModel llm;
    const auto a = describe_code("RSH", extract_code_snippet(linux_tree, {}, "RSH", llm), llm);
    const auto b = describe_code("RSH", extract_code_snippet(ubpf_tree, {}, "RSH", llm), llm);
    EXPECT_FALSE(a.empty());
    EXPECT_FALSE(diff_descriptions("RSH", {"linux-arm", a}, {"ubpf", b}, llm).empty());
    const int before = llm.calls;
    EXPECT_TRUE(diff_descriptions("RSH", {"linux-arm", a}, {"ubpf", a}, llm).empty());
    EXPECT_EQ(llm.calls, before);
}

// --- Bugs ----------------------------------------------------------------------------

TEST(CategorizeBugs, FixtureReportsIncludeShiftOperation)
{
    const auto reports = load_bug_reports(source_dir / "fixtures/bugs/bug_reports.json");
    ASSERT_EQ(reports.size(), 55u);
    fixture_model::ScriptedModel llm;
    const auto cats = categorize_bugs(reports, llm);
    EXPECT_TRUE(std::any_of(cats.begin(), cats.end(), [](const auto& c) { return c.name == "Shift Operation"; }));
    for (const auto& c : cats) {
        EXPECT_FALSE(c.name.empty());
        EXPECT_FALSE(c.description.empty());
    }
}

TEST(CategorizeBugs, SingleReport)
{
    fixture_model::ScriptedModel llm;
    const std::vector<BugReport> one{{"rsh by zero", "clears dst"}};
    EXPECT_GE(categorize_bugs(one, llm).size(), 1u);
}

TEST(CategorizeBugs, Errors)
{
    FnProvider unstructured([](const PromptRequest&) { return "1. shifts\n2. jumps\n"; });
    const std::vector<BugReport> one{{"t", "b"}};
    EXPECT_EQ(code_of([&] { categorize_bugs(one, unstructured); }), Errc::UnparseableCategories);
    EXPECT_EQ(code_of([&] { categorize_bugs({}, unstructured); }), Errc::PreconditionViolated);
}

TEST(CategorizeBugs, NameDescriptionPairs)
{
    FnProvider llm([](const PromptRequest&) { return "1. Shift Operation: bad shifts\n2. junk\n3. Jumps: wrong targets"; });
    const std::vector<BugReport> one{{"t", "b"}};
    EXPECT_EQ(categorize_bugs(one, llm), (std::vector<BugCategory>{{"Shift Operation", "bad shifts"}, {"Jumps", "wrong targets"}}));
}

TEST(LoadBugReports, RejectsMalformed)
{
    TempDir dir;
    std::ofstream(dir.path / "bad.json") << "{\"title\": 1}";
    EXPECT_EQ(code_of([&] { load_bug_reports(dir.path / "bad.json"); }), Errc::InvalidInput);
    std::ofstream(dir.path / "worse.json") << "not json";
    EXPECT_EQ(code_of([&] { load_bug_reports(dir.path / "worse.json"); }), Errc::InvalidInput);
}

// --- Whole pipeline ----------------------------------------------------------------------

TEST(ExtractContext, FixturesGive34Bundles)
{
    fixture_model::ScriptedModel llm;
    const auto result = extract_context(fixture_inputs(), llm, 2);
    ASSERT_EQ(result.bundles.size(), 34u);
    for (const auto& b : result.bundles) {
        EXPECT_FALSE(b.constraints.empty()) << b.mnemonic;
        EXPECT_FALSE(b.bug_categories.empty()) << b.mnemonic;
        for (const auto& [tree, snippet] : b.code_snippets) {
            const auto root = tree == "ubpf" ? ubpf_tree : linux_tree;
            EXPECT_TRUE(excerpt_in_tree(root, snippet)) << b.mnemonic << " " << tree;
        }
    }
    const auto rsh = std::find_if(result.bundles.begin(), result.bundles.end(), [](const auto& b) {
        return b.mnemonic == "RSH";
    });
    ASSERT_NE(rsh, result.bundles.end());
    EXPECT_EQ(rsh->code_snippets.size(), 2u);
    EXPECT_FALSE(rsh->code_diffs.empty());
    EXPECT_FALSE(rsh->desc_diffs.empty());
    EXPECT_EQ(rsh->code_descriptions.size(), 2u);
    EXPECT_TRUE(std::find(rsh->example_tests.begin(), rsh->example_tests.end(), "rsh_zero_shift") !=
                rsh->example_tests.end());
}

TEST(ExtractContext, IndependentOfParallelism)
{
    fixture_model::ScriptedModel a;
    fixture_model::ScriptedModel b;
    const auto one = extract_context(fixture_inputs(), a, 1);
    const auto four = extract_context(fixture_inputs(), b, 4);
    ASSERT_EQ(one.bundles.size(), four.bundles.size());
    for (std::size_t i = 0; i < one.bundles.size(); ++i) {
        EXPECT_EQ(to_json(one.bundles[i]).dump(), to_json(four.bundles[i]).dump());
    }
    EXPECT_EQ(a.calls.load(), b.calls.load());
}

TEST(ExtractContext, AddingATreeIsMonotone)
{
    fixture_model::ScriptedModel llm;
    auto single = fixture_inputs();
    single.trees.pop_back();
    const auto small = extract_context(single, llm, 2);
    const auto large = extract_context(fixture_inputs(), llm, 2);
    ASSERT_EQ(small.bundles.size(), large.bundles.size());
    for (std::size_t i = 0; i < small.bundles.size(); ++i) {
        EXPECT_EQ(small.bundles[i].constraints, large.bundles[i].constraints);
        EXPECT_EQ(small.bundles[i].bug_categories, large.bundles[i].bug_categories);
        for (const auto& [tree, snippet] : small.bundles[i].code_snippets) {
            EXPECT_EQ(large.bundles[i].code_snippets.at(tree), snippet);
        }
        // One tree gives nothing to compare.
        EXPECT_TRUE(small.bundles[i].code_diffs.empty());
    }
}

TEST(ExtractContext, MissingCodeRecordedAsNote)
{
    TempDir dir;
    std::ofstream(dir.path / "only_add.c") << "case BPF_ADD:\n\tbreak;\n";
    fixture_model::ScriptedModel llm;
    auto in = fixture_inputs();
    in.trees.push_back({"tiny", dir.path});
    const auto result = extract_context(in, llm, 2);
    const auto& rsh = *std::find_if(result.bundles.begin(), result.bundles.end(), [](const auto& b) {
        return b.mnemonic == "RSH";
    });
    EXPECT_FALSE(rsh.code_snippets.contains("tiny"));
    EXPECT_TRUE(contains(rsh.notes, "tiny: NoCandidateFiles"));
}

TEST(ExtractContext, ProviderErrorsPropagate)
{
    FnProvider llm([](const PromptRequest&) -> std::string { throw Error(Errc::FixtureMiss, "no fixture"); });
    EXPECT_EQ(code_of([&] { extract_context(fixture_inputs(), llm, 2); }), Errc::FixtureMiss);
}

TEST(ContextFiles, WriteThenLoad)
{
    TempDir dir;
    fixture_model::ScriptedModel llm;
    const auto result = extract_context(fixture_inputs(), llm, 2);
    write_context(result, dir.path);
    EXPECT_TRUE(fs::exists(dir.path / "RSH.json"));
    EXPECT_TRUE(fs::exists(dir.path / "coverage.json"));
    const auto loaded = load_context(dir.path);
    ASSERT_EQ(loaded.size(), 34u);
    auto sorted = result.bundles;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.mnemonic < b.mnemonic; });
    EXPECT_EQ(loaded, sorted);
    const auto coverage = nlohmann::json::parse(read_file(dir.path / "coverage.json"));
    EXPECT_EQ(coverage.at("instructions").size(), 34u);
    EXPECT_TRUE(coverage.at("bug_categories").is_array());
}

TEST(ContextFiles, BundleJsonRoundTrip)
{
    ContextBundle b;
    b.mnemonic = "RSH";
    b.constraints = {"c1"};
    b.code_snippets = {{"linux-arm", "x"}};
    b.code_descriptions = {{"linux-arm", "d"}};
    b.code_diffs = {"cd"};
    b.desc_diffs = {"dd"};
    b.bug_categories = {{"Shift Operation", "shifts"}};
    b.example_tests = {"t"};
    b.notes = {"n"};
    EXPECT_EQ(bundle_from_json(to_json(b)), b);
    EXPECT_EQ(code_of([] { bundle_from_json(nlohmann::json{{"mnemonic", 3}}); }), Errc::InvalidInput);
}
