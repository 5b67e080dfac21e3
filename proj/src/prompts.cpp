// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffharness/prompts.hpp"

#include <array>
#include <fmt/format.h>

namespace diffharness::prompts {

namespace {

constexpr std::array<std::pair<Task, std::string_view>, 12> task_names{{
    {Task::ExtractInstructions, "extract-instructions"},
    {Task::ExtractConstraints, "extract-constraints"},
    {Task::ExtractCode, "extract-code"},
    {Task::DiffCode, "diff-code"},
    {Task::DescribeCode, "describe-code"},
    {Task::DiffDescriptions, "diff-descriptions"},
    {Task::CategorizeBugs, "categorize-bugs"},
    {Task::MapTests, "map-tests"},
    {Task::SelectSection, "select-section"},
    {Task::DescribeTests, "describe-tests"},
    {Task::WriteTest, "write-test"},
    {Task::DirectTests, "direct-tests"},
}};

constexpr std::string_view role =
    "You are an expert on the eBPF instruction set and on the runtimes that implement it "
    "(interpreters, JIT compilers and verifiers). Answer precisely and only in the requested format.";

constexpr std::string_view test_format =
    "A test is written in the bpf_conformance format:\n"
    "```\n"
    "-- asm\n"
    "<one eBPF assembly instruction per line, registers written %rN>\n"
    "-- mem\n"
    "<optional input memory as hex bytes, e.g. 00 01 02 03>\n"
    "-- result\n"
    "<expected value of %r0 in hex, e.g. 0x1>\n"
    "```\n"
    "Use `-- error` followed by the expected error text instead of `-- result` when the program must be "
    "rejected. At entry %r1 points to the input memory and %r2 holds its length.";

PromptRequest
_request(Task task, std::string content)
{
    return PromptRequest::user(fmt::format("{}\nTask: {}", role, task_name(task)), std::move(content));
}

std::string
_numbered(std::span<const std::string> items)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += fmt::format("{}. {}\n", i + 1, items[i]);
    }
    return out;
}

std::string
_examples_block(std::span<const std::string> examples)
{
    std::string out;
    for (const auto& e : examples) {
        out += "<example>\n";
        out += e;
        if (!e.ends_with('\n')) {
            out += '\n';
        }
        out += "</example>\n";
    }
    return out;
}

} // namespace

std::string_view
task_name(Task task)
{
    for (const auto& [t, name] : task_names) {
        if (t == task) {
            return name;
        }
    }
    return "unknown";
}

std::optional<Task>
task_of(const PromptRequest& request)
{
    auto pos = request.system.rfind("Task: ");
    if (pos == std::string::npos) {
        return std::nullopt;
    }
    std::string_view name = std::string_view(request.system).substr(pos + 6);
    for (const auto& [t, n] : task_names) {
        if (n == name) {
            return t;
        }
    }
    return std::nullopt;
}

PromptRequest
extract_instructions(std::string_view document)
{
    return _request(
        Task::ExtractInstructions,
        fmt::format(
            "Read the specification below and list every instruction it defines. Treat the 32-bit and 64-bit "
            "variants and the immediate and register source forms of an operation as the same instruction. "
            "Answer with a numbered list with one upper-case instruction name per item and nothing else.\n\n"
            "<document>\n{}\n</document>",
            document));
}

PromptRequest
extract_constraints(std::string_view document, std::string_view mnemonic)
{
    return _request(
        Task::ExtractConstraints,
        fmt::format(
            "List every constraint the specification below places on the {0} instruction: its semantics for "
            "each operand form and class, the treatment of each field, and any undefined or implementation "
            "defined behaviour. Answer with a numbered list, one constraint per item.\n\n"
            "<instruction>{0}</instruction>\n\n<document>\n{1}\n</document>",
            mnemonic, document));
}

PromptRequest
extract_code(std::string_view mnemonic, std::span<const std::string> constraints, std::span<const SourceFile> files)
{
    std::string content = fmt::format(
        "Using the constraints as a guide, find the code in the source files below that implements the {0} "
        "instruction. Copy the relevant code exactly as it appears, without edits, inside a single fenced code "
        "block.\n\n<instruction>{0}</instruction>\n\n<constraints>\n{1}</constraints>\n",
        mnemonic, _numbered(constraints));
    for (const auto& f : files) {
        content += fmt::format("\n<file path=\"{}\">\n{}", f.path, f.content);
        if (!f.content.ends_with('\n')) {
            content += '\n';
        }
        content += "</file>\n";
    }
    return _request(Task::ExtractCode, std::move(content));
}

PromptRequest
diff_code(std::string_view mnemonic, const NamedText& a, const NamedText& b)
{
    return _request(
        Task::DiffCode,
        fmt::format(
            "The two code excerpts below implement the {0} instruction in two different eBPF runtimes. List the "
            "behavioural differences between them as a numbered list, one difference per item. Answer "
            "\"No differences.\" if they behave the same.\n\n<instruction>{0}</instruction>\n\n"
            "<implementation name=\"{1}\">\n{2}\n</implementation>\n\n<implementation name=\"{3}\">\n{4}\n"
            "</implementation>",
            mnemonic, a.name, a.text, b.name, b.text));
}

PromptRequest
describe_code(std::string_view mnemonic, std::string_view snippet)
{
    return _request(
        Task::DescribeCode,
        fmt::format(
            "Describe in plain language what the code below does when it executes the {0} instruction, "
            "including every check it performs and every special case it handles.\n\n"
            "<instruction>{0}</instruction>\n\n<code>\n{1}\n</code>",
            mnemonic, snippet));
}

PromptRequest
diff_descriptions(std::string_view mnemonic, const NamedText& a, const NamedText& b)
{
    return _request(
        Task::DiffDescriptions,
        fmt::format(
            "The two descriptions below explain how two eBPF runtimes implement the {0} instruction. List the "
            "differences in behaviour they imply as a numbered list, one difference per item. Answer "
            "\"No differences.\" if they describe the same behaviour.\n\n<instruction>{0}</instruction>\n\n"
            "<description name=\"{1}\">\n{2}\n</description>\n\n<description name=\"{3}\">\n{4}\n</description>",
            mnemonic, a.name, a.text, b.name, b.text));
}

PromptRequest
categorize_bugs(std::span<const NamedText> reports)
{
    std::string content =
        "Group the bug reports below into high level categories. Answer with a numbered list with one category "
        "per item written as \"<name>: <description>\".\n";
    for (const auto& r : reports) {
        content += fmt::format("\n<bug>\n<title>{}</title>\n<body>\n{}\n</body>\n</bug>\n", r.name, r.text);
    }
    return _request(Task::CategorizeBugs, std::move(content));
}

PromptRequest
map_tests(std::span<const std::string> mnemonics, std::span<const std::string> test_names)
{
    std::string content =
        "For each test below, name the instructions it exercises. Answer with one line per test written as "
        "\"<test name>: <INSTRUCTION>, <INSTRUCTION>\" using only instruction names from the list.\n\n"
        "<instructions>\n";
    for (const auto& m : mnemonics) {
        content += m + "\n";
    }
    content += "</instructions>\n\n<tests>\n";
    for (const auto& t : test_names) {
        content += t + "\n";
    }
    content += "</tests>";
    return _request(Task::MapTests, std::move(content));
}

PromptRequest
select_section(std::string_view mnemonic, std::span<const std::string> headings)
{
    std::string content = fmt::format(
        "Which section of the specification is most relevant to the {0} instruction? Answer with the heading "
        "text exactly as listed and nothing else.\n\n<instruction>{0}</instruction>\n\n<headings>\n",
        mnemonic);
    for (const auto& h : headings) {
        content += h + "\n";
    }
    content += "</headings>";
    return _request(Task::SelectSection, std::move(content));
}

PromptRequest
describe_tests(const DescriptionContext& context)
{
    std::string content = fmt::format(
        "Write {0} descriptions of conformance tests for the {1} instruction. Each description states in one "
        "sentence what the test checks and which inputs it uses. Focus on cases likely to expose differences "
        "between runtimes. Answer with a numbered list, one description per item.\n\n"
        "<instruction>{1}</instruction>\n\n<constraints>\n{2}</constraints>\n",
        context.count, context.mnemonic, _numbered(context.constraints));
    if (context.bug_category) {
        content += fmt::format(
            "\n<bug-category name=\"{}\">\n{}\n</bug-category>\n", context.bug_category->name,
            context.bug_category->text);
    }
    if (context.code_difference) {
        content += fmt::format("\n<code-difference>\n{}\n</code-difference>\n", *context.code_difference);
    }
    for (const auto& d : context.code_descriptions) {
        content += fmt::format("\n<code-description name=\"{}\">\n{}\n</code-description>\n", d.name, d.text);
    }
    if (context.description_difference) {
        content += fmt::format(
            "\n<description-difference>\n{}\n</description-difference>\n", *context.description_difference);
    }
    return _request(Task::DescribeTests, std::move(content));
}

PromptRequest
write_test(
    std::string_view mnemonic,
    std::string_view description,
    std::span<const std::string> examples,
    std::span<const std::string> guidelines)
{
    std::string content = fmt::format(
        "Write one conformance test for the {0} instruction that implements the description below. {1}\n"
        "Answer with the test inside a single fenced code block.\n\n<instruction>{0}</instruction>\n\n"
        "<description>\n{2}\n</description>\n\n<examples>\n{3}</examples>\n",
        mnemonic, test_format, description, _examples_block(examples));
    if (!guidelines.empty()) {
        content += fmt::format("\n<guidelines>\n{}</guidelines>\n", _numbered(guidelines));
    }
    return _request(Task::WriteTest, std::move(content));
}

PromptRequest
direct_tests(std::string_view mnemonic, std::string_view specification, std::span<const std::string> examples, int count)
{
    return _request(
        Task::DirectTests,
        fmt::format(
            "Write {0} conformance tests for the {1} instruction. {2}\nAnswer with each test inside its own "
            "fenced code block.\n\n<instruction>{1}</instruction>\n\n<specification>\n{3}\n</specification>\n\n"
            "<examples>\n{4}</examples>",
            count, mnemonic, test_format, specification, _examples_block(examples)));
}

std::vector<std::string>
tagged_blocks(std::string_view text, std::string_view tag)
{
    std::vector<std::string> out;
    const std::string open = fmt::format("<{}", tag);
    const std::string close = fmt::format("</{}>", tag);
    std::size_t pos = 0;
    while (true) {
        auto start = text.find(open, pos);
        if (start == std::string_view::npos) {
            break;
        }
        auto after = start + open.size();
        if (after >= text.size() || (text[after] != '>' && text[after] != ' ')) {
            pos = after;
            continue;
        }
        auto gt = text.find('>', after);
        auto end = text.find(close, gt);
        if (gt == std::string_view::npos || end == std::string_view::npos) {
            break;
        }
        auto body = text.substr(gt + 1, end - gt - 1);
        if (body.starts_with('\n')) {
            body.remove_prefix(1);
        }
        if (body.ends_with('\n')) {
            body.remove_suffix(1);
        }
        out.emplace_back(body);
        pos = end + close.size();
    }
    return out;
}

} // namespace diffharness::prompts
