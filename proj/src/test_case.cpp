// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffharness/test_case.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

#include "diffharness/asm.hpp"
#include "diffharness/error.hpp"
#include "diffharness/llm.hpp"
#include "diffharness/prompts.hpp"

namespace diffharness {

namespace {

std::string_view
_rtrim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

std::string_view
_trim(std::string_view s)
{
    s = _rtrim(s);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    return s;
}

std::vector<std::string_view>
_lines(std::string_view text)
{
    std::vector<std::string_view> out;
    while (!text.empty()) {
        auto nl = text.find('\n');
        out.push_back(text.substr(0, nl));
        if (nl == std::string_view::npos) {
            break;
        }
        text.remove_prefix(nl + 1);
    }
    return out;
}

std::string
_join_body(const std::vector<std::string_view>& lines)
{
    std::size_t first = 0;
    std::size_t last = lines.size();
    while (first < last && _trim(lines[first]).empty()) {
        ++first;
    }
    while (last > first && _trim(lines[last - 1]).empty()) {
        --last;
    }
    std::string out;
    for (std::size_t i = first; i < last; ++i) {
        if (i != first) {
            out += '\n';
        }
        out += _rtrim(lines[i]);
    }
    return out;
}

std::optional<std::uint64_t>
_parse_u64(std::string_view s)
{
    s = _trim(s);
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        base = 16;
        s.remove_prefix(2);
    }
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return v;
}

std::string_view
_kind_name(ProvenanceKind k)
{
    switch (k) {
    case ProvenanceKind::Human: return "human";
    case ProvenanceKind::Generated: return "generated";
    case ProvenanceKind::Fuzzed: return "fuzzed";
    }
    return "human";
}

// Description text must stay on one header line.
std::string
_one_line(std::string_view s)
{
    std::string out(s);
    std::replace(out.begin(), out.end(), '\n', ' ');
    std::replace(out.begin(), out.end(), '\r', ' ');
    return std::string(_trim(out));
}

void
_apply_header(Provenance& p, std::string_view key, std::string_view value)
{
    if (key == "provenance") {
        if (value == "generated") {
            p.kind = ProvenanceKind::Generated;
        } else if (value == "fuzzed") {
            p.kind = ProvenanceKind::Fuzzed;
        } else {
            p.kind = ProvenanceKind::Human;
        }
    } else if (key == "config") {
        p.ablation = value;
    } else if (key == "seed") {
        p.seed = _parse_u64(value).value_or(0);
    } else if (key == "mnemonic") {
        p.mnemonic = value;
    } else if (key == "description") {
        p.description = value;
    } else if (key == "prompt") {
        p.prompt_hash = value;
    }
}

} // namespace

TestCase
parse_test_file(std::string_view text, std::string name)
{
    TestCase test;
    test.name = std::move(name);

    enum class Section { None, Asm, Mem, Result, Error, Other };
    Section current = Section::None;
    std::map<Section, std::vector<std::string_view>> bodies;
    std::map<Section, int> first_line;

    int line_no = 0;
    for (auto raw : _lines(text)) {
        ++line_no;
        auto line = _rtrim(raw);
        if (line.starts_with("-- ")) {
            auto tag = _trim(line.substr(3));
            current = tag == "asm"      ? Section::Asm
                      : tag == "mem"    ? Section::Mem
                      : tag == "result" ? Section::Result
                      : tag == "error"  ? Section::Error
                                        : Section::Other;
            bodies[current];
            first_line[current] = line_no;
            continue;
        }
        if (current == Section::None) {
            auto t = _trim(line);
            if (t.starts_with("#")) {
                t = _trim(t.substr(1));
                auto colon = t.find(':');
                if (colon != std::string_view::npos) {
                    _apply_header(test.provenance, _trim(t.substr(0, colon)), _trim(t.substr(colon + 1)));
                }
            }
            continue;
        }
        bodies[current].push_back(line);
    }

    if (!bodies.contains(Section::Asm)) {
        throw Error(Errc::MissingAsmSection, "test file has no '-- asm' section");
    }
    const bool has_result = bodies.contains(Section::Result);
    const bool has_error = bodies.contains(Section::Error);
    if (has_result && has_error) {
        throw Error(Errc::BothResultAndError, "test file has both '-- result' and '-- error'");
    }
    if (!has_result && !has_error) {
        throw Error(Errc::NeitherResultNorError, "test file has neither '-- result' nor '-- error'");
    }
    test.asm_text = _join_body(bodies[Section::Asm]);
    if (bodies.contains(Section::Mem)) {
        try {
            test.mem = from_hex(_join_body(bodies[Section::Mem]));
        } catch (const Error& e) {
            throw Error(Errc::BadMemHex, e.detail(), first_line[Section::Mem]);
        }
    }
    if (has_result) {
        auto body = _join_body(bodies[Section::Result]);
        auto v = _parse_u64(body);
        if (!v) {
            throw Error(
                Errc::BadResultLiteral, fmt::format("bad result literal '{}'", body), first_line[Section::Result]);
        }
        test.expected_result = *v;
    } else {
        test.expected_error = _join_body(bodies[Section::Error]);
    }
    return test;
}

std::string
serialize_test_file(const TestCase& test)
{
    std::string out;
    const auto& p = test.provenance;
    if (p.kind != ProvenanceKind::Human) {
        out += fmt::format("# provenance: {}\n", _kind_name(p.kind));
    }
    if (!p.ablation.empty()) {
        out += fmt::format("# config: {}\n", p.ablation);
    }
    if (!p.mnemonic.empty()) {
        out += fmt::format("# mnemonic: {}\n", p.mnemonic);
    }
    if (!p.prompt_hash.empty()) {
        out += fmt::format("# prompt: {}\n", p.prompt_hash);
    }
    if (!p.description.empty()) {
        out += fmt::format("# description: {}\n", _one_line(p.description));
    }
    if (p.kind == ProvenanceKind::Fuzzed) {
        out += fmt::format("# seed: {}\n", p.seed);
    }
    out += "-- asm\n";
    if (!test.asm_text.empty()) {
        out += test.asm_text;
        out += '\n';
    }
    if (test.mem) {
        out += "-- mem\n";
        const auto& mem = *test.mem;
        for (std::size_t i = 0; i < mem.size(); ++i) {
            out += fmt::format("{:02x}", mem[i]);
            out += (i + 1 == mem.size() || (i + 1) % 16 == 0) ? '\n' : ' ';
        }
    }
    if (test.expected_result) {
        out += fmt::format("-- result\n0x{:x}\n", *test.expected_result);
    } else {
        out += "-- error\n";
        if (test.expected_error && !test.expected_error->empty()) {
            out += *test.expected_error;
            out += '\n';
        }
    }
    return out;
}

std::set<Mnemonic>
mnemonics_in(const TestCase& test)
{
    std::set<Mnemonic> out;
    try {
        auto program = parse_asm(test.asm_text);
        for (const auto& insn : program.instructions()) {
            out.insert(insn.mnemonic());
        }
    } catch (const Error&) {
        out.clear();
    }
    return out;
}

std::string
primary_instruction(const TestCase& test)
{
    if (!test.provenance.mnemonic.empty()) {
        return test.provenance.mnemonic;
    }
    std::optional<Mnemonic> first;
    try {
        auto program = parse_asm(test.asm_text);
        for (const auto& insn : program.instructions()) {
            auto m = insn.mnemonic();
            if (!first) {
                first = m;
            }
            if (m != Mnemonic::Mov && m != Mnemonic::Lddw && m != Mnemonic::Exit) {
                return std::string(mnemonic_name(m));
            }
        }
    } catch (const Error&) {
        return "UNPARSED";
    }
    return first ? std::string(mnemonic_name(*first)) : "UNPARSED";
}

Corpus::Corpus(std::vector<TestCase> tests)
{
    for (auto& t : tests) {
        add(std::move(t));
    }
}

void
Corpus::add(TestCase test)
{
    if (names_.contains(test.name)) {
        throw Error(Errc::DuplicateTestName, fmt::format("duplicate test name '{}'", test.name));
    }
    names_.insert(test.name);
    tests_.push_back(std::move(test));
}

const TestCase*
Corpus::find(std::string_view name) const
{
    for (const auto& t : tests_) {
        if (t.name == name) {
            return &t;
        }
    }
    return nullptr;
}

Corpus
load_corpus(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir)) {
        throw Error(Errc::InvalidInput, fmt::format("corpus directory '{}' does not exist", dir.string()));
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".data") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    Corpus corpus;
    for (const auto& path : files) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        try {
            corpus.add(parse_test_file(ss.str(), path.stem().string()));
        } catch (const Error& e) {
            throw Error(e.code(), fmt::format("{}: {}", path.string(), e.what()));
        }
    }
    return corpus;
}

void
save_corpus(const Corpus& corpus, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    for (const auto& test : corpus.tests()) {
        auto path = dir / (test.name + ".data");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << serialize_test_file(test);
        if (!out) {
            throw Error(Errc::InvalidInput, fmt::format("cannot write {}", path.string()));
        }
    }
}

namespace {

// Mnemonic families named by the first token of each asm line.
std::set<Mnemonic>
_lexical_mnemonics(std::string_view asm_text)
{
    std::set<Mnemonic> out;
    for (auto line : _lines(asm_text)) {
        auto t = _trim(line);
        if (auto hash = t.find('#'); hash != std::string_view::npos) {
            t = _trim(t.substr(0, hash));
        }
        auto colon = t.find(':');
        if (colon != std::string_view::npos && t.find_first_of(" \t") > colon) {
            t = _trim(t.substr(colon + 1));
        }
        auto word = t.substr(0, t.find_first_of(" \t"));
        std::string lower(word);
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
        for (const auto* info : find_asm_name(lower)) {
            out.insert(info->mnemonic);
        }
    }
    return out;
}

} // namespace

InstructionMap
map_tests_to_instructions(const Corpus& corpus, CompletionProvider* llm)
{
    std::map<std::string, std::set<std::string>> mapping;
    for (const auto& test : corpus.tests()) {
        for (auto m : _lexical_mnemonics(test.asm_text)) {
            mapping[std::string(mnemonic_name(m))].insert(test.name);
        }
    }

    InstructionMap result;
    if (llm != nullptr && !corpus.empty()) {
        std::vector<std::string> names;
        for (auto m : all_mnemonics()) {
            names.emplace_back(mnemonic_name(m));
        }
        std::vector<std::string> tests;
        for (const auto& t : corpus.tests()) {
            tests.push_back(t.name);
        }
        const std::string answer = llm->complete(prompts::map_tests(names, tests));
        // Expected lines: "<test name>: MNEM, MNEM".
        for (auto line : _lines(answer)) {
            auto t = _trim(line);
            while (!t.empty() && (t.front() == '-' || t.front() == '*')) {
                t = _trim(t.substr(1));
            }
            auto colon = t.find(':');
            if (colon == std::string_view::npos) {
                continue;
            }
            auto test_name = std::string(_trim(t.substr(0, colon)));
            if (corpus.find(test_name) == nullptr) {
                continue;
            }
            std::string rest(t.substr(colon + 1));
            std::replace(rest.begin(), rest.end(), ',', ' ');
            std::istringstream words(rest);
            std::string word;
            while (words >> word) {
                if (auto m = mnemonic_from_name(word)) {
                    auto& bucket = mapping[std::string(mnemonic_name(*m))];
                    if (bucket.insert(test_name).second) {
                        result.fallback_only = false;
                    }
                }
            }
        }
    }

    for (auto& [m, names] : mapping) {
        result.tests[m] = std::vector<std::string>(names.begin(), names.end());
    }
    for (auto m : all_mnemonics()) {
        if (!result.tests.contains(std::string(mnemonic_name(m)))) {
            result.gaps.emplace_back(mnemonic_name(m));
        }
    }
    return result;
}

} // namespace diffharness
