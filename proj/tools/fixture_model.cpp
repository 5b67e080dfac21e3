// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "fixture_model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "diffharness/asm.hpp"
#include "diffharness/extraction.hpp"
#include "diffharness/interpreter.hpp"
#include "diffharness/isa.hpp"
#include "diffharness/prompts.hpp"

namespace diffharness::fixture_model {

namespace {

using prompts::tagged_blocks;

std::uint64_t
fnv1a(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string
trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return std::string(s);
}

std::vector<std::string>
lines_of(std::string_view text)
{
    std::vector<std::string> out;
    std::string line;
    std::istringstream in{std::string(text)};
    while (std::getline(in, line)) {
        out.push_back(line);
    }
    return out;
}

std::string
first_block(std::string_view content, std::string_view tag)
{
    auto blocks = tagged_blocks(content, tag);
    return blocks.empty() ? std::string() : blocks.front();
}

// Values of name="..." attributes on <tag> elements, in order.
std::vector<std::string>
block_names(std::string_view content, std::string_view tag)
{
    std::vector<std::string> out;
    const std::regex re(fmt::format("<{} name=\"([^\"]*)\">", tag));
    const std::string text(content);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
        out.push_back((*it)[1]);
    }
    return out;
}

std::string
numbered(const std::vector<std::string>& items)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += fmt::format("{}. {}\n", i + 1, items[i]);
    }
    return out;
}

// --- Extraction ------------------------------------------------------------

std::string
answer_instructions(std::string_view content)
{
    std::vector<std::string> names;
    for (const auto& line : lines_of(first_block(content, "document"))) {
        if (line.starts_with("### ")) {
            names.push_back(trim(line.substr(4)));
        }
    }
    if (names.empty()) {
        return "The document does not define any instructions.";
    }
    return "The specification defines these instructions:\n\n" + numbered(names);
}

std::vector<std::string>
section_lines(std::string_view document, std::string_view mnemonic)
{
    std::vector<std::string> out;
    bool inside = false;
    for (const auto& line : lines_of(document)) {
        if (line.starts_with("#")) {
            inside = trim(line) == fmt::format("### {}", mnemonic);
            continue;
        }
        if (inside) {
            out.push_back(line);
        }
    }
    return out;
}

std::string
answer_constraints(std::string_view content)
{
    const auto mnemonic = first_block(content, "instruction");
    std::vector<std::string> items;
    for (const auto& line : section_lines(first_block(content, "document"), mnemonic)) {
        if (line.starts_with("- ")) {
            items.push_back(trim(line.substr(2)));
        }
    }
    if (items.empty()) {
        return fmt::format("I could not find any constraint on {} in the document.", mnemonic);
    }
    return fmt::format("Constraints on {}:\n\n{}", mnemonic, numbered(items));
}

bool
mentions_keyword(std::string_view line, std::string_view mnemonic)
{
    for (const auto& kw : opcode_keywords(mnemonic)) {
        const std::regex re(fmt::format("[A-Z0-9_]*_{}(?:[0-9]+|W|H|B|DW)?(?:_[A-Z0-9_]*)?\\b", kw));
        if (std::regex_search(std::string(line), re)) {
            return true;
        }
    }
    return false;
}

std::size_t
indent_of(std::string_view line)
{
    std::size_t n = 0;
    for (char c : line) {
        if (c == ' ') {
            ++n;
        } else if (c == '\t') {
            n += 8;
        } else {
            break;
        }
    }
    return n;
}

bool
is_case(std::string_view line)
{
    const auto t = trim(line);
    return t.starts_with("case ") || t.starts_with("default:");
}

// Case groups mentioning the mnemonic, from the first such group through the
// end of the last consecutive one. `loose` falls back to the lines around the
// first mention when no case label matches.
std::optional<std::string>
excerpt_from(const std::vector<std::string>& lines, std::string_view mnemonic, bool loose)
{
    std::size_t start = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_case(lines[i]) && mentions_keyword(lines[i], mnemonic)) {
            start = i;
            break;
        }
    }
    while (start < lines.size() && start > 0 && is_case(lines[start - 1])) {
        --start;
    }
    if (start == lines.size()) {
        if (!loose) {
            return std::nullopt;
        }
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (mentions_keyword(lines[i], mnemonic)) {
                const auto lo = i >= 2 ? i - 2 : 0;
                const auto hi = std::min(lines.size(), i + 3);
                std::string out;
                for (auto j = lo; j < hi; ++j) {
                    out += lines[j] + "\n";
                }
                return out;
            }
        }
        return std::nullopt;
    }

    std::size_t end = start;
    std::size_t i = start;
    while (i < lines.size() && is_case(lines[i])) {
        // One group: case labels, then a body ending in a statement at body indentation.
        bool hit = false;
        while (i < lines.size() && is_case(lines[i])) {
            hit = hit || mentions_keyword(lines[i], mnemonic);
            ++i;
        }
        if (!hit || i >= lines.size()) {
            break;
        }
        const auto body_indent = indent_of(lines[i]);
        while (i < lines.size()) {
            const auto t = trim(lines[i]);
            const bool terminal = t == "break;" || t.starts_with("goto ") || t.starts_with("return");
            if (terminal && indent_of(lines[i]) <= body_indent) {
                break;
            }
            ++i;
        }
        if (i >= lines.size()) {
            break;
        }
        end = i;
        ++i;
        while (i < lines.size() && trim(lines[i]).empty()) {
            ++i;
        }
    }
    std::string out;
    for (auto j = start; j <= end; ++j) {
        out += lines[j] + "\n";
    }
    return out;
}

std::string
answer_code(std::string_view content)
{
    const auto mnemonic = first_block(content, "instruction");
    const auto files = tagged_blocks(content, "file");
    for (bool loose : {false, true}) {
        for (const auto& file : files) {
            if (auto excerpt = excerpt_from(lines_of(file), mnemonic, loose)) {
                return fmt::format("This is the code that implements {}:\n\n```c\n{}```\n", mnemonic, *excerpt);
            }
        }
    }
    return fmt::format("None of the files implement {}.", mnemonic);
}

bool
significant(std::string_view t)
{
    if (t.empty() || t == "{" || t == "}" || t == "break;" || t.starts_with("case ") || t.starts_with("/*") ||
        t.starts_with("//") || t.starts_with("*")) {
        return false;
    }
    return true;
}

std::vector<std::string>
significant_lines(std::string_view code)
{
    std::vector<std::string> out;
    for (const auto& line : lines_of(code)) {
        auto t = trim(line);
        if (significant(t)) {
            out.push_back(std::move(t));
        }
    }
    return out;
}

std::string
contrast(std::string_view a_name, std::string_view line, std::string_view b_name)
{
    if (line.starts_with("if") && line.find("imm") != std::string_view::npos) {
        return fmt::format(
            "{} checks the immediate value before using it (`{}`); {} does not perform this check.", a_name, line,
            b_name);
    }
    if (line.find("return") != std::string_view::npos || line.find("error") != std::string_view::npos) {
        return fmt::format("{} can fail here (`{}`) where {} continues.", a_name, line, b_name);
    }
    if (line.starts_with("if")) {
        return fmt::format("{} branches on `{}`; {} has no such condition.", a_name, line, b_name);
    }
    return fmt::format("{} executes `{}`; {} has no equivalent step.", a_name, line, b_name);
}

// Up to two items from the first text's unique lines, then one from the second's.
std::string
contrast_description(std::string_view a_name, std::string_view sentence, std::string_view b_name)
{
    return fmt::format("Only the {} description says: {} The {} description does not.", a_name, sentence, b_name);
}

template <typename Split, typename Contrast>
std::string
answer_difference(std::string_view content, std::string_view tag, Split split, Contrast contrast)
{
    const auto names = block_names(content, tag);
    const auto bodies = tagged_blocks(content, tag);
    if (names.size() != 2 || bodies.size() != 2) {
        return "I need exactly two texts to compare.";
    }
    const auto a = split(bodies[0]);
    const auto b = split(bodies[1]);
    const std::set<std::string> in_a(a.begin(), a.end());
    const std::set<std::string> in_b(b.begin(), b.end());
    std::vector<std::string> items;
    for (const auto& line : a) {
        if (!in_b.contains(line) && items.size() < 2) {
            items.push_back(contrast(names[0], line, names[1]));
        }
    }
    for (const auto& line : b) {
        if (!in_a.contains(line)) {
            items.push_back(contrast(names[1], line, names[0]));
            break;
        }
    }
    if (items.empty()) {
        return "No differences.";
    }
    return "The implementations differ as follows:\n\n" + numbered(items);
}

std::string
answer_describe_code(std::string_view content)
{
    const auto mnemonic = first_block(content, "instruction");
    const auto lines = significant_lines(first_block(content, "code"));
    std::string out = fmt::format("The code handles the {} instruction.", mnemonic);
    for (std::size_t i = 0; i < lines.size() && i < 6; ++i) {
        const auto& l = lines[i];
        if (l.starts_with("if")) {
            out += fmt::format(" It tests `{}`.", l);
        } else if (l.find("return") != std::string::npos) {
            out += fmt::format(" It can stop with `{}`.", l);
        } else {
            out += fmt::format(" It runs `{}`.", l);
        }
    }
    return out;
}

std::vector<std::string>
sentences(std::string_view text)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find(". ", start);
        auto s = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start + 1));
        if (!s.empty()) {
            out.push_back(s);
        }
        if (end == std::string_view::npos) {
            break;
        }
        start = end + 2;
    }
    return out;
}

struct CategoryRule {
    std::string_view name;
    std::string_view description;
    std::vector<std::string_view> words;
};

const std::vector<CategoryRule>&
category_rules()
{
    static const std::vector<CategoryRule> rules = {
        {"Shift Operation",
         "Wrong results or rejections when a shift amount is zero, masked, or not smaller than the operand width",
         {"shift", "lsh", "rsh", "arsh"}},
        {"Division and Modulo",
         "Disagreement on division or modulo by zero, signed rounding, and overflowing quotients",
         {"divi", "divisor", "modulo", "sdiv", "smod", "div ", "mod "}},
        {"Memory Access",
         "Loads and stores that read or write the wrong bytes, skip bounds checks, or leak data into upper bits",
         {"load", "store", "memory", "stack", "bounds", "ldx", "stx"}},
        {"Sign Extension", "Immediates and narrow values widened with the wrong signedness",
         {"sign", "movsx", "extend"}},
        {"Jump Offset", "Branches that land on the wrong slot or compare the wrong operand width",
         {"jump", "jne", "jeq", "jset", "jsgt", "jle", "ja "}},
        {"Register State",
         "Uninitialized, clobbered, or read-only registers handled differently, including the frame pointer",
         {"register", "helper", "r0", "r10", "sentinel", "step"}},
    };
    return rules;
}

std::string
answer_categories(std::string_view content)
{
    const auto titles = tagged_blocks(content, "title");
    const auto bodies = tagged_blocks(content, "body");
    std::vector<int> counts(category_rules().size(), 0);
    for (std::size_t i = 0; i < titles.size(); ++i) {
        std::string text = titles[i] + " " + (i < bodies.size() ? bodies[i] : std::string()) + " ";
        std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::tolower(c); });
        for (std::size_t r = 0; r < category_rules().size(); ++r) {
            const auto& words = category_rules()[r].words;
            if (std::any_of(words.begin(), words.end(), [&](auto w) { return text.find(w) != std::string::npos; })) {
                ++counts[r];
                break;
            }
        }
    }
    std::vector<std::string> items;
    for (std::size_t r = 0; r < counts.size(); ++r) {
        if (counts[r] > 0) {
            items.push_back(fmt::format("{}: {}.", category_rules()[r].name, category_rules()[r].description));
        }
    }
    if (items.empty()) {
        items.push_back("General: Reports that do not share a common cause.");
    }
    return "I grouped the reports into these categories:\n\n" + numbered(items);
}

std::string
answer_map_tests(std::string_view content)
{
    std::set<std::string> known;
    for (const auto& line : lines_of(first_block(content, "instructions"))) {
        if (!trim(line).empty()) {
            known.insert(trim(line));
        }
    }
    std::string out;
    for (const auto& name : lines_of(first_block(content, "tests"))) {
        std::vector<std::string> hits;
        std::string upper = trim(name);
        std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
        std::istringstream tokens(std::regex_replace(upper, std::regex("_"), " "));
        std::string tok;
        while (tokens >> tok) {
            auto stem = std::regex_replace(tok, std::regex("(\\d+|DW)$"), "");
            for (const auto& candidate : {tok, stem}) {
                if (known.contains(candidate) && std::find(hits.begin(), hits.end(), candidate) == hits.end()) {
                    hits.push_back(candidate);
                }
            }
        }
        if (!hits.empty()) {
            out += fmt::format("{}: {}\n", trim(name), fmt::join(hits, ", "));
        }
    }
    return out.empty() ? "None of the tests name an instruction." : out;
}

std::string
answer_select_section(std::string_view content)
{
    const auto mnemonic = first_block(content, "instruction");
    const auto headings = lines_of(first_block(content, "headings"));
    const std::regex word(fmt::format("\\b{}\\b", mnemonic), std::regex::icase);
    for (const auto& h : headings) {
        if (std::regex_search(h, word)) {
            return trim(h);
        }
    }
    return headings.empty() ? std::string("none") : trim(headings.front());
}

// --- Test writing ------------------------------------------------------------

enum class Focus { Common, Shift, DivZero, Sign, Jump, Memory, Uninit, FramePointer };

struct FocusPhrase {
    Focus focus;
    std::string_view phrase;
};

constexpr std::array<FocusPhrase, 8> focus_phrases{{
    {Focus::Common, "checks the common case"},
    {Focus::Shift, "covers the shift amount edge case"},
    {Focus::DivZero, "divides by zero"},
    {Focus::Sign, "needs sign extension"},
    {Focus::Jump, "jumps across a wide lddw instruction"},
    {Focus::Memory, "accesses memory past the end of the input"},
    {Focus::Uninit, "reads an uninitialized register"},
    {Focus::FramePointer, "writes the frame pointer"},
}};

std::string_view
phrase_of(Focus f)
{
    for (const auto& p : focus_phrases) {
        if (p.focus == f) {
            return p.phrase;
        }
    }
    return focus_phrases[0].phrase;
}

Focus
focus_in(std::string_view text)
{
    for (const auto& p : focus_phrases) {
        if (text.find(p.phrase) != std::string_view::npos) {
            return p.focus;
        }
    }
    return Focus::Common;
}

std::vector<Focus>
focuses_for_category(std::string_view category)
{
    if (category.starts_with("Shift")) {
        return {Focus::Shift};
    }
    if (category.starts_with("Division")) {
        return {Focus::DivZero};
    }
    if (category.starts_with("Memory")) {
        return {Focus::Memory};
    }
    if (category.starts_with("Sign")) {
        return {Focus::Sign};
    }
    if (category.starts_with("Jump")) {
        return {Focus::Jump};
    }
    if (category.starts_with("Register")) {
        return {Focus::Uninit, Focus::FramePointer};
    }
    return {Focus::Common};
}

std::vector<const OpcodeInfo*>
variants_of(std::string_view mnemonic)
{
    std::vector<const OpcodeInfo*> out;
    const auto m = mnemonic_from_name(mnemonic);
    for (const auto& info : opcode_table()) {
        if (m && info.mnemonic == *m) {
            out.push_back(&info);
        }
    }
    return out;
}

bool
is_shift(Mnemonic m)
{
    return m == Mnemonic::Lsh || m == Mnemonic::Rsh || m == Mnemonic::Arsh;
}

std::int64_t
pick_value(std::mt19937_64& rng, bool negative)
{
    static constexpr std::array<std::int64_t, 8> pool = {
        0x12345678, 0x7fffffff, 0x100000000, 0xffffffff, 0x80000000, 0x1, 0xff, 0x1234,
    };
    auto v = pool[rng() % pool.size()];
    return negative ? -v : v;
}

std::int64_t
pick_operand(std::mt19937_64& rng, Mnemonic m, Focus focus, std::size_t item, std::optional<std::int64_t> hinted)
{
    if (hinted) {
        return *hinted + static_cast<std::int64_t>(item % 2);
    }
    if (focus == Focus::Shift || (focus == Focus::Common && is_shift(m) && item == 0)) {
        static constexpr std::array<std::int64_t, 5> shifts = {0, 32, 31, 63, 1};
        return shifts[item % shifts.size()];
    }
    if (focus == Focus::DivZero) {
        return item % 2 == 0 ? 0 : -1;
    }
    if (is_shift(m)) {
        return static_cast<std::int64_t>(rng() % 40);
    }
    return static_cast<std::int64_t>(rng() % 200) - 50;
}

std::string
describe_item(const OpcodeInfo& info, std::int64_t a, std::int64_t b, Focus focus, std::string_view origin)
{
    return fmt::format(
        "Run `{}` with value {:#x} and operand {:#x}; the test {}{}.", info.asm_name, static_cast<std::uint64_t>(a),
        static_cast<std::uint64_t>(b), phrase_of(focus), origin);
}

std::string
answer_describe_tests(std::string_view content)
{
    const auto mnemonic = first_block(content, "instruction");
    const auto variants = variants_of(mnemonic);
    if (variants.empty()) {
        return fmt::format("{} is not an instruction I know.", mnemonic);
    }
    const auto m = variants.front()->mnemonic;
    std::mt19937_64 rng(fnv1a(content));

    std::vector<Focus> focuses{Focus::Common};
    std::string origin;
    const auto category = block_names(content, "bug-category");
    if (!category.empty()) {
        focuses = focuses_for_category(category.front());
        origin = fmt::format(" ({} bugs)", category.front());
    }
    std::optional<std::int64_t> hinted;
    const auto difference = first_block(content, "code-difference") + first_block(content, "description-difference");
    std::smatch number;
    if (std::regex_search(difference, number, std::regex("[<>=] *(\\d+)"))) {
        hinted = std::stoll(number[1]);
    }
    if (!first_block(content, "code-description").empty() && origin.empty()) {
        origin = " (from the code descriptions)";
    }

    std::vector<std::string> items;
    const auto start = static_cast<std::size_t>(rng() % variants.size());
    for (int i = 0; i < descriptions_per_answer; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const auto& info = *variants[(start + idx) % variants.size()];
        const auto focus = focuses[idx % focuses.size()];
        const auto a = pick_value(rng, focus == Focus::Sign);
        const auto b = pick_operand(rng, m, focus, idx, hinted);
        items.push_back(describe_item(info, a, b, focus, origin));
    }
    return fmt::format("Here are test ideas for {}:\n\n{}", mnemonic, numbered(items));
}

// Programs are assembled from instructions and printed with format_asm, so
// the text is always in the assembler's own dialect.
struct Builder {
    std::vector<Instruction> insns;

    Instruction& raw(const OpcodeInfo& info, int dst, int src, std::int16_t off, std::int64_t imm)
    {
        Instruction i;
        i.opcode = info.opcode;
        i.dst = Register(dst);
        i.src = Register(src);
        i.offset = info.selector == Selector::Offset ? static_cast<std::int16_t>(info.selector_value) : off;
        i.imm = info.selector == Selector::Imm ? info.selector_value : imm;
        insns.push_back(i);
        return insns.back();
    }

    void op(std::string_view asm_name, Source source, int dst, int src, std::int16_t off, std::int64_t imm)
    {
        for (const auto* info : find_asm_name(asm_name)) {
            if (info->source == source) {
                raw(*info, dst, src, off, imm);
                return;
            }
        }
        raw(*find_asm_name(asm_name).front(), dst, src, off, imm);
    }

    void load(int reg, std::int64_t value)
    {
        if (value >= INT32_MIN && value <= INT32_MAX) {
            op("mov", Source::K, reg, 0, 0, value);
        } else {
            op("lddw", Source::K, reg, 0, 0, value);
        }
    }

    void exit() { op("exit", Source::K, 0, 0, 0, 0); }
};

std::int32_t
imm32(std::int64_t v)
{
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(static_cast<std::uint64_t>(v)));
}

struct Draft {
    Program program;
    std::vector<std::uint8_t> mem;
};

Draft
build_program(const OpcodeInfo& info, std::int64_t a, std::int64_t b, Focus focus)
{
    Builder p;
    std::vector<std::uint8_t> mem;
    const int dst = focus == Focus::FramePointer ? 10 : 0;
    switch (info.form) {
    case Form::AluImm:
        p.load(0, a);
        p.raw(info, dst, 0, 0, imm32(b));
        break;
    case Form::AluReg:
        p.load(0, a);
        if (focus != Focus::Uninit) {
            p.load(4, b);
        }
        p.raw(info, dst, 4, 0, 0);
        break;
    case Form::Neg:
        p.load(0, a);
        p.raw(info, dst, 0, 0, 0);
        break;
    case Form::MovSx:
        if (focus != Focus::Uninit) {
            p.load(4, a);
        }
        p.raw(info, dst, 4, 0, 0);
        break;
    case Form::ByteSwap:
        p.load(0, a);
        p.raw(info, dst, 0, 0, 0);
        break;
    case Form::JumpAlways:
        p.op("mov", Source::K, 0, 0, 0, 1);
        if (focus == Focus::Jump) {
            p.raw(info, 0, 0, 2, 0);
            p.op("lddw", Source::K, 0, 0, 0, a);
        } else {
            p.raw(info, 0, 0, 1, 0);
            p.op("mov", Source::K, 0, 0, 0, 2);
        }
        break;
    case Form::JumpImm:
    case Form::JumpReg: {
        p.op("mov", Source::K, 0, 0, 0, 1);
        p.load(4, a);
        const bool reg = info.form == Form::JumpReg;
        if (reg && focus != Focus::Uninit) {
            p.load(5, b);
        }
        const std::int16_t skip = focus == Focus::Jump ? 2 : 1;
        p.raw(info, 4, reg ? 5 : 0, skip, reg ? 0 : imm32(b));
        if (focus == Focus::Jump) {
            p.op("lddw", Source::K, 0, 0, 0, 0x100000000LL);
        } else {
            p.op("mov", Source::K, 0, 0, 0, 0);
        }
        break;
    }
    case Form::Call:
        p.load(1, a);
        p.raw(info, 0, 0, 0, focus == Focus::Uninit ? b : 5 + std::abs(b) % 4);
        break;
    case Form::Exit:
        if (focus != Focus::Uninit) {
            p.load(0, a);
        }
        break;
    case Form::LoadImm64:
        p.raw(info, 0, 0, 0, a);
        break;
    case Form::Load: {
        for (int i = 0; i < 8; ++i) {
            mem.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(a) >> (8 * i)));
        }
        const auto off = focus == Focus::Memory ? static_cast<std::int16_t>(9 - info.width)
                                                : static_cast<std::int16_t>(std::abs(b) % (9 - info.width));
        p.raw(info, 0, 1, off, 0);
        break;
    }
    case Form::StoreImm: {
        const auto off = focus == Focus::Memory ? std::int16_t{0} : static_cast<std::int16_t>(-8);
        p.raw(info, 10, 0, off, imm32(a));
        p.op(info.width == 8 ? "ldxdw" : info.width == 4 ? "ldxw" : info.width == 2 ? "ldxh" : "ldxb", Source::K, 0,
             10, -8, 0);
        break;
    }
    case Form::StoreReg: {
        if (focus != Focus::Uninit) {
            p.load(4, a);
        }
        p.raw(info, 10, 4, -8, 0);
        p.op(info.width == 8 ? "ldxdw" : info.width == 4 ? "ldxw" : info.width == 2 ? "ldxh" : "ldxb", Source::K, 0,
             10, -8, 0);
        break;
    }
    }
    p.exit();
    return {Program(std::move(p.insns)), std::move(mem)};
}

std::string
render_test(const Draft& draft)
{
    static const SemanticsProfile reference = *builtin_profile("reference");
    std::string out = "-- asm\n" + format_asm(draft.program) + "\n";
    if (!draft.mem.empty()) {
        std::vector<std::string> bytes;
        for (auto b : draft.mem) {
            bytes.push_back(fmt::format("{:02x}", b));
        }
        out += fmt::format("-- mem\n{}\n", fmt::join(bytes, " "));
    }
    const auto response = interpret(draft.program, draft.mem, reference);
    if (const auto* r = std::get_if<Returned>(&response)) {
        out += fmt::format("-- result\n{:#x}\n", r->value);
    } else if (const auto* e = std::get_if<RuntimeError>(&response)) {
        out += fmt::format("-- error\n{}\n", e->message);
    } else {
        out += "-- result\n0x0\n";
    }
    return out;
}

// A malformed variant of a good test, chosen by `kind`.
std::string
spoil(std::string test, std::uint64_t kind)
{
    switch (kind % 3) {
    case 0: {
        // drop the expected value
        auto pos = test.find("-- result");
        if (pos == std::string::npos) {
            pos = test.find("-- error");
        }
        return test.substr(0, pos);
    }
    case 1: return std::regex_replace(test, std::regex("%r0"), "%r11", std::regex_constants::format_first_only);
    default: return std::regex_replace(test, std::regex("\nexit\n"), "\n");
    }
}

struct ParsedDescription {
    const OpcodeInfo* info = nullptr;
    std::int64_t a = 0;
    std::int64_t b = 0;
    Focus focus = Focus::Common;
};

ParsedDescription
read_description(std::string_view mnemonic, std::string_view text, std::uint64_t seed)
{
    ParsedDescription d;
    const std::string s(text);
    std::smatch match;
    if (std::regex_search(s, match, std::regex("`([a-z0-9]+)`"))) {
        for (const auto* info : find_asm_name(match[1].str())) {
            if (mnemonic_name(info->mnemonic) == mnemonic) {
                d.info = info;
                break;
            }
        }
    }
    const auto variants = variants_of(mnemonic);
    if (!d.info && !variants.empty()) {
        d.info = variants[seed % variants.size()];
    }
    if (std::regex_search(s, match, std::regex("value (0x[0-9a-f]+) and operand (0x[0-9a-f]+)"))) {
        d.a = static_cast<std::int64_t>(std::stoull(match[1].str(), nullptr, 16));
        d.b = static_cast<std::int64_t>(std::stoull(match[2].str(), nullptr, 16));
    } else {
        d.a = 0x12345678;
        d.b = static_cast<std::int64_t>(seed % 16);
    }
    d.focus = focus_in(text);
    return d;
}

std::string
answer_write_test(std::string_view content)
{
    const auto mnemonic = first_block(content, "instruction");
    const auto description = first_block(content, "description");
    const auto seed = fnv1a(content);
    const auto d = read_description(mnemonic, description, seed);
    if (!d.info) {
        return fmt::format("I cannot write a test for {}.", mnemonic);
    }
    auto test = render_test(build_program(*d.info, d.a, d.b, d.focus));
    const bool guided = !first_block(content, "guidelines").empty();
    if (seed % (guided ? 20 : 6) == 0) {
        test = spoil(std::move(test), seed / 20);
    }
    return fmt::format("```\n{}```\n", test);
}

std::string
answer_direct_tests(std::string_view content)
{
    const auto mnemonic = first_block(content, "instruction");
    auto variants = variants_of(mnemonic);
    if (variants.empty()) {
        return fmt::format("I cannot write tests for {}.", mnemonic);
    }
    // A focused section yields a second form; the whole document only the first.
    const auto spec = first_block(content, "specification");
    variants.resize(std::min<std::size_t>(variants.size(), spec.size() < 2000 ? 2 : 1));
    int count = 3;
    std::smatch match;
    const std::string text(content);
    if (std::regex_search(text, match, std::regex("Write (\\d+) conformance tests"))) {
        count = std::stoi(match[1]);
    }
    std::mt19937_64 rng(fnv1a(content));
    std::string out = fmt::format("Here are {} tests for {}.\n", count, mnemonic);
    for (int i = 0; i < count; ++i) {
        const auto& info = *variants[static_cast<std::size_t>(i) % variants.size()];
        const auto a = pick_value(rng, false);
        const auto b = pick_operand(rng, info.mnemonic, Focus::Common, static_cast<std::size_t>(i) + 1, std::nullopt);
        auto test = render_test(build_program(info, a, b, Focus::Common));
        if (rng() % 4 == 0) {
            test = spoil(std::move(test), rng());
        }
        out += fmt::format("\nTest {}:\n```\n{}```\n", i + 1, test);
    }
    return out;
}

} // namespace

std::string
ScriptedModel::complete(const PromptRequest& request)
{
    ++calls;
    const std::string content = request.messages.empty() ? std::string() : request.messages.back().content;
    const auto task = prompts::task_of(request);
    if (!task) {
        return "I do not understand the request.";
    }
    using prompts::Task;
    switch (*task) {
    case Task::ExtractInstructions: return answer_instructions(content);
    case Task::ExtractConstraints: return answer_constraints(content);
    case Task::ExtractCode: return answer_code(content);
    case Task::DiffCode: return answer_difference(content, "implementation", significant_lines, contrast);
    case Task::DescribeCode: return answer_describe_code(content);
    case Task::DiffDescriptions: return answer_difference(content, "description", sentences, contrast_description);
    case Task::CategorizeBugs: return answer_categories(content);
    case Task::MapTests: return answer_map_tests(content);
    case Task::SelectSection: return answer_select_section(content);
    case Task::DescribeTests: return answer_describe_tests(content);
    case Task::WriteTest: return answer_write_test(content);
    case Task::DirectTests: return answer_direct_tests(content);
    }
    return {};
}

HttpResponse
ScriptedTransport::post(const std::string&, const Headers&, const std::string& body)
{
    ++calls;
    const auto doc = nlohmann::json::parse(body);
    PromptRequest request;
    request.model = doc.value("model", "");
    for (const auto& m : doc.at("messages")) {
        if (m.at("role") == "system") {
            request.system = m.at("content").get<std::string>();
        } else {
            request.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
        }
    }
    const nlohmann::json reply = {
        {"object", "chat.completion"},
        {"model", model_name},
        {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", model_.complete(request)}}}}}},
    };
    return {200, reply.dump()};
}

} // namespace diffharness::fixture_model
