// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffharness/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <fmt/format.h>
#include <set>

#include "diffharness/error.hpp"
#include "diffharness/io.hpp"
#include "diffharness/isa.hpp"
#include "parallel.hpp"

namespace diffharness {

using nlohmann::json;

namespace {

std::string_view
_trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view>
_lines(std::string_view text)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < text.size()) {
                out.push_back(text.substr(start));
            }
            break;
        }
        out.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return out;
}

std::string
_lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

// Returns the text after a list marker, or nullopt when the line has none.
std::optional<std::string_view>
_list_item(std::string_view line)
{
    auto t = _trim(line);
    std::size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) {
        ++i;
    }
    if (i > 0) {
        if (i < t.size() && (t[i] == '.' || t[i] == ')') && (i + 1 == t.size() || t[i + 1] == ' ' || t[i + 1] == '\t')) {
            return _trim(t.substr(i + 1));
        }
        return std::nullopt;
    }
    if (t.starts_with("\xe2\x80\xa2")) { // bullet character
        return _trim(t.substr(3));
    }
    if (t.size() >= 2 && (t[0] == '-' || t[0] == '*' || t[0] == '+') && (t[1] == ' ' || t[1] == '\t')) {
        return _trim(t.substr(2));
    }
    return std::nullopt;
}

std::string
_strip_emphasis(std::string_view s)
{
    s = _trim(s);
    while (!s.empty() && (s.front() == '*' || s.front() == '`' || s.front() == '_')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == '*' || s.back() == '`' || s.back() == '_')) {
        s.remove_suffix(1);
    }
    return std::string(_trim(s));
}

// Upper-case identifier segments split on '_'.
void
_for_each_identifier(std::string_view text, const auto& fn)
{
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isalnum(c) || c == '_') {
            std::size_t j = i;
            while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_')) {
                ++j;
            }
            fn(text.substr(i, j - i));
            i = j;
        } else {
            ++i;
        }
    }
}

std::vector<std::string_view>
_segments(std::string_view ident)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= ident.size()) {
        auto us = ident.find('_', start);
        auto seg = ident.substr(start, us == std::string_view::npos ? std::string_view::npos : us - start);
        if (!seg.empty()) {
            out.push_back(seg);
        }
        if (us == std::string_view::npos) {
            break;
        }
        start = us + 1;
    }
    return out;
}

// "RSH" also matches RSH64 and JEQ32 style segments; memory keywords also
// match their width-suffixed forms (LDXW, STXDW).
bool
_segment_matches(std::string_view seg, std::string_view kw)
{
    if (!seg.starts_with(kw)) {
        return false;
    }
    const auto rest = seg.substr(kw.size());
    if (std::all_of(rest.begin(), rest.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
        return true;
    }
    const bool memory = kw == "LDX" || kw == "LDXS" || kw == "ST" || kw == "STX";
    return memory && (rest == "W" || rest == "H" || rest == "B" || rest == "DW");
}

bool
_identifier_matches(std::string_view ident, const std::vector<std::vector<std::string_view>>& keywords)
{
    if (ident.find('_') == std::string_view::npos) {
        return false;
    }
    const auto segs = _segments(ident);
    for (const auto& kw : keywords) {
        if (kw.empty() || kw.size() > segs.size()) {
            continue;
        }
        for (std::size_t i = 0; i + kw.size() <= segs.size(); ++i) {
            if (std::equal(kw.begin(), kw.end(), segs.begin() + static_cast<std::ptrdiff_t>(i), [](auto k, auto s) { return _segment_matches(s, k); })) {
                return true;
            }
        }
    }
    return false;
}

struct TreeFile {
    std::filesystem::path relative;
    std::string content;
};

std::vector<TreeFile>
_walk(const std::filesystem::path& root)
{
    std::error_code ec;
    if (!std::filesystem::is_directory(root, ec)) {
        throw Error(Errc::InvalidInput, fmt::format("source tree '{}' is not a directory", root.string()));
    }
    std::vector<TreeFile> out;
    for (auto it = std::filesystem::recursive_directory_iterator(root); it != std::filesystem::recursive_directory_iterator();
         ++it) {
        const auto name = it->path().filename().string();
        if (name.starts_with('.')) {
            if (it->is_directory()) {
                it.disable_recursion_pending();
            }
            continue;
        }
        if (!it->is_regular_file() || it->file_size() > 4 * 1024 * 1024) {
            continue;
        }
        out.push_back({std::filesystem::relative(it->path(), root), read_file(it->path())});
    }
    std::sort(out.begin(), out.end(), [](const TreeFile& a, const TreeFile& b) { return a.relative < b.relative; });
    return out;
}

// Lines within `radius` of a hit, contiguous runs joined by a marker line.
std::string
_windows(std::string_view content, const std::vector<std::size_t>& hit_lines, std::size_t radius)
{
    const auto lines = _lines(content);
    std::vector<bool> keep(lines.size(), false);
    for (auto h : hit_lines) {
        const auto lo = h > radius ? h - radius : 0;
        const auto hi = std::min(lines.size() - 1, h + radius);
        for (auto i = lo; i <= hi; ++i) {
            keep[i] = true;
        }
    }
    std::string out;
    bool gap = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!keep[i]) {
            gap = true;
            continue;
        }
        if (gap && !out.empty()) {
            out += "...\n";
        }
        gap = false;
        out += lines[i];
        out += '\n';
    }
    return out;
}

std::string
_normalize_excerpt(std::string_view excerpt)
{
    auto lines = _lines(excerpt);
    while (!lines.empty() && _trim(lines.front()).empty()) {
        lines.erase(lines.begin());
    }
    while (!lines.empty() && _trim(lines.back()).empty()) {
        lines.pop_back();
    }
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        out += lines[i];
        if (i + 1 < lines.size()) {
            out += '\n';
        }
    }
    while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) {
        out.pop_back();
    }
    return out;
}

Mnemonic
_require_mnemonic(std::string_view name)
{
    auto m = mnemonic_from_name(name);
    if (!m) {
        throw Error(Errc::PreconditionViolated, fmt::format("'{}' is not an instruction of the opcode table", name));
    }
    return *m;
}

json
_string_map(const std::map<std::string, std::string>& m)
{
    json j = json::object();
    for (const auto& [k, v] : m) {
        j[k] = v;
    }
    return j;
}

} // namespace

json
to_json(const ContextBundle& b)
{
    json categories = json::array();
    for (const auto& c : b.bug_categories) {
        categories.push_back({{"name", c.name}, {"description", c.description}});
    }
    return json{
        {"schema_version", 1},
        {"mnemonic", b.mnemonic},
        {"constraints", b.constraints},
        {"code_snippets", _string_map(b.code_snippets)},
        {"code_descriptions", _string_map(b.code_descriptions)},
        {"code_diffs", b.code_diffs},
        {"desc_diffs", b.desc_diffs},
        {"bug_categories", categories},
        {"example_tests", b.example_tests},
        {"notes", b.notes},
    };
}

ContextBundle
bundle_from_json(const json& j)
{
    try {
        ContextBundle b;
        b.mnemonic = j.at("mnemonic").get<std::string>();
        b.constraints = j.at("constraints").get<std::vector<std::string>>();
        b.code_snippets = j.at("code_snippets").get<std::map<std::string, std::string>>();
        b.code_descriptions = j.at("code_descriptions").get<std::map<std::string, std::string>>();
        b.code_diffs = j.at("code_diffs").get<std::vector<std::string>>();
        b.desc_diffs = j.at("desc_diffs").get<std::vector<std::string>>();
        for (const auto& c : j.at("bug_categories")) {
            b.bug_categories.push_back({c.at("name").get<std::string>(), c.at("description").get<std::string>()});
        }
        b.example_tests = j.at("example_tests").get<std::vector<std::string>>();
        b.notes = j.value("notes", std::vector<std::string>{});
        return b;
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidInput, fmt::format("malformed context bundle: {}", e.what()));
    }
}

std::vector<std::string>
parse_list(std::string_view completion)
{
    std::vector<std::string> items;
    std::vector<std::string> plain;
    bool in_fence = false;
    bool open = false; // current item may take continuation lines
    for (auto line : _lines(completion)) {
        if (_trim(line).starts_with("```")) {
            in_fence = !in_fence;
            open = false;
            continue;
        }
        if (in_fence) {
            continue;
        }
        if (auto item = _list_item(line)) {
            if (!item->empty()) {
                items.emplace_back(*item);
                open = true;
            }
            continue;
        }
        auto t = _trim(line);
        if (t.empty()) {
            open = false;
            continue;
        }
        plain.emplace_back(t);
        if (open && !items.empty()) {
            items.back() += ' ';
            items.back() += t;
        }
    }
    return items.empty() ? plain : items;
}

std::vector<std::string>
code_blocks(std::string_view completion)
{
    std::vector<std::string> out;
    std::optional<std::string> current;
    for (auto line : _lines(completion)) {
        if (_trim(line).starts_with("```")) {
            if (current) {
                out.push_back(std::move(*current));
                current.reset();
            } else {
                current.emplace();
            }
            continue;
        }
        if (current) {
            *current += line;
            *current += '\n';
        }
    }
    return out;
}

std::vector<std::string>
parse_differences(std::string_view completion)
{
    auto is_none = [](std::string_view s) {
        const auto l = _lower(_strip_emphasis(s));
        return l.starts_with("no differences") || l.starts_with("no behavioural differences") ||
               l.starts_with("no behavioral differences") || l == "none" || l == "none.";
    };
    if (is_none(_trim(completion))) {
        return {};
    }
    auto items = parse_list(completion);
    if (items.size() == 1 && is_none(items[0])) {
        return {};
    }
    return items;
}

InstructionList
extract_instructions(std::string_view document, CompletionProvider& llm)
{
    if (_trim(document).empty()) {
        throw Error(Errc::EmptyExtraction, "specification document is empty");
    }
    const auto answer = llm.complete(prompts::extract_instructions(document));
    InstructionList out;
    std::set<std::string> seen;
    for (const auto& item : parse_list(answer)) {
        auto word = _strip_emphasis(item);
        auto end = word.find_first_of(" \t:,(");
        word = _strip_emphasis(word.substr(0, end));
        while (!word.empty() && (word.back() == '.' || word.back() == ',')) {
            word.pop_back();
        }
        if (word.empty()) {
            continue;
        }
        std::optional<Mnemonic> m = mnemonic_from_name(word);
        if (!m) {
            if (auto infos = find_asm_name(_lower(word)); !infos.empty()) {
                m = infos.front()->mnemonic;
            }
        }
        std::string name = m ? std::string(mnemonic_name(*m)) : [&] {
            std::string u = word;
            std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
            return u;
        }();
        if (!seen.insert(name).second) {
            continue;
        }
        (m ? out.mnemonics : out.unknown).push_back(std::move(name));
    }
    if (out.mnemonics.empty()) {
        throw Error(Errc::EmptyExtraction, "no known instruction was extracted from the specification");
    }
    return out;
}

std::vector<std::string>
extract_constraints(std::string_view document, std::string_view mnemonic, CompletionProvider& llm)
{
    const auto m = _require_mnemonic(mnemonic);
    auto items = parse_list(llm.complete(prompts::extract_constraints(document, mnemonic_name(m))));
    if (items.empty()) {
        throw Error(Errc::EmptyExtraction, fmt::format("no constraints extracted for {}", mnemonic_name(m)));
    }
    return items;
}

std::vector<std::string>
opcode_keywords(std::string_view mnemonic)
{
    const auto m = _require_mnemonic(mnemonic);
    const std::string name(mnemonic_name(m));
    switch (m) {
    case Mnemonic::Lddw: return {name, "LD_IMM64"};
    case Mnemonic::Ldxs: return {name, "MEMSX"};
    case Mnemonic::End: return {name, "BSWAP"};
    default: return {name};
    }
}

std::vector<prompts::SourceFile>
candidate_files(const std::filesystem::path& root, std::string_view mnemonic, std::size_t cap)
{
    std::vector<std::vector<std::string_view>> keywords;
    const auto words = opcode_keywords(mnemonic);
    for (const auto& w : words) {
        keywords.push_back(_segments(w));
    }

    struct Hit {
        TreeFile file;
        std::vector<std::size_t> lines;
    };
    std::vector<Hit> hits;
    for (auto& f : _walk(root)) {
        Hit h{std::move(f), {}};
        const auto lines = _lines(h.file.content);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            bool matched = false;
            _for_each_identifier(lines[i], [&](std::string_view ident) {
                matched = matched || _identifier_matches(ident, keywords);
            });
            if (matched) {
                h.lines.push_back(i);
            }
        }
        if (!h.lines.empty()) {
            hits.push_back(std::move(h));
        }
    }
    if (hits.empty()) {
        throw Error(
            Errc::NoCandidateFiles,
            fmt::format("no file under '{}' mentions {}", root.string(), fmt::join(words, " or ")));
    }
    std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
        return a.lines.size() > b.lines.size();
    });

    std::vector<prompts::SourceFile> out;
    std::size_t used = 0;
    for (const auto& h : hits) {
        std::string content = h.file.content;
        if (content.size() > cap) {
            content = _windows(content, h.lines, 30);
        }
        if (used + content.size() > cap && !out.empty()) {
            continue;
        }
        used += content.size();
        out.push_back({h.file.relative.generic_string(), std::move(content)});
    }
    return out;
}

bool
excerpt_in_tree(const std::filesystem::path& root, std::string_view excerpt)
{
    const auto needle = _normalize_excerpt(excerpt);
    if (needle.empty()) {
        return false;
    }
    const auto files = _walk(root);
    return std::any_of(files.begin(), files.end(), [&](const TreeFile& f) {
        return f.content.find(needle) != std::string::npos;
    });
}

std::string
extract_code_snippet(
    const std::filesystem::path& root,
    std::span<const std::string> constraints,
    std::string_view mnemonic,
    CompletionProvider& llm)
{
    const auto m = _require_mnemonic(mnemonic);
    const auto files = candidate_files(root, mnemonic);
    const auto answer = llm.complete(prompts::extract_code(mnemonic_name(m), constraints, files));
    auto blocks = code_blocks(answer);
    if (blocks.empty()) {
        blocks.push_back(answer);
    }
    for (const auto& b : blocks) {
        if (excerpt_in_tree(root, b)) {
            return _normalize_excerpt(b);
        }
    }
    throw Error(
        Errc::HallucinatedExcerpt,
        fmt::format("code returned for {} does not occur verbatim under '{}'", mnemonic_name(m), root.string()));
}

std::vector<std::string>
diff_code(std::string_view mnemonic, const prompts::NamedText& a, const prompts::NamedText& b, CompletionProvider& llm)
{
    if (_trim(a.text).empty() || _trim(b.text).empty()) {
        throw Error(Errc::PreconditionViolated, "diff_code needs two non-empty snippets");
    }
    return parse_differences(llm.complete(prompts::diff_code(mnemonic, a, b)));
}

std::string
describe_code(std::string_view mnemonic, std::string_view snippet, CompletionProvider& llm)
{
    if (_trim(snippet).empty()) {
        throw Error(Errc::PreconditionViolated, "describe_code needs a non-empty snippet");
    }
    auto text = std::string(_trim(llm.complete(prompts::describe_code(mnemonic, snippet))));
    if (text.empty()) {
        throw Error(Errc::EmptyExtraction, fmt::format("empty code description for {}", mnemonic));
    }
    return text;
}

std::vector<std::string>
diff_descriptions(
    std::string_view mnemonic, const prompts::NamedText& a, const prompts::NamedText& b, CompletionProvider& llm)
{
    if (_trim(a.text).empty() || _trim(b.text).empty()) {
        throw Error(Errc::PreconditionViolated, "diff_descriptions needs two non-empty descriptions");
    }
    if (_trim(a.text) == _trim(b.text)) {
        return {};
    }
    return parse_differences(llm.complete(prompts::diff_descriptions(mnemonic, a, b)));
}

std::vector<BugCategory>
categorize_bugs(std::span<const BugReport> reports, CompletionProvider& llm)
{
    if (reports.empty()) {
        throw Error(Errc::PreconditionViolated, "categorize_bugs needs at least one report");
    }
    std::vector<prompts::NamedText> named;
    for (const auto& r : reports) {
        named.push_back({r.title, r.body});
    }
    const auto answer = llm.complete(prompts::categorize_bugs(named));
    std::vector<BugCategory> out;
    for (const auto& item : parse_list(answer)) {
        auto colon = item.find(':');
        if (colon == std::string::npos) {
            continue;
        }
        BugCategory c{_strip_emphasis(item.substr(0, colon)), _strip_emphasis(item.substr(colon + 1))};
        if (!c.name.empty() && !c.description.empty()) {
            out.push_back(std::move(c));
        }
    }
    if (out.empty()) {
        throw Error(Errc::UnparseableCategories, "no \"<name>: <description>\" category in the completion");
    }
    return out;
}

std::vector<BugReport>
load_bug_reports(const std::filesystem::path& path)
{
    try {
        auto j = json::parse(read_file(path));
        std::vector<BugReport> out;
        for (const auto& r : j) {
            out.push_back({r.at("title").get<std::string>(), r.at("body").get<std::string>()});
        }
        return out;
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidInput, fmt::format("{}: {}", path.string(), e.what()));
    }
}

ExtractionResult
extract_context(const ExtractionInputs& inputs, CompletionProvider& llm, int parallelism)
{
    ExtractionResult result;
    result.instructions = extract_instructions(inputs.spec_text, llm);
    if (!inputs.bugs.empty()) {
        result.bug_categories = categorize_bugs(inputs.bugs, llm);
    }
    result.instruction_map = map_tests_to_instructions(inputs.corpus, &llm);

    const auto& mnemonics = result.instructions.mnemonics;
    result.bundles.resize(mnemonics.size());
    auto work = [&](std::size_t i) {
        ContextBundle& b = result.bundles[i];
        b.mnemonic = mnemonics[i];
        try {
            b.constraints = extract_constraints(inputs.spec_text, b.mnemonic, llm);
        } catch (const Error& e) {
            if (e.code() != Errc::EmptyExtraction) {
                throw;
            }
            b.notes.push_back(fmt::format("constraints: {}", e.what()));
        }
        std::vector<prompts::NamedText> snippets, descriptions;
        for (const auto& tree : inputs.trees) {
            try {
                auto code = extract_code_snippet(tree.root, b.constraints, b.mnemonic, llm);
                b.code_snippets[tree.runtime_id] = code;
                snippets.push_back({tree.runtime_id, code});
            } catch (const Error& e) {
                if (e.code() != Errc::NoCandidateFiles && e.code() != Errc::HallucinatedExcerpt) {
                    throw;
                }
                b.notes.push_back(fmt::format("{}: {}: {}", tree.runtime_id, errc_name(e.code()), e.detail()));
            }
        }
        for (const auto& s : snippets) {
            auto d = describe_code(b.mnemonic, s.text, llm);
            b.code_descriptions[s.name] = d;
            descriptions.push_back({s.name, d});
        }
        for (std::size_t x = 0; x < snippets.size(); ++x) {
            for (std::size_t y = x + 1; y < snippets.size(); ++y) {
                for (auto& d : diff_code(b.mnemonic, snippets[x], snippets[y], llm)) {
                    b.code_diffs.push_back(std::move(d));
                }
                for (auto& d : diff_descriptions(b.mnemonic, descriptions[x], descriptions[y], llm)) {
                    b.desc_diffs.push_back(std::move(d));
                }
            }
        }
        b.bug_categories = result.bug_categories;
        if (auto it = result.instruction_map.tests.find(b.mnemonic); it != result.instruction_map.tests.end()) {
            b.example_tests = it->second;
        }
    };

    detail::parallel_for(mnemonics.size(), parallelism, work);
    return result;
}

void
write_context(const ExtractionResult& result, const std::filesystem::path& dir)
{
    json bundles = json::object();
    for (const auto& b : result.bundles) {
        write_file_atomic(dir / (b.mnemonic + ".json"), to_json(b).dump(2) + "\n");
        std::vector<std::string> trees;
        for (const auto& [id, code] : b.code_snippets) {
            trees.push_back(id);
        }
        bundles[b.mnemonic] = {
            {"constraints", b.constraints.size()},
            {"snippets", trees},
            {"code_diffs", b.code_diffs.size()},
            {"example_tests", b.example_tests.size()},
            {"notes", b.notes},
        };
    }
    json categories = json::array();
    for (const auto& c : result.bug_categories) {
        categories.push_back({{"name", c.name}, {"description", c.description}});
    }
    json coverage{
        {"schema_version", 1},
        {"instructions", result.instructions.mnemonics},
        {"unknown_instructions", result.instructions.unknown},
        {"bug_categories", categories},
        {"instruction_map",
         {{"fallback_only", result.instruction_map.fallback_only},
          {"gaps", result.instruction_map.gaps},
          {"tests", result.instruction_map.tests}}},
        {"bundles", bundles},
    };
    write_file_atomic(dir / "coverage.json", coverage.dump(2) + "\n");
}

std::vector<ContextBundle>
load_context(const std::filesystem::path& dir)
{
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw Error(Errc::InvalidInput, fmt::format("context directory '{}' does not exist", dir.string()));
    }
    std::vector<std::filesystem::path> paths;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "coverage.json") {
            paths.push_back(e.path());
        }
    }
    std::sort(paths.begin(), paths.end());
    std::vector<ContextBundle> out;
    for (const auto& p : paths) {
        try {
            out.push_back(bundle_from_json(json::parse(read_file(p))));
        } catch (const json::exception& e) {
            throw Error(Errc::InvalidInput, fmt::format("{}: {}", p.string(), e.what()));
        } catch (const Error& e) {
            throw Error(e.code(), fmt::format("{}: {}", p.string(), e.detail()));
        }
    }
    return out;
}

} // namespace diffharness
