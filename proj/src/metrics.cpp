// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffharness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "diffharness/asm.hpp"
#include "diffharness/error.hpp"
#include "diffharness/io.hpp"

namespace diffharness {

using json = nlohmann::json;

namespace {

constexpr std::array<OutcomeKind, 5> outcome_kinds{
    OutcomeKind::Pass, OutcomeKind::Fail, OutcomeKind::Error, OutcomeKind::Skip, OutcomeKind::Crash};

// Percentage rounded to one decimal place.
double
_percent(std::size_t part, std::size_t whole)
{
    if (whole == 0) {
        return 0.0;
    }
    return std::round(1000.0 * static_cast<double>(part) / static_cast<double>(whole)) / 10.0;
}

double
_one_decimal(double v)
{
    return std::round(v * 10.0) / 10.0;
}

std::vector<std::string>
_runtime_order(const std::vector<RunRecord>& records)
{
    std::vector<std::string> out;
    for (const auto& r : records) {
        if (std::find(out.begin(), out.end(), r.runtime_id) == out.end()) {
            out.push_back(r.runtime_id);
        }
    }
    return out;
}

} // namespace

Validity
validity(const Corpus& corpus, const std::vector<RunRecord>& records)
{
    const auto runtimes = _runtime_order(records);
    std::map<std::string, std::map<std::string, Outcome>, std::less<>> by_test;
    for (const auto& r : records) {
        by_test[r.test_name][r.runtime_id] = r.outcome;
    }
    Validity v;
    v.tests = corpus.size();
    for (const auto& t : corpus.tests()) {
        const auto it = by_test.find(t.name);
        if (it == by_test.end() || it->second.size() != runtimes.size() || runtimes.empty()) {
            throw Error(Errc::IncompleteMatrix, fmt::format("no complete set of records for test '{}'", t.name));
        }
        std::vector<Outcome> outcomes;
        for (const auto& id : runtimes) {
            outcomes.push_back(it->second.at(id));
        }
        v.valid += is_valid(outcomes) ? 1 : 0;
    }
    return v;
}

double
validity_rate(const Corpus& corpus, const std::vector<RunRecord>& records)
{
    return validity(corpus, records).rate();
}

Diversity
diversity(const Corpus& corpus)
{
    std::set<std::string_view> names;
    std::set<int> registers;
    std::set<std::pair<int, int>> addresses;
    std::set<std::int64_t> immediates;
    Diversity d;
    for (const auto& t : corpus.tests()) {
        Program program;
        try {
            program = parse_asm(t.asm_text);
        } catch (const Error&) {
            ++d.unparseable;
            continue;
        }
        for (const auto& insn : program.instructions()) {
            const auto& info = insn.info();
            names.insert(info.asm_name);
            const int dst = insn.dst.index();
            const int src = insn.src.index();
            switch (info.form) {
            case Form::AluImm:
            case Form::JumpImm:
            case Form::LoadImm64:
                registers.insert(dst);
                immediates.insert(insn.imm);
                break;
            case Form::AluReg:
            case Form::MovSx:
            case Form::JumpReg:
                registers.insert(dst);
                registers.insert(src);
                break;
            case Form::Neg:
            case Form::ByteSwap: registers.insert(dst); break;
            case Form::Load:
                registers.insert(dst);
                registers.insert(src);
                addresses.insert({src, insn.offset});
                break;
            case Form::StoreImm:
                registers.insert(dst);
                addresses.insert({dst, insn.offset});
                immediates.insert(insn.imm);
                break;
            case Form::StoreReg:
                registers.insert(dst);
                registers.insert(src);
                addresses.insert({dst, insn.offset});
                break;
            case Form::JumpAlways:
            case Form::Call:
            case Form::Exit: break;
            }
        }
    }
    d.unique_instructions = names.size();
    d.unique_registers = registers.size();
    d.unique_addresses = addresses.size();
    d.unique_immediates = immediates.size();
    return d;
}

std::size_t
asm_line_count(const TestCase& test)
{
    std::size_t n = 0;
    std::size_t start = 0;
    const std::string_view text = test.asm_text;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            nl = text.size();
        }
        auto line = text.substr(start, nl - start);
        if (auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        if (std::any_of(line.begin(), line.end(), [](unsigned char c) { return !std::isspace(c); })) {
            ++n;
        }
        start = nl + 1;
    }
    return n;
}

Complexity
complexity(const Corpus& corpus)
{
    Complexity c;
    for (const auto& t : corpus.tests()) {
        c.lines.push_back(asm_line_count(t));
    }
    if (c.lines.empty()) {
        return c;
    }
    auto sorted = c.lines;
    std::sort(sorted.begin(), sorted.end());
    c.min = sorted.front();
    c.max = sorted.back();
    const auto n = sorted.size();
    c.median = n % 2 == 1 ? static_cast<double>(sorted[n / 2])
                          : (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2])) / 2.0;
    c.mean = static_cast<double>(std::accumulate(sorted.begin(), sorted.end(), std::size_t{0})) / static_cast<double>(n);
    for (auto l : c.lines) {
        const auto lo = l == 0 ? 0 : (l - 1) / Complexity::bucket_width * Complexity::bucket_width + 1;
        ++c.histogram[lo];
    }
    return c;
}

DifferentialCounts
count_differentials(const DifferentialResult& result)
{
    DifferentialCounts c;
    for (std::size_t i = 0; i < result.runtimes.size(); ++i) {
        for (std::size_t j = i + 1; j < result.runtimes.size(); ++j) {
            c.pairs[pair_label(result.runtimes, result.runtimes[i], result.runtimes[j])] = 0;
        }
    }
    for (auto k : {DivergenceKind::OutcomeClassDiffers, DivergenceKind::ReturnValuesDiffer, DivergenceKind::ErrorVsValue}) {
        c.kinds[std::string(to_string(k))] = 0;
    }
    for (const auto& f : result.findings) {
        if (!f.valid()) {
            ++c.excluded_invalid;
            continue;
        }
        ++c.total;
        for (const auto& p : f.runtime_pairs) {
            ++c.pairs[p];
        }
        for (auto k : f.kinds) {
            ++c.kinds[std::string(to_string(k))];
        }
        c.involving_crash += f.involves_crash ? 1 : 0;
    }
    return c;
}

ReportBundle
make_report(
    const Corpus& corpus,
    const std::vector<RunRecord>& records,
    const DifferentialResult& differentials,
    const std::map<std::string, std::string>& config)
{
    const auto v = validity(corpus, records);
    const auto d = diversity(corpus);
    const auto cx = complexity(corpus);
    const auto counts = count_differentials(differentials);
    const auto runtimes = _runtime_order(records);

    // instruction -> runtime -> outcome kind -> count
    std::map<std::string, std::size_t> tests_per_instruction;
    std::map<std::string, std::string, std::less<>> instruction_of;
    for (const auto& t : corpus.tests()) {
        const auto name = primary_instruction(t);
        instruction_of[t.name] = name;
        ++tests_per_instruction[name];
    }
    std::map<std::string, std::map<std::string, std::map<OutcomeKind, std::size_t>>> dist;
    for (const auto& r : records) {
        const auto it = instruction_of.find(r.test_name);
        if (it != instruction_of.end()) {
            ++dist[it->second][r.runtime_id][r.outcome.kind];
        }
    }

    json histogram = json::object();
    for (const auto& [lo, count] : cx.histogram) {
        histogram[fmt::format("{}-{}", lo, lo + Complexity::bucket_width - 1)] = count;
    }
    json per_instruction = json::object();
    for (const auto& [name, by_runtime] : dist) {
        json row = json::object();
        for (const auto& [rt, kinds] : by_runtime) {
            json k = json::object();
            for (auto kind : outcome_kinds) {
                const auto found = kinds.find(kind);
                k[std::string(to_string(kind))] = found == kinds.end() ? 0 : found->second;
            }
            row[rt] = k;
        }
        per_instruction[name] = row;
    }

    const json report{
        {"schema_version", 1},
        {"config", config},
        {"runtimes", runtimes},
        {"tests", corpus.size()},
        {"validity", {{"valid", v.valid}, {"tests", v.tests}, {"percent", _percent(v.valid, v.tests)}}},
        {"differentials",
         {{"pairs", counts.pairs},
          {"total", counts.total},
          {"kinds", counts.kinds},
          {"involving_crash", counts.involving_crash},
          {"excluded_invalid", counts.excluded_invalid},
          {"skipped_tests", differentials.skipped_tests.size()}}},
        {"diversity",
         {{"instructions", d.unique_instructions},
          {"registers", d.unique_registers},
          {"addresses", d.unique_addresses},
          {"immediates", d.unique_immediates},
          {"unparseable", d.unparseable}}},
        {"complexity",
         {{"min", cx.min},
          {"median", _one_decimal(cx.median)},
          {"mean", _one_decimal(cx.mean)},
          {"max", cx.max},
          {"histogram", histogram}}},
        {"per_instruction", per_instruction},
    };

    ReportBundle out;
    out.report_json = report.dump(2) + "\n";

    out.per_instruction_csv = "instruction,runtime,tests,PASS,FAIL,ERROR,SKIP,CRASH\n";
    for (const auto& [name, by_runtime] : dist) {
        for (const auto& rt : runtimes) {
            const auto found = by_runtime.find(rt);
            std::size_t total = 0;
            std::string cells;
            for (auto kind : outcome_kinds) {
                std::size_t n = 0;
                if (found != by_runtime.end()) {
                    const auto k = found->second.find(kind);
                    n = k == found->second.end() ? 0 : k->second;
                }
                total += n;
                cells += fmt::format(",{}", n);
            }
            out.per_instruction_csv += fmt::format("{},{},{}{}\n", name, rt, total, cells);
        }
    }

    std::string md = "# Differential testing report\n\n";
    if (!config.empty()) {
        for (const auto& [k, val] : config) {
            md += fmt::format("- {}: {}\n", k, val);
        }
        md += "\n";
    }
    md += fmt::format("Runtimes: {}\n\n", fmt::join(runtimes, ", "));
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < differentials.runtimes.size(); ++i) {
        for (std::size_t j = i + 1; j < differentials.runtimes.size(); ++j) {
            labels.push_back(pair_label(differentials.runtimes, differentials.runtimes[i], differentials.runtimes[j]));
        }
    }
    md += "## Differentiating tests\n\n| ";
    for (const auto& label : labels) {
        md += label + " | ";
    }
    md += "Total |\n|";
    for (std::size_t i = 0; i <= labels.size(); ++i) {
        md += "---:|";
    }
    md += "\n| ";
    for (const auto& label : labels) {
        md += fmt::format("{} | ", counts.pairs.at(label));
    }
    md += fmt::format("{} |\n\n", counts.total);
    if (counts.excluded_invalid > 0) {
        md += fmt::format("{} further findings involve a CRASH and are not counted.\n\n", counts.excluded_invalid);
    }
    md += "## Corpus\n\n| Tests | Valid % | Instr. | Reg. | Addr. | Imm. | Lines (min/median/mean/max) |\n";
    md += "|---:|---:|---:|---:|---:|---:|---|\n";
    md += fmt::format(
        "| {} | {:.1f} | {} | {} | {} | {} | {}/{:.1f}/{:.1f}/{} |\n", corpus.size(), _percent(v.valid, v.tests),
        d.unique_instructions, d.unique_registers, d.unique_addresses, d.unique_immediates, cx.min, cx.median, cx.mean,
        cx.max);
    if (d.unparseable > 0) {
        md += fmt::format("\n{} tests do not assemble and are left out of the diversity counts.\n", d.unparseable);
    }
    out.summary_md = std::move(md);

    std::map<std::size_t, std::size_t> by_lines;
    for (auto l : cx.lines) {
        ++by_lines[l];
    }
    out.complexity_dat = "# asm_lines tests\n";
    for (const auto& [l, n] : by_lines) {
        out.complexity_dat += fmt::format("{} {}\n", l, n);
    }
    return out;
}

void
write_report(const ReportBundle& bundle, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "report.json", bundle.report_json);
    write_file_atomic(dir / "per_instruction.csv", bundle.per_instruction_csv);
    write_file_atomic(dir / "summary.md", bundle.summary_md);
    write_file_atomic(dir / "complexity.dat", bundle.complexity_dat);
}

} // namespace diffharness
