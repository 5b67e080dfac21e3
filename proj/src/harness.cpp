// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffharness/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fmt/format.h>
#include <sstream>
#include <thread>

#include "diffharness/asm.hpp"
#include "diffharness/error.hpp"

namespace diffharness {

using nlohmann::json;

namespace {

constexpr std::pair<OutcomeKind, std::string_view> outcome_names[] = {
    {OutcomeKind::Pass, "PASS"}, {OutcomeKind::Fail, "FAIL"},   {OutcomeKind::Skip, "SKIP"},
    {OutcomeKind::Error, "ERROR"}, {OutcomeKind::Crash, "CRASH"},
};

constexpr std::pair<DivergenceKind, std::string_view> divergence_names[] = {
    {DivergenceKind::OutcomeClassDiffers, "outcome-class-differs"},
    {DivergenceKind::ReturnValuesDiffer, "return-values-differ"},
    {DivergenceKind::ErrorVsValue, "error-vs-value"},
};

std::string
_lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string
_hex(std::uint64_t v)
{
    return fmt::format("0x{:x}", v);
}

std::uint64_t
_from_hex(const json& j)
{
    const auto s = j.get<std::string>();
    if (s.size() < 3 || s[0] != '0' || s[1] != 'x') {
        throw Error(Errc::InvalidInput, fmt::format("expected a 0x-prefixed value, got '{}'", s));
    }
    return std::stoull(s.substr(2), nullptr, 16);
}

} // namespace

std::string_view
to_string(OutcomeKind kind)
{
    for (const auto& [k, n] : outcome_names) {
        if (k == kind) {
            return n;
        }
    }
    return "?";
}

std::optional<OutcomeKind>
outcome_kind_from_string(std::string_view s)
{
    for (const auto& [k, n] : outcome_names) {
        if (n == s) {
            return k;
        }
    }
    return std::nullopt;
}

std::string_view
to_string(DivergenceKind kind)
{
    for (const auto& [k, n] : divergence_names) {
        if (k == kind) {
            return n;
        }
    }
    return "?";
}

Outcome
Outcome::fail(std::uint64_t actual, std::optional<std::uint64_t> expected)
{
    Outcome o;
    o.kind = OutcomeKind::Fail;
    o.actual = actual;
    o.expected = expected;
    return o;
}

Outcome
Outcome::skip(std::string reason)
{
    Outcome o;
    o.kind = OutcomeKind::Skip;
    o.message = std::move(reason);
    return o;
}

Outcome
Outcome::error(int code, std::string message)
{
    Outcome o;
    o.kind = OutcomeKind::Error;
    o.code = code;
    o.message = std::move(message);
    return o;
}

Outcome
Outcome::crash(std::string message)
{
    Outcome o;
    o.kind = OutcomeKind::Crash;
    o.message = std::move(message);
    return o;
}

std::string
describe(const Outcome& o)
{
    switch (o.kind) {
    case OutcomeKind::Pass: return "PASS: Test succeeded";
    case OutcomeKind::Fail:
        if (o.expected) {
            return fmt::format(
                "FAIL: Plugin returned incorrect return value {:x} expected {:x}", o.actual, *o.expected);
        }
        return fmt::format("FAIL: Plugin returned {:x} but an error was expected", o.actual);
    case OutcomeKind::Skip: return fmt::format("SKIP: {}", o.message);
    case OutcomeKind::Error:
        if (o.message.empty()) {
            return fmt::format("ERROR: Plugin returned error code {}", o.code);
        }
        return fmt::format("ERROR: Plugin returned error code {} and output {}", o.code, o.message);
    case OutcomeKind::Crash: return fmt::format("CRASH: {}", o.message);
    }
    return "?";
}

Outcome
classify(const ExecutionResponse& response, const TestCase& test)
{
    struct Visitor {
        const TestCase& test;
        Outcome operator()(const Returned& r) const
        {
            if (test.expected_result && *test.expected_result == r.value) {
                return Outcome::pass();
            }
            return Outcome::fail(r.value, test.expected_result);
        }
        Outcome operator()(const RuntimeError& e) const
        {
            if (test.expected_error && _lower(e.message).find(_lower(*test.expected_error)) != std::string::npos) {
                return Outcome::pass();
            }
            return Outcome::error(e.code, e.message);
        }
        Outcome operator()(const Timeout&) const { return Outcome::crash("timeout"); }
        Outcome operator()(const PluginCrash& c) const { return Outcome::crash(c.message); }
        Outcome operator()(const Unsupported& u) const { return Outcome::skip(u.reason); }
    };
    return std::visit(Visitor{test}, response);
}

std::vector<RunRecord>
run_matrix(const Corpus& corpus, const std::vector<RuntimeSpec>& runtimes, const MatrixOptions& options)
{
    if (runtimes.size() < 2) {
        throw Error(Errc::PreconditionViolated, "a differential run needs at least two runtimes");
    }
    const auto& tests = corpus.tests();
    std::vector<std::optional<Program>> programs(tests.size());
    std::vector<std::string> parse_errors(tests.size());
    for (std::size_t i = 0; i < tests.size(); ++i) {
        try {
            programs[i] = parse_asm(tests[i].asm_text);
        } catch (const Error& e) {
            parse_errors[i] = e.what();
        }
    }

    const std::size_t cells = tests.size() * runtimes.size();
    std::vector<RunRecord> records(cells);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t cell = next.fetch_add(1);
            if (cell >= cells) {
                return;
            }
            const std::size_t t = cell / runtimes.size();
            const auto& runtime = runtimes[cell % runtimes.size()];
            const auto& test = tests[t];
            RunRecord& rec = records[cell];
            rec.test_name = test.name;
            rec.runtime_id = runtime.id;
            const auto start = std::chrono::steady_clock::now();
            ExecutionResponse response;
            if (!programs[t]) {
                response = Unsupported{fmt::format("Test file contains unsupported instructions: {}", parse_errors[t])};
            } else {
                static const std::vector<std::uint8_t> no_mem;
                const auto& mem = test.mem ? *test.mem : no_mem;
                response = execute(runtime, *programs[t], mem, options.timeout);
            }
            rec.outcome = classify(response, test);
            rec.wall_time_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        }
    };
    const int jobs = std::max(1, std::min<int>(options.parallelism, static_cast<int>(std::max<std::size_t>(cells, 1))));
    {
        std::vector<std::jthread> pool;
        for (int i = 1; i < jobs; ++i) {
            pool.emplace_back(worker);
        }
        worker();
    }
    return records;
}

bool
is_valid(const std::vector<Outcome>& outcomes)
{
    return std::all_of(outcomes.begin(), outcomes.end(), [](const Outcome& o) {
        return o.kind == OutcomeKind::Pass || o.kind == OutcomeKind::Fail || o.kind == OutcomeKind::Error;
    });
}

bool
DifferentialFinding::valid() const
{
    std::vector<Outcome> list;
    for (const auto& [_, o] : outcomes) {
        list.push_back(o);
    }
    return is_valid(list);
}

std::string
pair_label(const std::vector<std::string>& runtimes, const std::string& a, const std::string& b)
{
    auto pos = [&](const std::string& id) { return std::find(runtimes.begin(), runtimes.end(), id) - runtimes.begin(); };
    return pos(a) <= pos(b) ? a + "-" + b : b + "-" + a;
}

namespace {

// Divergence between two outcomes of one test, if any; `crash` is set when a
// Crash is involved.
std::optional<DivergenceKind>
_diverge(const Outcome& a, const Outcome& b, bool& crash)
{
    using K = OutcomeKind;
    crash = false;
    if (a.kind == K::Crash || b.kind == K::Crash) {
        if (a.kind == b.kind) {
            return std::nullopt;
        }
        crash = true;
        return DivergenceKind::OutcomeClassDiffers;
    }
    if (a.kind == b.kind) {
        if (a.kind == K::Fail && a.actual != b.actual) {
            return DivergenceKind::ReturnValuesDiffer;
        }
        return std::nullopt;
    }
    if (a.kind == K::Error || b.kind == K::Error) {
        return DivergenceKind::ErrorVsValue;
    }
    return DivergenceKind::OutcomeClassDiffers;
}

} // namespace

DifferentialResult
find_differentials(const std::vector<RunRecord>& records)
{
    DifferentialResult result;
    std::vector<std::string> test_order;
    std::map<std::string, std::vector<std::pair<std::string, Outcome>>> by_test;
    for (const auto& r : records) {
        if (std::find(result.runtimes.begin(), result.runtimes.end(), r.runtime_id) == result.runtimes.end()) {
            result.runtimes.push_back(r.runtime_id);
        }
        auto [it, inserted] = by_test.try_emplace(r.test_name);
        if (inserted) {
            test_order.push_back(r.test_name);
        }
        it->second.emplace_back(r.runtime_id, r.outcome);
    }
    auto rank = [&](const std::string& id) {
        return std::find(result.runtimes.begin(), result.runtimes.end(), id) - result.runtimes.begin();
    };

    for (const auto& name : test_order) {
        auto outcomes = by_test[name];
        std::stable_sort(outcomes.begin(), outcomes.end(), [&](const auto& x, const auto& y) {
            return rank(x.first) < rank(y.first);
        });
        const bool any_skip = std::any_of(outcomes.begin(), outcomes.end(), [](const auto& p) {
            return p.second.kind == OutcomeKind::Skip;
        });
        if (any_skip) {
            result.skipped_tests.push_back(name);
            continue;
        }
        DifferentialFinding finding;
        finding.test_name = name;
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            for (std::size_t j = i + 1; j < outcomes.size(); ++j) {
                bool crash = false;
                if (auto kind = _diverge(outcomes[i].second, outcomes[j].second, crash)) {
                    finding.kinds.insert(*kind);
                    finding.involves_crash |= crash;
                    auto label = pair_label(result.runtimes, outcomes[i].first, outcomes[j].first);
                    if (std::find(finding.runtime_pairs.begin(), finding.runtime_pairs.end(), label) ==
                        finding.runtime_pairs.end()) {
                        finding.runtime_pairs.push_back(std::move(label));
                    }
                }
            }
        }
        if (!finding.kinds.empty()) {
            finding.outcomes = std::move(outcomes);
            result.findings.push_back(std::move(finding));
        }
    }
    return result;
}

json
to_json(const Outcome& o)
{
    json j{{"kind", to_string(o.kind)}};
    switch (o.kind) {
    case OutcomeKind::Pass: break;
    case OutcomeKind::Fail:
        j["actual"] = _hex(o.actual);
        j["expected"] = o.expected ? json(_hex(*o.expected)) : json(nullptr);
        break;
    case OutcomeKind::Error:
        j["code"] = o.code;
        j["message"] = o.message;
        break;
    case OutcomeKind::Skip:
    case OutcomeKind::Crash: j["message"] = o.message; break;
    }
    return j;
}

Outcome
outcome_from_json(const json& j)
{
    auto kind = outcome_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) {
        throw Error(Errc::InvalidInput, fmt::format("unknown outcome kind {}", j.at("kind").dump()));
    }
    switch (*kind) {
    case OutcomeKind::Pass: return Outcome::pass();
    case OutcomeKind::Fail: {
        std::optional<std::uint64_t> expected;
        if (j.contains("expected") && !j.at("expected").is_null()) {
            expected = _from_hex(j.at("expected"));
        }
        return Outcome::fail(_from_hex(j.at("actual")), expected);
    }
    case OutcomeKind::Error: return Outcome::error(j.at("code").get<int>(), j.at("message").get<std::string>());
    case OutcomeKind::Skip: return Outcome::skip(j.at("message").get<std::string>());
    case OutcomeKind::Crash: return Outcome::crash(j.at("message").get<std::string>());
    }
    return {};
}

std::string
records_to_jsonl(const std::vector<RunRecord>& records)
{
    std::string out;
    for (const auto& r : records) {
        json j{
            {"test", r.test_name},
            {"runtime", r.runtime_id},
            {"outcome", to_json(r.outcome)},
            {"wall_time_ms", r.wall_time_ms},
        };
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<RunRecord>
records_from_jsonl(const std::string& text)
{
    std::vector<RunRecord> records;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            auto j = json::parse(line);
            RunRecord r;
            r.test_name = j.at("test").get<std::string>();
            r.runtime_id = j.at("runtime").get<std::string>();
            r.outcome = outcome_from_json(j.at("outcome"));
            r.wall_time_ms = j.value("wall_time_ms", 0.0);
            records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw Error(Errc::InvalidInput, fmt::format("records line {}: {}", line_no, e.what()), line_no);
        }
    }
    return records;
}

json
to_json(const DifferentialResult& result)
{
    json findings = json::array();
    for (const auto& f : result.findings) {
        json kinds = json::array();
        for (auto k : f.kinds) {
            kinds.push_back(to_string(k));
        }
        json outcomes = json::array();
        for (const auto& [runtime, o] : f.outcomes) {
            outcomes.push_back(json{{"runtime", runtime}, {"outcome", to_json(o)}});
        }
        findings.push_back(json{
            {"test", f.test_name},
            {"kinds", kinds},
            {"pairs", f.runtime_pairs},
            {"involves_crash", f.involves_crash},
            {"outcomes", outcomes},
        });
    }
    return json{
        {"schema_version", 1},
        {"runtimes", result.runtimes},
        {"findings", findings},
        {"skipped_tests", result.skipped_tests},
    };
}

DifferentialResult
differentials_from_json(const json& j)
{
    try {
        DifferentialResult result;
        result.runtimes = j.at("runtimes").get<std::vector<std::string>>();
        result.skipped_tests = j.at("skipped_tests").get<std::vector<std::string>>();
        for (const auto& jf : j.at("findings")) {
            DifferentialFinding f;
            f.test_name = jf.at("test").get<std::string>();
            for (const auto& k : jf.at("kinds")) {
                for (const auto& [kind, name] : divergence_names) {
                    if (name == k.get<std::string>()) {
                        f.kinds.insert(kind);
                    }
                }
            }
            f.runtime_pairs = jf.at("pairs").get<std::vector<std::string>>();
            f.involves_crash = jf.at("involves_crash").get<bool>();
            for (const auto& jo : jf.at("outcomes")) {
                f.outcomes.emplace_back(jo.at("runtime").get<std::string>(), outcome_from_json(jo.at("outcome")));
            }
            result.findings.push_back(std::move(f));
        }
        return result;
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidInput, fmt::format("findings document: {}", e.what()));
    }
}

} // namespace diffharness
