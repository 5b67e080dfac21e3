// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "diffharness/error.hpp"
#include "diffharness/extraction.hpp"
#include "diffharness/fuzz.hpp"
#include "diffharness/generation.hpp"
#include "diffharness/harness.hpp"
#include "diffharness/io.hpp"
#include "diffharness/metrics.hpp"
#include "diffharness/runtime.hpp"

namespace diffharness::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

bool
_is_provider_error(Errc code)
{
    return code == Errc::ProviderHttpError || code == Errc::FixtureMiss || code == Errc::ProviderConfig;
}

struct ProviderFlags {
    std::string settings;
    std::string mode;
    std::string model;
    std::string endpoint;
    std::string fixtures;
};

void
_add_provider_flags(CLI::App* cmd, ProviderFlags& f)
{
    cmd->add_option("--settings", f.settings, "JSON settings file");
    cmd->add_option("--provider-mode", f.mode, "live, record or replay (default replay)");
    cmd->add_option("--model", f.model, "model name");
    cmd->add_option("--endpoint", f.endpoint, "OpenAI-compatible base URL");
    cmd->add_option("--fixtures", f.fixtures, "recorded completions directory");
}

// ${NAME} references are expanded in secrets only.
std::string
_interpolate(const std::string& value, const Environment& env)
{
    static const std::regex ref(R"(\$\{([A-Za-z_][A-Za-z0-9_]*)\})");
    std::string out;
    auto begin = std::sregex_iterator(value.begin(), value.end(), ref);
    std::size_t last = 0;
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        out += value.substr(last, static_cast<std::size_t>(it->position()) - last);
        const auto v = env.getenv((*it)[1].str());
        if (!v) {
            throw Error(Errc::ProviderConfig, fmt::format("environment variable {} is not set", (*it)[1].str()));
        }
        out += *v;
        last = static_cast<std::size_t>(it->position() + it->length());
    }
    return out + value.substr(last);
}

ProviderConfig
_provider_config(const ProviderFlags& f, const Environment& env)
{
    ProviderConfig c;
    std::optional<std::string> raw_key;
    if (!f.settings.empty()) {
        json j;
        try {
            j = json::parse(read_file(f.settings));
        } catch (const json::exception& e) {
            throw Error(Errc::InvalidInput, fmt::format("{}: {}", f.settings, e.what()));
        }
        const auto p = j.value("provider", json::object());
        for (const auto& [key, value] : p.items()) {
            if (key != "api_key" && value.is_string() && value.get<std::string>().find("${") != std::string::npos) {
                throw Error(Errc::InvalidInput, fmt::format("{}: only api_key may reference the environment", f.settings));
            }
        }
        try {
            if (p.contains("mode")) {
                const auto m = provider_mode_from_string(p.at("mode").get<std::string>());
                if (!m) {
                    throw Error(Errc::InvalidInput, fmt::format("{}: unknown provider mode", f.settings));
                }
                c.mode = *m;
            }
            c.endpoint = p.value("endpoint", c.endpoint);
            c.model = p.value("model", c.model);
            c.fixtures_dir = p.value("fixtures", c.fixtures_dir.string());
            c.max_in_flight = p.value("max_in_flight", c.max_in_flight);
            c.max_attempts = p.value("max_attempts", c.max_attempts);
            if (p.contains("api_key")) {
                raw_key = p.at("api_key").get<std::string>();
            }
        } catch (const json::exception& e) {
            throw Error(Errc::InvalidInput, fmt::format("{}: {}", f.settings, e.what()));
        }
    }
    if (!f.mode.empty()) {
        const auto m = provider_mode_from_string(f.mode);
        if (!m) {
            throw Error(Errc::InvalidInput, fmt::format("unknown provider mode '{}' (live, record, replay)", f.mode));
        }
        c.mode = *m;
    }
    if (!f.model.empty()) {
        c.model = f.model;
    }
    if (!f.endpoint.empty()) {
        c.endpoint = f.endpoint;
    }
    if (!f.fixtures.empty()) {
        c.fixtures_dir = f.fixtures;
    }
    if (c.mode == ProviderMode::Replay) {
        return c;
    }
    if (raw_key) {
        c.api_key = _interpolate(*raw_key, env);
    }
    if (c.api_key.empty()) {
        if (auto key = env.getenv(api_key_env)) {
            c.api_key = *key;
        }
        if (c.api_key.empty()) {
            throw Error(
                Errc::ProviderConfig,
                fmt::format("{} mode needs an API key: set {}", to_string(c.mode), api_key_env));
        }
    }
    return c;
}

std::unique_ptr<LlmProvider>
_provider(const ProviderFlags& f, const Environment& env)
{
    auto config = _provider_config(f, env);
    auto transport = env.transport;
    if (!transport && config.mode != ProviderMode::Replay) {
        transport = std::make_shared<HttpTransport>();
    }
    return std::make_unique<LlmProvider>(std::move(config), std::move(transport));
}

std::pair<std::string, std::string>
_key_value(const std::string& s, std::string_view what)
{
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
        throw Error(Errc::InvalidInput, fmt::format("{} must look like <id>=<value>, got '{}'", what, s));
    }
    return {s.substr(0, eq), s.substr(eq + 1)};
}

std::string
_ablation_list()
{
    std::vector<std::string> names;
    for (auto id : all_ablations()) {
        names.emplace_back(ablation_name(id));
    }
    return fmt::format("{}", fmt::join(names, ", "));
}

std::chrono::milliseconds
_parse_duration(const std::string& s)
{
    static const std::regex re(R"((\d+)(ms|s|m)?)");
    std::smatch m;
    if (!std::regex_match(s, m, re)) {
        throw Error(Errc::InvalidInput, fmt::format("bad duration '{}' (examples: 500ms, 10s, 2m)", s));
    }
    const auto n = std::stoll(m[1].str());
    const auto unit = m[2].str();
    if (unit == "ms") {
        return std::chrono::milliseconds(n);
    }
    if (unit == "m") {
        return std::chrono::minutes(n);
    }
    return std::chrono::seconds(n);
}

Corpus
_load_corpora(const std::vector<std::string>& dirs)
{
    Corpus out;
    for (const auto& d : dirs) {
        if (!fs::is_directory(d)) {
            throw Error(Errc::InvalidInput, fmt::format("corpus directory '{}' does not exist", d));
        }
        const auto corpus = load_corpus(d);
        for (const auto& t : corpus.tests()) {
            out.add(t);
        }
    }
    return out;
}

std::vector<RunRecord>
_load_records(const std::string& path)
{
    return records_from_jsonl(read_file(path));
}

// --- Subcommands -----------------------------------------------------------------

struct ExtractArgs {
    std::string spec;
    std::vector<std::string> trees;
    std::string bugs;
    std::vector<std::string> corpus;
    std::string out;
    int jobs = 4;
    ProviderFlags provider;
};

int
_extract(const ExtractArgs& a, const Environment& env)
{
    ExtractionInputs in;
    in.spec_text = read_file(a.spec);
    for (const auto& t : a.trees) {
        auto [id, path] = _key_value(t, "--tree");
        if (!fs::is_directory(path)) {
            throw Error(Errc::InvalidInput, fmt::format("source tree '{}' does not exist", path));
        }
        in.trees.push_back({id, path});
    }
    if (!a.bugs.empty()) {
        in.bugs = load_bug_reports(a.bugs);
    }
    in.corpus = _load_corpora(a.corpus);
    auto llm = _provider(a.provider, env);
    const auto result = extract_context(in, *llm, a.jobs);
    write_context(result, a.out);
    std::size_t snippets = 0;
    for (const auto& b : result.bundles) {
        snippets += b.code_snippets.size();
    }
    fmt::print(
        *env.out, "{} instructions, {} code excerpts, {} bug categories -> {}\n", result.bundles.size(), snippets,
        result.bug_categories.size(), a.out);
    if (!result.instructions.unknown.empty()) {
        fmt::print(*env.err, "ignored unknown instruction names: {}\n", fmt::join(result.instructions.unknown, ", "));
    }
    return exit_ok;
}

struct GenerateArgs {
    std::string config;
    std::string context;
    std::vector<std::string> corpus;
    std::string guidelines;
    std::string spec;
    std::string out;
    std::uint64_t seed = 0;
    int jobs = 4;
    ProviderFlags provider;
};

int
_generate(const GenerateArgs& a, const Environment& env)
{
    const auto id = ablation_from_name(a.config);
    if (!id) {
        fmt::print(*env.err, "unknown config '{}'; valid ids: {}\n", a.config, _ablation_list());
        return exit_input;
    }
    const auto config = AblationConfig::make(*id);
    CampaignInputs in;
    in.bundles = load_context(a.context);
    in.corpus = _load_corpora(a.corpus);
    if (!a.guidelines.empty()) {
        in.guidelines = load_guidelines(a.guidelines);
    }
    if (config.single_phase) {
        if (a.spec.empty()) {
            fmt::print(*env.err, "{} writes tests from the specification; pass --spec\n", a.config);
            return exit_input;
        }
        in.spec_text = read_file(a.spec);
    }
    if (config.use_guidelines && in.guidelines.empty()) {
        fmt::print(*env.err, "warning: {} uses guidelines but none were given (--guidelines)\n", a.config);
    }
    in.seed = a.seed;
    in.parallelism = a.jobs;
    auto llm = _provider(a.provider, env);
    const auto campaign = run_ablation(config, in, *llm);
    fs::create_directories(a.out);
    for (const auto& entry : fs::directory_iterator(a.out)) {
        if (entry.path().extension() == ".data") {
            fs::remove(entry.path());
        }
    }
    save_corpus(campaign.corpus, a.out);
    write_file_atomic(fs::path(a.out) / "campaign.json", to_json(campaign).dump(2) + "\n");
    const auto& s = campaign.stats;
    fmt::print(
        *env.out, "{}: {} tests accepted, {} rejected, {} provider errors -> {}\n", a.config, s.accepted, s.rejected,
        s.provider_errors, a.out);
    if (s.provider_errors > 0) {
        fmt::print(*env.err, "{} prompts failed at the provider; see campaign.json\n", s.provider_errors);
        return exit_provider;
    }
    return exit_ok;
}

struct FuzzArgs {
    std::uint64_t seed = 0;
    int count = 0;
    std::string duration;
    int max_len = 8;
    std::string out;
};

int
_fuzz(const FuzzArgs& a, const Environment& env)
{
    const auto corpus = a.duration.empty() ? fuzz(a.seed, a.count, a.max_len)
                                           : fuzz_for(a.seed, _parse_duration(a.duration), a.max_len);
    fs::create_directories(a.out);
    save_corpus(corpus, a.out);
    fmt::print(*env.out, "{} fuzzed tests (seed {}) -> {}\n", corpus.size(), a.seed, a.out);
    return exit_ok;
}

struct RunArgs {
    std::vector<std::string> corpus;
    std::vector<std::string> runtimes;
    int timeout_ms = 5000;
    int jobs = 1;
    std::string out;
};

int
_run(const RunArgs& a, const Environment& env)
{
    std::vector<RuntimeSpec> runtimes;
    for (const auto& r : a.runtimes) {
        runtimes.push_back(parse_runtime_spec(r));
    }
    const auto corpus = _load_corpora(a.corpus);
    MatrixOptions options;
    options.parallelism = a.jobs;
    options.timeout = std::chrono::milliseconds(a.timeout_ms);
    const auto records = run_matrix(corpus, runtimes, options);
    const auto text = records_to_jsonl(records);
    if (a.out.empty()) {
        *env.out << text;
    } else {
        write_file_atomic(a.out, text);
        std::map<std::string, std::map<OutcomeKind, int>> tally;
        for (const auto& r : records) {
            ++tally[r.runtime_id][r.outcome.kind];
        }
        for (const auto& spec : runtimes) {
            std::vector<std::string> parts;
            for (const auto& [kind, n] : tally[spec.id]) {
                parts.push_back(fmt::format("{} {}", n, to_string(kind)));
            }
            fmt::print(*env.out, "{}: {}\n", spec.id, fmt::join(parts, ", "));
        }
        fmt::print(*env.out, "{} records -> {}\n", records.size(), a.out);
    }
    return exit_ok;
}

struct DiffArgs {
    std::string records;
    std::string out;
    bool fail_on_diff = false;
};

int
_diff(const DiffArgs& a, const Environment& env)
{
    const auto result = find_differentials(_load_records(a.records));
    if (!a.out.empty()) {
        write_file_atomic(a.out, to_json(result).dump(2) + "\n");
    }
    for (const auto& f : result.findings) {
        std::vector<std::string> parts;
        for (const auto& [rt, o] : f.outcomes) {
            parts.push_back(fmt::format("{}: {}", rt, describe(o)));
        }
        fmt::print(*env.out, "{}{}\n  {}\n", f.test_name, f.valid() ? "" : " (invalid)", fmt::join(parts, "\n  "));
    }
    const auto valid = std::count_if(result.findings.begin(), result.findings.end(), [](const auto& f) { return f.valid(); });
    fmt::print(
        *env.out, "{} findings ({} valid), {} tests skipped\n", result.findings.size(), valid, result.skipped_tests.size());
    return a.fail_on_diff && !result.findings.empty() ? exit_findings : exit_ok;
}

struct ReportArgs {
    std::string records;
    std::string findings;
    std::vector<std::string> corpus;
    std::vector<std::string> meta;
    std::string out;
};

int
_report(const ReportArgs& a, const Environment& env)
{
    const auto records = _load_records(a.records);
    DifferentialResult diffs;
    if (a.findings.empty()) {
        diffs = find_differentials(records);
    } else {
        try {
            diffs = differentials_from_json(json::parse(read_file(a.findings)));
        } catch (const json::exception& e) {
            throw Error(Errc::InvalidInput, fmt::format("{}: {}", a.findings, e.what()));
        }
    }
    const auto corpus = _load_corpora(a.corpus);
    std::map<std::string, std::string> meta;
    for (const auto& m : a.meta) {
        meta.insert(_key_value(m, "--meta"));
    }
    write_report(make_report(corpus, records, diffs, meta), a.out);
    fmt::print(*env.out, "report -> {}\n", a.out);
    return exit_ok;
}

} // namespace

int
run(const std::vector<std::string>& args, const Environment& env_in)
{
    Environment env = env_in;
    if (!env.out) {
        env.out = &std::cout;
    }
    if (!env.err) {
        env.err = &std::cerr;
    }
    if (!env.getenv) {
        env.getenv = [](const std::string& name) -> std::optional<std::string> {
            const char* v = std::getenv(name.c_str());
            return v ? std::optional<std::string>(v) : std::nullopt;
        };
    }

    CLI::App app{"Differential testing of eBPF runtimes with generated conformance tests", "diffharness"};
    app.require_subcommand(1);

    ExtractArgs ex;
    auto* extract = app.add_subcommand("extract", "Extract per-instruction context from a spec, sources and bug reports");
    extract->add_option("--spec", ex.spec, "ISA document (markdown or text)")->required();
    extract->add_option("--tree", ex.trees, "<id>=<path> runtime source tree")->required();
    extract->add_option("--bugs", ex.bugs, "bug reports JSON");
    extract->add_option("--corpus", ex.corpus, "human-written tests to map onto instructions");
    extract->add_option("--out", ex.out, "context directory")->required();
    extract->add_option("--jobs", ex.jobs, "parallel prompts")->check(CLI::PositiveNumber);
    _add_provider_flags(extract, ex.provider);

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Generate a test corpus under one ablation configuration");
    generate->add_option("--config", gen.config, "ablation id")->required();
    generate->add_option("--context", gen.context, "context directory from extract")->required();
    generate->add_option("--corpus", gen.corpus, "example tests");
    generate->add_option("--guidelines", gen.guidelines, "guideline file");
    generate->add_option("--spec", gen.spec, "ISA document (3shot-random and target-section)");
    generate->add_option("--seed", gen.seed, "example selection seed");
    generate->add_option("--out", gen.out, "output corpus directory")->required();
    generate->add_option("--jobs", gen.jobs, "parallel prompts")->check(CLI::PositiveNumber);
    _add_provider_flags(generate, gen.provider);

    FuzzArgs fz;
    auto* fuzz_cmd = app.add_subcommand("fuzz", "Write a random test corpus");
    fuzz_cmd->add_option("--seed", fz.seed, "generator seed")->required();
    auto* count = fuzz_cmd->add_option("--count", fz.count, "number of tests")->check(CLI::PositiveNumber);
    auto* duration = fuzz_cmd->add_option("--duration", fz.duration, "time budget, e.g. 10s");
    count->excludes(duration);
    fuzz_cmd->add_option("--max-len", fz.max_len, "instructions before exit")->check(CLI::PositiveNumber);
    fuzz_cmd->add_option("--out", fz.out, "output corpus directory")->required();

    RunArgs rn;
    auto* run_cmd = app.add_subcommand("run", "Run corpora on two or more runtimes");
    run_cmd->add_option("--corpus", rn.corpus, "test directory")->required();
    run_cmd->add_option("--runtime", rn.runtimes, "<id>=builtin:<profile> or <id>=plugin:<path>")->required();
    run_cmd->add_option("--timeout-ms", rn.timeout_ms, "per-test timeout")->check(CLI::PositiveNumber);
    run_cmd->add_option("--jobs", rn.jobs, "parallel executions")->check(CLI::PositiveNumber);
    run_cmd->add_option("--out", rn.out, "records file (JSON lines); stdout when omitted");

    DiffArgs df;
    auto* diff = app.add_subcommand("diff", "List differentiating tests");
    diff->add_option("--records", df.records, "records from run")->required();
    diff->add_option("--out", df.out, "findings JSON");
    diff->add_flag("--fail-on-diff", df.fail_on_diff, "exit 1 when any finding exists");

    ReportArgs rp;
    auto* report = app.add_subcommand("report", "Write report.json, per_instruction.csv, summary.md, complexity.dat");
    report->add_option("--records", rp.records, "records from run")->required();
    report->add_option("--findings", rp.findings, "findings from diff; recomputed when omitted");
    report->add_option("--corpus", rp.corpus, "the corpora that were run")->required();
    report->add_option("--meta", rp.meta, "<key>=<value> recorded in the report");
    report->add_option("--out", rp.out, "output directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        *env.out << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        *env.err << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        *env.err << (subs.empty() ? app.help() : subs.front()->help());
        return exit_input;
    }
    if (fuzz_cmd->parsed() && fz.count == 0 && fz.duration.empty()) {
        *env.err << "fuzz needs --count or --duration\n";
        return exit_input;
    }
    if (run_cmd->parsed() && rn.runtimes.size() < 2) {
        *env.err << "run needs at least two --runtime options\n";
        return exit_input;
    }

    try {
        if (extract->parsed()) {
            return _extract(ex, env);
        }
        if (generate->parsed()) {
            return _generate(gen, env);
        }
        if (fuzz_cmd->parsed()) {
            return _fuzz(fz, env);
        }
        if (run_cmd->parsed()) {
            return _run(rn, env);
        }
        if (diff->parsed()) {
            return _diff(df, env);
        }
        return _report(rp, env);
    } catch (const Error& e) {
        *env.err << "error: " << errc_name(e.code()) << ": " << e.what() << "\n";
        return _is_provider_error(e.code()) ? exit_provider : exit_input;
    } catch (const fs::filesystem_error& e) {
        *env.err << "error: " << e.what() << "\n";
        return exit_input;
    }
}

} // namespace diffharness::cli
