// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffharness/generation.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fmt/format.h>
#include <mutex>
#include <random>
#include <set>

#include "diffharness/asm.hpp"
#include "diffharness/error.hpp"
#include "diffharness/io.hpp"
#include "diffharness/prompts.hpp"
#include "parallel.hpp"

namespace diffharness {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<AblationId, std::string_view>, 9> ablation_names{{
    {AblationId::ThreeShotRandom, "3shot-random"},
    {AblationId::TargetSection, "target-section"},
    {AblationId::PromptChain, "prompt-chain"},
    {AblationId::PromptChainInstruct, "prompt-chain-instruct"},
    {AblationId::BugCentric, "bug-centric"},
    {AblationId::CodeDescription, "code-description"},
    {AblationId::CodeDescriptionDiff, "code-description-diff"},
    {AblationId::CodeDiff, "code-diff"},
    {AblationId::BugGuidedCodeDiff, "bug-guided-code-diff"},
}};

constexpr std::array<AblationId, 9> ablation_ids{
    AblationId::ThreeShotRandom, AblationId::TargetSection,       AblationId::PromptChain,
    AblationId::PromptChainInstruct, AblationId::BugCentric,      AblationId::CodeDescription,
    AblationId::CodeDescriptionDiff, AblationId::CodeDiff,        AblationId::BugGuidedCodeDiff,
};

constexpr std::string_view direct_description = "generated directly from the specification";

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
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            out.push_back(text.substr(start));
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

bool
_has_word(std::string_view haystack, std::string_view word)
{
    const auto h = _lower(haystack);
    const auto w = _lower(word);
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    for (auto pos = h.find(w); pos != std::string::npos; pos = h.find(w, pos + 1)) {
        const bool left = pos == 0 || !is_word(h[pos - 1]);
        const bool right = pos + w.size() == h.size() || !is_word(h[pos + w.size()]);
        if (left && right) {
            return true;
        }
    }
    return false;
}

int
_heading_level(std::string_view line)
{
    int level = 0;
    while (static_cast<std::size_t>(level) < line.size() && line[static_cast<std::size_t>(level)] == '#') {
        ++level;
    }
    if (level == 0 || static_cast<std::size_t>(level) >= line.size() || line[static_cast<std::size_t>(level)] != ' ') {
        return 0;
    }
    return level;
}

std::uint64_t
_fnv1a(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// k distinct indices from [0, n) by partial Fisher-Yates; only mt19937_64's
// raw output is used, so the choice is identical on every standard library.
std::vector<std::size_t>
_sample(std::mt19937_64& rng, std::size_t n, std::size_t k)
{
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = i;
    }
    k = std::min(k, n);
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng() % (n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

[[noreturn]] void
_missing(std::string_view field, const AblationConfig& config, std::string_view mnemonic)
{
    throw Error(
        Errc::MissingContext,
        fmt::format("{} bundle has no {} required by {}", mnemonic, field, ablation_name(config.id)));
}

PromptRequest
_stamp(PromptRequest r, const CompletionProvider& llm)
{
    if (r.model.empty()) {
        r.model = llm.model();
    }
    return r;
}

} // namespace

std::string_view
ablation_name(AblationId id)
{
    for (const auto& [a, name] : ablation_names) {
        if (a == id) {
            return name;
        }
    }
    return "?";
}

std::optional<AblationId>
ablation_from_name(std::string_view name)
{
    for (const auto& [a, n] : ablation_names) {
        if (n == name) {
            return a;
        }
    }
    return std::nullopt;
}

std::span<const AblationId>
all_ablations()
{
    return ablation_ids;
}

AblationConfig
AblationConfig::make(AblationId id)
{
    AblationConfig c;
    c.id = id;
    switch (id) {
    case AblationId::ThreeShotRandom:
        c.single_phase = true;
        c.examples = ExampleSelection::Random;
        break;
    case AblationId::TargetSection: c.single_phase = true; break;
    case AblationId::PromptChain: c.examples = ExampleSelection::Random; break;
    case AblationId::PromptChainInstruct:
        c.examples = ExampleSelection::Random;
        c.use_guidelines = true;
        break;
    case AblationId::BugCentric:
        c.use_guidelines = true;
        c.use_bug_categories = true;
        break;
    case AblationId::CodeDescription:
        c.use_guidelines = true;
        c.use_code_descriptions = true;
        break;
    case AblationId::CodeDescriptionDiff:
        c.use_guidelines = true;
        c.use_code_descriptions = true;
        c.use_desc_diffs = true;
        break;
    case AblationId::CodeDiff:
        c.use_guidelines = true;
        c.use_code_diffs = true;
        break;
    case AblationId::BugGuidedCodeDiff:
        c.use_guidelines = true;
        c.use_bug_categories = true;
        c.use_code_diffs = true;
        break;
    }
    return c;
}

void
require_context(const ContextBundle& bundle, const AblationConfig& config)
{
    if (config.single_phase) {
        return;
    }
    if (bundle.constraints.empty()) {
        _missing("constraints", config, bundle.mnemonic);
    }
    if (config.use_bug_categories && bundle.bug_categories.empty()) {
        _missing("bug_categories", config, bundle.mnemonic);
    }
    if (config.use_code_descriptions && bundle.code_descriptions.empty()) {
        _missing("code_descriptions", config, bundle.mnemonic);
    }
    if (config.use_desc_diffs && bundle.desc_diffs.empty()) {
        _missing("desc_diffs", config, bundle.mnemonic);
    }
    if (config.use_code_diffs && bundle.code_diffs.empty()) {
        _missing("code_diffs", config, bundle.mnemonic);
    }
}

namespace {

struct DescriptionPrompt {
    PromptRequest request;
    std::optional<std::string> bug_category;
    std::optional<std::string> difference;
};

std::vector<DescriptionPrompt>
_description_prompts(const ContextBundle& bundle, const AblationConfig& config)
{
    require_context(bundle, config);
    if (config.single_phase) {
        return {};
    }
    prompts::DescriptionContext base;
    base.mnemonic = bundle.mnemonic;
    base.constraints = bundle.constraints;
    base.count = config.descriptions_per_prompt;
    if (config.use_code_descriptions) {
        for (const auto& [id, text] : bundle.code_descriptions) {
            base.code_descriptions.push_back({id, text});
        }
    }

    std::vector<std::optional<prompts::NamedText>> categories{std::nullopt};
    if (config.use_bug_categories) {
        categories.clear();
        for (const auto& c : bundle.bug_categories) {
            categories.emplace_back(prompts::NamedText{c.name, c.description});
        }
    }
    std::vector<std::optional<std::string>> differences{std::nullopt};
    if (config.use_code_diffs) {
        differences.assign(bundle.code_diffs.begin(), bundle.code_diffs.end());
    } else if (config.use_desc_diffs) {
        differences.assign(bundle.desc_diffs.begin(), bundle.desc_diffs.end());
    }

    std::vector<DescriptionPrompt> out;
    for (const auto& category : categories) {
        for (const auto& difference : differences) {
            auto ctx = base;
            ctx.bug_category = category;
            if (config.use_code_diffs) {
                ctx.code_difference = difference;
            } else if (config.use_desc_diffs) {
                ctx.description_difference = difference;
            }
            DescriptionPrompt p{prompts::describe_tests(ctx), std::nullopt, difference};
            if (category) {
                p.bug_category = category->name;
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::vector<TestDescription>
_descriptions_from(std::string_view mnemonic, const DescriptionPrompt& prompt, std::string_view completion, int limit)
{
    std::vector<TestDescription> out;
    for (auto& item : parse_list(completion)) {
        if (static_cast<int>(out.size()) >= limit) {
            break;
        }
        if (_trim(item).empty()) {
            continue;
        }
        out.push_back({std::string(mnemonic), std::move(item), prompt.bug_category, prompt.difference});
    }
    return out;
}

} // namespace

std::vector<PromptRequest>
description_prompts(const ContextBundle& bundle, const AblationConfig& config)
{
    std::vector<PromptRequest> out;
    for (auto& p : _description_prompts(bundle, config)) {
        out.push_back(std::move(p.request));
    }
    return out;
}

std::vector<TestDescription>
generate_descriptions(const ContextBundle& bundle, const AblationConfig& config, CompletionProvider& llm)
{
    std::vector<TestDescription> out;
    for (const auto& p : _description_prompts(bundle, config)) {
        for (auto& d : _descriptions_from(bundle.mnemonic, p, llm.complete(p.request), config.descriptions_per_prompt)) {
            out.push_back(std::move(d));
        }
    }
    return out;
}

TestCase
parse_generated_test(std::string_view text)
{
    auto blocks = code_blocks(text);
    const std::string body = blocks.empty() ? std::string(text) : blocks.front();
    TestCase test;
    try {
        test = parse_test_file(body);
    } catch (const Error& e) {
        throw Error(Errc::UnparseableTest, fmt::format("{}: {}", errc_name(e.code()), e.detail()), e.line());
    }
    Program program;
    try {
        program = parse_asm(test.asm_text);
    } catch (const Error& e) {
        throw Error(Errc::UnparseableTest, fmt::format("{}: {}", errc_name(e.code()), e.detail()), e.line());
    }
    const auto& insns = program.instructions();
    if (std::none_of(insns.begin(), insns.end(), [](const Instruction& i) { return i.mnemonic() == Mnemonic::Exit; })) {
        throw Error(Errc::UnparseableTest, "MissingExit: program has no exit instruction");
    }
    return test;
}

GeneratedTest
generate_test(
    const TestDescription& description,
    std::span<const TestCase> examples,
    std::span<const std::string> guidelines,
    CompletionProvider& llm)
{
    std::vector<std::string> example_text;
    for (const auto& e : examples) {
        example_text.push_back(serialize_test_file(e));
    }
    const auto request =
        _stamp(prompts::write_test(description.mnemonic, description.text, example_text, guidelines), llm);
    GeneratedTest out;
    out.prompt_hash = request_hash(request);
    out.test = parse_generated_test(llm.complete(request));
    out.test.provenance.kind = ProvenanceKind::Generated;
    out.test.provenance.mnemonic = description.mnemonic;
    out.test.provenance.description = description.text;
    out.test.provenance.prompt_hash = out.prompt_hash;
    return out;
}

std::vector<std::string>
load_guidelines(const std::filesystem::path& path)
{
    std::vector<std::string> out;
    const auto text = read_file(path);
    for (auto line : _lines(text)) {
        auto t = _trim(line);
        if (t.empty() || t.starts_with('#')) {
            continue;
        }
        auto items = parse_list(t);
        if (!items.empty()) {
            out.push_back(items.front());
        }
    }
    return out;
}

std::vector<std::string>
section_headings(std::string_view document)
{
    std::vector<std::string> out;
    for (auto line : _lines(document)) {
        if (_heading_level(line) > 0) {
            out.emplace_back(_trim(line));
        }
    }
    return out;
}

std::optional<std::string>
find_section(std::string_view document, std::string_view mnemonic)
{
    const auto lines = _lines(document);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const int level = _heading_level(lines[i]);
        if (level == 0 || !_has_word(lines[i].substr(static_cast<std::size_t>(level)), mnemonic)) {
            continue;
        }
        std::string out;
        for (std::size_t j = i; j < lines.size(); ++j) {
            const int l = _heading_level(lines[j]);
            if (j > i && l > 0 && l <= level) {
                break;
            }
            out += lines[j];
            out += '\n';
        }
        return out;
    }
    return std::nullopt;
}

namespace {

// The section text for the target-section baseline and how it was chosen.
std::pair<std::string, std::string>
_target_section(std::string_view spec, std::string_view mnemonic, CompletionProvider& llm, CampaignStats& stats, std::mutex& mu)
{
    if (auto s = find_section(spec, mnemonic)) {
        return {*s, fmt::format("heading: {}", _trim(_lines(*s).front()))};
    }
    const auto headings = section_headings(spec);
    if (!headings.empty()) {
        {
            std::lock_guard lock(mu);
            ++stats.prompts[std::string(prompts::task_name(prompts::Task::SelectSection))];
        }
        const auto answer = std::string(_trim(llm.complete(prompts::select_section(mnemonic, headings))));
        for (const auto& h : headings) {
            if (_trim(h) == answer || _trim(std::string_view(h).substr(h.find(' ') + 1)) == answer) {
                const auto lines = _lines(spec);
                for (std::size_t i = 0; i < lines.size(); ++i) {
                    if (_trim(lines[i]) == _trim(h)) {
                        const int level = _heading_level(lines[i]);
                        std::string out;
                        for (std::size_t j = i; j < lines.size(); ++j) {
                            const int l = _heading_level(lines[j]);
                            if (j > i && l > 0 && l <= level) {
                                break;
                            }
                            out += lines[j];
                            out += '\n';
                        }
                        return {out, fmt::format("llm: {}", h)};
                    }
                }
            }
        }
    }
    return {std::string(spec), "full document"};
}

struct Candidate {
    std::size_t bundle;
    TestDescription description;
    std::optional<GeneratedTest> result;
    std::optional<std::string> rejection;
    bool provider_error = false;
};

} // namespace

Campaign
run_ablation(const AblationConfig& config, const CampaignInputs& inputs, CompletionProvider& llm)
{
    Campaign campaign;
    campaign.config = config;
    auto& stats = campaign.stats;
    std::mutex mu;
    const std::string config_name(ablation_name(config.id));

    auto bundles = inputs.bundles;
    std::sort(bundles.begin(), bundles.end(), [](const auto& a, const auto& b) { return a.mnemonic < b.mnemonic; });

    // Few-shot examples per bundle, chosen up front so they do not depend on
    // scheduling.
    const auto& corpus_tests = inputs.corpus.tests();
    std::vector<std::vector<TestCase>> examples(bundles.size());
    for (std::size_t b = 0; b < bundles.size(); ++b) {
        std::mt19937_64 rng(inputs.seed ^ _fnv1a(bundles[b].mnemonic));
        std::vector<const TestCase*> pool;
        if (config.examples == ExampleSelection::Mapped) {
            for (const auto& name : bundles[b].example_tests) {
                if (const auto* t = inputs.corpus.find(name)) {
                    pool.push_back(t);
                }
            }
            if (pool.empty()) {
                stats.random_example_fallbacks.push_back(bundles[b].mnemonic);
            }
        }
        if (pool.empty()) {
            for (const auto& t : corpus_tests) {
                pool.push_back(&t);
            }
        }
        for (auto i : _sample(rng, pool.size(), static_cast<std::size_t>(std::max(0, config.example_count)))) {
            examples[b].push_back(*pool[i]);
        }
    }
    const std::span<const std::string> guidelines =
        config.use_guidelines ? std::span<const std::string>(inputs.guidelines) : std::span<const std::string>{};

    std::vector<std::vector<Candidate>> per_bundle(bundles.size());

    if (config.single_phase) {
        detail::parallel_for(bundles.size(), inputs.parallelism, [&](std::size_t b) {
            const auto& m = bundles[b].mnemonic;
            std::string spec = inputs.spec_text;
            try {
                if (config.id == AblationId::TargetSection) {
                    auto [text, choice] = _target_section(inputs.spec_text, m, llm, stats, mu);
                    spec = std::move(text);
                    std::lock_guard lock(mu);
                    stats.section_choices[m] = std::move(choice);
                }
                std::vector<std::string> example_text;
                for (const auto& e : examples[b]) {
                    example_text.push_back(serialize_test_file(e));
                }
                const auto request =
                    _stamp(prompts::direct_tests(m, spec, example_text, config.descriptions_per_prompt), llm);
                {
                    std::lock_guard lock(mu);
                    ++stats.prompts[std::string(prompts::task_name(prompts::Task::DirectTests))];
                }
                const auto hash = request_hash(request);
                const auto answer = llm.complete(request);
                auto blocks = code_blocks(answer);
                if (blocks.empty()) {
                    blocks.push_back(answer);
                }
                for (const auto& block : blocks) {
                    Candidate c{b, {m, std::string(direct_description), std::nullopt, std::nullopt}, std::nullopt, std::nullopt};
                    try {
                        GeneratedTest g{parse_generated_test("```\n" + block + "```\n"), hash};
                        g.test.provenance.kind = ProvenanceKind::Generated;
                        g.test.provenance.mnemonic = m;
                        g.test.provenance.description = std::string(direct_description);
                        g.test.provenance.prompt_hash = hash;
                        c.result = std::move(g);
                    } catch (const Error& e) {
                        c.rejection = e.what();
                    }
                    per_bundle[b].push_back(std::move(c));
                }
            } catch (const Error& e) {
                if (!is_provider_error(e.code())) {
                    throw;
                }
                Candidate c{b, {m, std::string(direct_description), std::nullopt, std::nullopt}, std::nullopt, e.what()};
                c.provider_error = true;
                per_bundle[b].push_back(std::move(c));
            }
        });
    } else {
        // Phase one: descriptions.
        struct Job {
            std::size_t bundle;
            DescriptionPrompt prompt;
            std::vector<TestDescription> descriptions;
            std::optional<std::string> provider_error;
        };
        std::vector<Job> jobs;
        for (std::size_t b = 0; b < bundles.size(); ++b) {
            try {
                for (auto& p : _description_prompts(bundles[b], config)) {
                    jobs.push_back({b, std::move(p), {}, std::nullopt});
                }
            } catch (const Error& e) {
                if (e.code() != Errc::MissingContext) {
                    throw;
                }
                stats.skipped_mnemonics[bundles[b].mnemonic] = e.detail();
            }
        }
        stats.prompts[std::string(prompts::task_name(prompts::Task::DescribeTests))] += static_cast<int>(jobs.size());
        detail::parallel_for(jobs.size(), inputs.parallelism, [&](std::size_t j) {
            auto& job = jobs[j];
            try {
                job.descriptions = _descriptions_from(
                    bundles[job.bundle].mnemonic, job.prompt, llm.complete(job.prompt.request),
                    config.descriptions_per_prompt);
            } catch (const Error& e) {
                if (!is_provider_error(e.code())) {
                    throw;
                }
                job.provider_error = e.what();
            }
        });

        // Phase two: one test per description.
        std::vector<Candidate> candidates;
        for (auto& job : jobs) {
            if (job.provider_error) {
                Candidate c{job.bundle, {bundles[job.bundle].mnemonic, "", std::nullopt, std::nullopt}, std::nullopt, job.provider_error};
                c.provider_error = true;
                candidates.push_back(std::move(c));
                continue;
            }
            if (job.descriptions.empty()) {
                stats.rejections.push_back({bundles[job.bundle].mnemonic, "description", "completion listed no descriptions"});
            }
            for (auto& d : job.descriptions) {
                candidates.push_back({job.bundle, std::move(d), std::nullopt, std::nullopt});
            }
        }
        for (const auto& c : candidates) {
            stats.descriptions += c.provider_error ? 0 : 1;
        }
        stats.prompts[std::string(prompts::task_name(prompts::Task::WriteTest))] += static_cast<int>(
            std::count_if(candidates.begin(), candidates.end(), [](const Candidate& c) { return !c.provider_error; }));
        detail::parallel_for(candidates.size(), inputs.parallelism, [&](std::size_t i) {
            auto& c = candidates[i];
            if (c.provider_error) {
                return;
            }
            try {
                c.result = generate_test(c.description, examples[c.bundle], guidelines, llm);
            } catch (const Error& e) {
                c.rejection = e.what();
                c.provider_error = is_provider_error(e.code());
            }
        });
        for (auto& c : candidates) {
            per_bundle[c.bundle].push_back(std::move(c));
        }
    }

    // Deterministic reduction.
    for (std::size_t b = 0; b < bundles.size(); ++b) {
        int seq = 0;
        for (auto& c : per_bundle[b]) {
            if (c.provider_error) {
                ++stats.provider_errors;
                stats.rejections.push_back({bundles[b].mnemonic, "provider", c.rejection.value_or("")});
                continue;
            }
            ++stats.completions;
            if (!c.result) {
                ++stats.rejected;
                stats.rejections.push_back({bundles[b].mnemonic, "test", c.rejection.value_or("")});
                continue;
            }
            ++stats.accepted;
            auto test = std::move(c.result->test);
            test.name = fmt::format("gen_{}_{}_{}", bundles[b].mnemonic, config_name, seq++);
            test.provenance.ablation = config_name;
            campaign.corpus.add(std::move(test));
        }
    }
    std::sort(stats.random_example_fallbacks.begin(), stats.random_example_fallbacks.end());
    return campaign;
}

json
to_json(const Campaign& campaign)
{
    const auto& c = campaign.config;
    const auto& s = campaign.stats;
    json rejections = json::array();
    for (const auto& r : s.rejections) {
        rejections.push_back({{"mnemonic", r.mnemonic}, {"stage", r.stage}, {"reason", r.reason}});
    }
    std::map<std::string, int> per_mnemonic;
    for (const auto& t : campaign.corpus.tests()) {
        ++per_mnemonic[t.provenance.mnemonic];
    }
    return json{
        {"schema_version", 1},
        {"config",
         {{"id", ablation_name(c.id)},
          {"single_phase", c.single_phase},
          {"descriptions_per_prompt", c.descriptions_per_prompt},
          {"use_guidelines", c.use_guidelines},
          {"use_bug_categories", c.use_bug_categories},
          {"use_code_descriptions", c.use_code_descriptions},
          {"use_desc_diffs", c.use_desc_diffs},
          {"use_code_diffs", c.use_code_diffs},
          {"examples", c.examples == ExampleSelection::Random ? "random" : "mapped"},
          {"example_count", c.example_count}}},
        {"prompts", s.prompts},
        {"descriptions", s.descriptions},
        {"completions", s.completions},
        {"accepted", s.accepted},
        {"rejected", s.rejected},
        {"provider_errors", s.provider_errors},
        {"rejections", rejections},
        {"skipped_mnemonics", s.skipped_mnemonics},
        {"section_choices", s.section_choices},
        {"random_example_fallbacks", s.random_example_fallbacks},
        {"tests_per_mnemonic", per_mnemonic},
    };
}

} // namespace diffharness
