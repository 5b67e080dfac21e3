// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Command lines of the shipped fixture pipeline. Recording and replay must use
// identical inputs, so both go through these.

#include <string>
#include <vector>

namespace diffharness::pipeline {

inline const std::string settings = "fixtures/provider.json";
inline const std::string spec = "fixtures/spec/ebpf-isa.md";
inline const std::string human_corpus = "fixtures/corpus/human";

// Ablations with recorded completions.
inline const std::vector<std::string> recorded_configs{"3shot-random", "bug-guided-code-diff"};

inline std::vector<std::string>
extract_args(const std::string& out)
{
    return {"extract",
            "--spec", spec,
            "--tree", "linux-arm=fixtures/trees/linux-arm",
            "--tree", "ubpf=fixtures/trees/ubpf",
            "--bugs", "fixtures/bugs/bug_reports.json",
            "--corpus", human_corpus,
            "--settings", settings,
            "--out", out};
}

inline std::vector<std::string>
generate_args(const std::string& config, const std::string& context, const std::string& out)
{
    return {"generate",
            "--config", config,
            "--context", context,
            "--corpus", human_corpus,
            "--guidelines", "fixtures/guidelines.txt",
            "--spec", spec,
            "--settings", settings,
            "--out", out};
}

inline std::vector<std::string>
run_args(const std::string& corpus, const std::string& out)
{
    return {"run",
            "--corpus", corpus,
            "--runtime", "ref=builtin:reference",
            "--runtime", "shift=builtin:rsh-zero-bug",
            "--runtime", "jump=builtin:jump-offset-bug",
            "--jobs", "2",
            "--out", out};
}

inline std::vector<std::string>
diff_args(const std::string& records, const std::string& out)
{
    return {"diff", "--records", records, "--out", out};
}

inline std::vector<std::string>
report_args(const std::string& records,
            const std::string& findings,
            const std::string& corpus,
            const std::string& config,
            const std::string& out)
{
    return {"report",
            "--records", records,
            "--findings", findings,
            "--corpus", corpus,
            "--meta", "config=" + config,
            "--out", out};
}

} // namespace diffharness::pipeline
