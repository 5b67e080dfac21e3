// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffharness/io.hpp"

#include <atomic>
#include <fmt/format.h>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "diffharness/error.hpp"

namespace diffharness {

void
write_file_atomic(const std::filesystem::path& path, const std::string& text)
{
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += fmt::format(".tmp{}.{}", ::getpid(), counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) {
            throw Error(Errc::InvalidInput, fmt::format("cannot write {}", tmp.string()));
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string
read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::InvalidInput, fmt::format("cannot read {}", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace diffharness
