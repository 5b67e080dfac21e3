// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

namespace diffharness {

// Writes via a temporary file in the same directory and renames it into
// place. Creates parent directories. Throws Error{InvalidInput}.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

// Throws Error{InvalidInput} when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

} // namespace diffharness
