// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

int
main(int argc, char** argv)
{
    return diffharness::cli::run({argv + 1, argv + argc}, {});
}
