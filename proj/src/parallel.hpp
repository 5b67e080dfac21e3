// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace diffharness::detail {

// Calls fn(i) for i in [0, n) on up to `parallelism` threads. The first
// exception by index is rethrown after all work finishes.
template <typename Fn>
void
parallel_for(std::size_t n, int parallelism, Fn&& fn)
{
    if (n == 0) {
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    {
        const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, parallelism)));
        std::vector<std::jthread> workers;
        for (std::size_t t = 0; t < threads; ++t) {
            workers.emplace_back([&] {
                for (auto i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

} // namespace diffharness::detail
