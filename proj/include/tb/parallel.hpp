#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace tb {

// Runs body(i) for i in [0, count). Each index must write only to its own output slot.
template <class F>
void parallel_for(std::int64_t count, F&& body) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::int64_t workers = std::min<std::int64_t>(hw, count);
    if (workers <= 1) {
        for (std::int64_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (std::int64_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::int64_t i = w; i < count; i += workers) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace tb
