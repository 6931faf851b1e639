#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace choiceeval {

// Runs fn(item) over the vector with a fixed worker count. The first exception
// wins: remaining items are abandoned and it rethrows on the caller's thread.
// fn is responsible for catching anything that should not abort the batch.
template <typename Item, typename Fn>
void parallel_for_each(const std::vector<Item>& items, int workers, Fn&& fn) {
    if (items.empty()) return;
    if (workers < 1) workers = 1;
    if (static_cast<std::size_t>(workers) > items.size())
        workers = static_cast<int>(items.size());

    if (workers == 1) {
        for (const Item& item : items) fn(item);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::atomic<bool> abort{false};

    auto worker = [&] {
        for (;;) {
            if (abort.load(std::memory_order_relaxed)) return;
            std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= items.size()) return;
            try {
                fn(items[i]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
                abort.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace choiceeval
