#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

namespace uqeval {

// Runs make(i) for i in [begin, end) on up to `concurrency` threads and hands
// results to sink(i, record) strictly in index order from the calling thread.
// The first exception from make() stops dispatch and is rethrown after join.
template <typename Record, typename Make, typename Sink>
void ordered_parallel_for(std::size_t begin, std::size_t end, int concurrency, Make&& make,
                          Sink&& sink) {
    if (begin >= end) return;

    std::mutex mu;
    std::condition_variable cv;
    std::size_t next = begin;
    std::map<std::size_t, Record> done;
    std::exception_ptr first_error;

    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (first_error || next >= end) return;
                i = next++;
            }
            try {
                Record rec = make(i);
                std::lock_guard<std::mutex> lock(mu);
                done.emplace(i, std::move(rec));
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first_error) first_error = std::current_exception();
            }
            cv.notify_all();
        }
    };

    const std::size_t span = end - begin;
    const std::size_t n_workers =
        concurrency > 0 ? std::min<std::size_t>(static_cast<std::size_t>(concurrency), span) : 1;
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);

    std::size_t cursor = begin;
    {
        std::unique_lock<std::mutex> lock(mu);
        while (cursor < end) {
            cv.wait(lock, [&] { return done.count(cursor) > 0 || first_error != nullptr; });
            if (done.count(cursor) == 0) break;   // error and nothing more to drain
            Record rec = std::move(done.at(cursor));
            done.erase(cursor);
            lock.unlock();
            sink(cursor, rec);
            ++cursor;
            lock.lock();
        }
    }

    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace uqeval
