#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace advlab {

/// Calls fn(begin, count) for consecutive chunks of [0, n). Chunk boundaries
/// depend only on n and chunk, never on the thread count, so any work that is
/// a pure function of its chunk gives the same bytes for every `threads`.
/// The first exception thrown by any chunk is rethrown after all workers stop.
inline void parallel_chunks(std::size_t n, std::size_t chunk, std::size_t threads,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  threads = std::clamp<std::size_t>(threads, 1, chunks);
  if (threads == 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c * chunk, std::min(chunk, n - c * chunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks || failed.load()) return;
      try {
        fn(c * chunk, std::min(chunk, n - c * chunk));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace advlab
