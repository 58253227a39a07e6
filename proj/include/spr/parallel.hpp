#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace spr {

// Runs fn(task_index) for task_index in [0, count) on up to `parallelism`
// worker threads.  Tasks claim indices from a shared counter; results must be
// written to task-indexed slots by the caller, which keeps outputs identical
// for any parallelism value.  The first exception thrown by a task is
// rethrown on the calling thread after all workers join.
template <class Fn>
void parallel_for(std::size_t count, int parallelism, Fn&& fn) {
  if (parallelism < 1) parallelism = 1;
  if (count == 0) return;
  if (parallelism == 1 || count == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(parallelism), count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace spr
