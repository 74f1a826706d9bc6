#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace ehrsig {

// Runs fn(i) for i in [0, count) on up to `jobs` threads. Work is split into
// contiguous blocks so results are independent of scheduling; callers write to
// preassigned slots and reduce in index order afterwards.
inline void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(jobs));
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int t = 0; t < jobs; ++t) {
    const int lo = static_cast<int>(static_cast<long>(count) * t / jobs);
    const int hi = static_cast<int>(static_cast<long>(count) * (t + 1) / jobs);
    threads.emplace_back([&, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace ehrsig
