#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace hgff {

// Default worker count: the HADAMARD_GFF_THREADS environment variable if set,
// otherwise the hardware concurrency.
inline int default_thread_count() {
  if (const char* env = std::getenv("HADAMARD_GFF_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(begin, end) over a fixed partition of [begin, end) into contiguous
// chunks, one per worker.  The partition depends only on the range and the
// chunk count, never on scheduling, so results written to disjoint slots are
// identical for every thread count.
inline void parallel_for_chunks(int begin, int end, int threads,
                                const std::function<void(int, int)>& fn) {
  const int count = end - begin;
  if (count <= 0) return;
  threads = std::clamp(threads, 1, count);
  if (threads == 1) {
    fn(begin, end);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(threads));
  const int base = count / threads, extra = count % threads;
  int lo = begin;
  for (int w = 0; w < threads; ++w) {
    const int len = base + (w < extra ? 1 : 0);
    const int hi = lo + len;
    pool.emplace_back([&fn, &errors, w, lo, hi]() {
      try {
        fn(lo, hi);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
    lo = hi;
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace hgff
