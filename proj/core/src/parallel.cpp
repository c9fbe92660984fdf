#include "gsurf/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace gsurf {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

int chunk_count_for(std::int64_t n) {
  // Fixed function of n only; worker count must never shift chunk edges.
  return static_cast<int>(std::min<std::int64_t>(n, 128));
}

void parallel_chunks(std::int64_t n, int threads,
                     const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  const int chunks = chunk_count_for(n);
  threads = std::min(resolve_threads(threads), chunks);

  auto run_chunk = [&](int c) {
    const std::int64_t b = n * c / chunks;
    const std::int64_t e = n * (c + 1) / chunks;
    if (b < e) fn(c, b, e);
  };

  if (threads <= 1) {
    for (int c = 0; c < chunks; ++c) run_chunk(c);
    return;
  }

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int c = next.fetch_add(1, std::memory_order_relaxed);
      if (c >= chunks) return;
      run_chunk(c);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (int t = 0; t < threads - 1; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

}  // namespace gsurf
