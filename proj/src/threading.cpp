#include "inode/threading.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace inode {

int thread_cap() {
  if (const char* env = std::getenv("INODE_LAB_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(int n, int max_workers, const std::function<void(int, int)>& fn) {
  if (n <= 0) return;
  int workers = max_workers <= 0 ? thread_cap() : max_workers;
  if (workers > thread_cap()) workers = thread_cap();
  if (workers > n) workers = n;
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(0, i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n) break;
        fn(w, i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace inode
