#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace incrementa {

/// Worker cap: INCREMENTA_THREADS when set, else the hardware concurrency.
inline int thread_count() {
  if (const char* env = std::getenv("INCREMENTA_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

/// Runs fn(i) for i in [0, count) across up to thread_count() workers.
/// Results must be written to index-addressed slots so the outcome is
/// independent of scheduling.
inline void parallel_for(int count, const std::function<void(int)>& fn) {
  const int workers = std::min(thread_count(), std::max(count, 1));
  if (workers <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace incrementa
