#include "scn/common.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace scn {

int worker_count() {
  static const int cached = [] {
    const char* env = std::getenv("SCN_THREADS");
    if (!env || !*env) return 1;
    const long v = std::strtol(env, nullptr, 10);
    return static_cast<int>(std::clamp(v, 1L, 256L));
  }();
  return cached;
}

namespace detail {

void run_chunked(std::size_t n, int workers,
                 const std::function<void(std::size_t, std::size_t, int)>& fn) {
  const std::size_t w = static_cast<std::size_t>(workers);
  const std::size_t chunk = (n + w - 1) / w;
  std::vector<std::exception_ptr> errors(w);
  auto guarded = [&](std::size_t begin, std::size_t end, int worker) {
    try {
      fn(begin, end, worker);
    } catch (...) {
      errors[static_cast<std::size_t>(worker)] = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(w - 1);
  for (std::size_t i = 1; i < w; ++i) {
    const std::size_t begin = std::min(n, i * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back(guarded, begin, end, static_cast<int>(i));
  }
  guarded(0, std::min(n, chunk), 0);
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

} // namespace detail
} // namespace scn
