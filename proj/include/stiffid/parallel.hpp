#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace stiffid {

/// Static-chunk parallel loop. Each index is visited by exactly one worker;
/// the first exception thrown by any worker is rethrown on the caller.
class ParallelFor {
 public:
  explicit ParallelFor(int workers = 1) : workers_(std::max(1, workers)) {}

  int workers() const { return workers_; }

  template <class F>
  void operator()(std::size_t n, F&& body) const {
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers_), n);
    if (w <= 1) {
      for (std::size_t i = 0; i < n; ++i) body(i);
      return;
    }
    std::vector<std::exception_ptr> errors(w);
    std::vector<std::thread> pool;
    pool.reserve(w);
    const std::size_t chunk = (n + w - 1) / w;
    for (std::size_t t = 0; t < w; ++t) {
      pool.emplace_back([&, t] {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        try {
          for (std::size_t i = begin; i < end; ++i) body(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

 private:
  int workers_;
};

}  // namespace stiffid
