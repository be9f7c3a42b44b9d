#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace exbias {

/// Fixed work decomposition: results depend on the block layout, never on
/// the thread count.
inline constexpr std::size_t kChainsPerBlock = 1024;

inline std::size_t block_count(std::size_t items, std::size_t per_block = kChainsPerBlock) {
  return (items + per_block - 1) / per_block;
}

/// Calls fn(block) for block in [0, n_blocks) on up to `threads` workers.
/// The first exception thrown by any block is rethrown on the caller.
template <class Fn>
void parallel_for_blocks(std::size_t n_blocks, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(1, threads), n_blocks);
  if (workers <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) fn(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t b = next++; b < n_blocks; b = next++) {
        try {
          fn(b);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n_blocks;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace exbias
