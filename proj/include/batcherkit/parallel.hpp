#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "deferred.hpp"
#include "pool.hpp"

namespace batcherkit {

// Half-open index range [begin, end).
struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  bool empty() const noexcept { return begin == end; }
  friend bool operator==(const Range&, const Range&) = default;
};

inline std::size_t default_chunk_hint(std::size_t n, std::size_t workers) {
  return std::max<std::size_t>(1, n / (4 * workers));
}

// Runs body(i) for every i in range across ceil(n/chunk_hint) pool tasks and
// returns once all of them completed. The first error wins: chunks that have
// not started yet are cancelled (bodies skipped), the rest finish, and the
// error is rethrown here after the join. `body` is copied into each chunk
// task and must be const-callable.
template <class Body>
void run_parallel_for(Pool& pool, Range range, Body body, std::size_t chunk_hint) {
  if (range.begin > range.end) throw std::logic_error("run_parallel_for: malformed range");
  const std::size_t n = range.size();
  if (n == 0) return;
  const std::size_t chunk = std::max<std::size_t>(1, chunk_hint);
  const std::size_t tasks = (n + chunk - 1) / chunk;

  struct Ctl {
    std::atomic<std::size_t> remaining;
    std::atomic<bool> failed{false};
    std::exception_ptr error;
  };
  auto ctl = std::make_shared<Ctl>();
  ctl->remaining.store(tasks, std::memory_order_relaxed);

  DeferredCell<std::monostate> done(pool);
  for (std::size_t t = 0; t < tasks; ++t) {
    const std::size_t lo = range.begin + t * chunk;
    const std::size_t hi = std::min(range.end, lo + chunk);
    pool.submit_internal([ctl, &done, body, lo, hi] {
      if (!ctl->failed.load(std::memory_order_relaxed)) {
        try {
          for (std::size_t i = lo; i < hi; ++i) body(i);
        } catch (...) {
          bool expected = false;
          if (ctl->failed.compare_exchange_strong(expected, true, std::memory_order_acq_rel))
            ctl->error = std::current_exception();
        }
      }
      if (ctl->remaining.fetch_sub(1, std::memory_order_acq_rel) == 1)
        done.resolve({});
    });
  }
  // Completion depends only on the chunk tasks, so never pull client tasks
  // onto this stack while joining.
  done.wait(HelpScope::internal_only);
  if (ctl->failed.load(std::memory_order_acquire)) std::rethrow_exception(ctl->error);
}

template <class Body>
void run_parallel_for(Pool& pool, Range range, Body body) {
  run_parallel_for(pool, range, std::move(body),
                   default_chunk_hint(range.size(), pool.worker_count()));
}

// Stable parallel merge sort: stable-sorted leaf blocks, then pairwise
// in-place merge rounds. Stability makes duplicate-key "last write wins"
// independent of the worker count.
template <class T, class Cmp = std::less<>>
void parallel_sort(Pool& pool, std::span<T> items, Cmp cmp = {}) {
  constexpr std::size_t kBlock = 4096;
  const std::size_t n = items.size();
  if (n <= kBlock) {
    std::stable_sort(items.begin(), items.end(), cmp);
    return;
  }
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  T* const data = items.data();
  run_parallel_for(
      pool, {0, blocks},
      [data, n, cmp](std::size_t b) {
        const std::size_t lo = b * kBlock;
        const std::size_t hi = std::min(n, lo + kBlock);
        std::stable_sort(data + lo, data + hi, cmp);
      },
      1);
  for (std::size_t width = kBlock; width < n; width *= 2) {
    const std::size_t pairs = (n + 2 * width - 1) / (2 * width);
    run_parallel_for(
        pool, {0, pairs},
        [data, n, width, cmp](std::size_t p) {
          const std::size_t lo = p * 2 * width;
          const std::size_t mid = std::min(n, lo + width);
          const std::size_t hi = std::min(n, lo + 2 * width);
          if (mid < hi) std::inplace_merge(data + lo, data + mid, data + hi, cmp);
        },
        1);
  }
}

// Splits sorted `items` at sorted, distinct `pivots` into |pivots|+1
// contiguous ranges: result[i] holds exactly the items whose key satisfies
// pivots[i-1] <= key < pivots[i], with -inf/+inf sentinels at the ends.
// `less` must be the order both inputs were sorted by.
template <class Pivot, class T, class KeyOf, class Less = std::less<>>
std::vector<Range> partition_by_pivots(std::span<const Pivot> pivots, std::span<const T> items,
                                       KeyOf key_of, Less less = {}) {
  for (std::size_t i = 1; i < pivots.size(); ++i)
    if (!less(pivots[i - 1], pivots[i]))
      throw std::logic_error("partition_by_pivots: pivots not strictly increasing");
  for (std::size_t i = 1; i < items.size(); ++i)
    if (less(key_of(items[i]), key_of(items[i - 1])))
      throw std::logic_error("partition_by_pivots: items not sorted by key");

  std::vector<Range> out;
  out.reserve(pivots.size() + 1);
  std::size_t lo = 0;
  for (const Pivot& p : pivots) {
    auto it = std::lower_bound(items.begin() + lo, items.end(), p,
                               [&](const T& item, const Pivot& piv) { return less(key_of(item), piv); });
    const auto hi = static_cast<std::size_t>(it - items.begin());
    out.push_back({lo, hi});
    lo = hi;
  }
  out.push_back({lo, items.size()});
  return out;
}

}  // namespace batcherkit
