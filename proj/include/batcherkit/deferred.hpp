#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>
#include <variant>

#include "pool.hpp"

namespace batcherkit {

// One-shot resolvable cell. wait() suspends the calling *task*, not its
// worker: on a pool worker it keeps executing queued tasks until the value
// arrives, so a full complement of logically blocked clients can never
// starve the batch executor. Waiters always resume in their own task frame;
// resolve() never runs a continuation inline at the resolution site.
template <class V>
class DeferredCell {
 public:
  explicit DeferredCell(Pool& pool) : pool_(&pool) {}

  DeferredCell(const DeferredCell&) = delete;
  DeferredCell& operator=(const DeferredCell&) = delete;

  bool is_resolved() const noexcept {
    return state_.load(std::memory_order_acquire) == kResolved;
  }

  // Second resolution is a contract violation.
  void resolve(V value) {
    if (!try_resolve(std::move(value)))
      throw std::logic_error("DeferredCell: resolved twice");
  }

  // Returns false and discards `value` if the cell is already resolved.
  bool try_resolve(V value) {
    State expected = kEmpty;
    if (!state_.compare_exchange_strong(expected, kClaimed, std::memory_order_acq_rel))
      return false;
    Pool* pool = pool_;  // the publishing store may free *this from a waiter's stack
    value_.emplace(std::move(value));
    state_.store(kResolved, std::memory_order_release);
    pool->notify();
    return true;
  }

  const V& wait(HelpScope scope = HelpScope::all) {
    pool_->help_until([this] { return is_resolved(); }, scope);
    return *value_;
  }

 private:
  enum State : int { kEmpty, kClaimed, kResolved };

  Pool* pool_;
  std::atomic<State> state_{kEmpty};
  std::optional<V> value_;
};

template <class V>
using Deferred = std::shared_ptr<DeferredCell<V>>;

// Counts completions; wait() suspends until `expected` arrivals. Handy for
// joining a burst of submitted tasks without occupying a worker.
class CompletionLatch {
 public:
  CompletionLatch(Pool& pool, std::size_t expected) : cell_(pool), expected_(expected) {
    if (expected_ == 0) cell_.resolve({});
  }

  // Safe to destroy the latch as soon as wait() returns: arrivers touch no
  // member after their fetch_add (expected is read first into a local).
  void arrive() {
    const std::size_t expected = expected_;
    if (count_.fetch_add(1, std::memory_order_acq_rel) + 1 == expected) cell_.resolve({});
  }

  std::size_t count() const { return count_.load(std::memory_order_acquire); }

  void wait() { cell_.wait(); }

 private:
  DeferredCell<std::monostate> cell_;
  std::atomic<std::size_t> count_{0};
  std::size_t expected_;
};

// Unresolved cell plus the function that resolves it.
template <class V>
std::pair<Deferred<V>, std::function<void(V)>> new_deferred(Pool& pool) {
  auto cell = std::make_shared<DeferredCell<V>>(pool);
  std::function<void(V)> resolver = [cell](V v) { cell->resolve(std::move(v)); };
  return {std::move(cell), std::move(resolver)};
}

}  // namespace batcherkit
