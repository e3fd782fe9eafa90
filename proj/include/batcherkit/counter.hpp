#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <variant>

#include "batching.hpp"
#include "parallel.hpp"
#include "pool.hpp"

namespace batcherkit {

// Explicitly batched shared counter. One batch is one linearisation window:
// every Get observes the pre-batch value, and the batch's increments land as
// a single parallel-reduced delta afterwards.
class BatchedCounter {
 public:
  struct Incr {};
  struct Get {};
  using Op = std::variant<Incr, Get>;

  struct Result {
    op_status status = op_status::ok;
    std::int64_t value = 0;
    friend bool operator==(const Result&, const Result&) = default;
  };
  static Result failed_result() { return {op_status::failed, 0}; }

  explicit BatchedCounter(std::int64_t initial = 0) : value_(initial) {}

  std::int64_t value() const noexcept { return value_; }

  // Clients are completed only after value_ holds the post-batch state, so
  // an observer that has joined every client reads a settled counter.
  void run_batch(Pool& pool, std::span<BatchedOp<Op, Result>> ops) {
    const std::int64_t before = value_;
    std::atomic<std::int64_t> delta{0};
    run_parallel_for(pool, {0, ops.size()}, [ops, &delta](std::size_t i) {
      if (std::holds_alternative<Incr>(ops[i].op)) delta.fetch_add(1, std::memory_order_relaxed);
    });
    value_ = before + delta.load(std::memory_order_relaxed);
    run_parallel_for(pool, {0, ops.size()}, [ops, before](std::size_t i) {
      const auto& bop = ops[i];
      if (std::holds_alternative<Incr>(bop.op))
        bop.complete({op_status::ok, 0});
      else
        bop.complete({op_status::ok, before});
    });
  }

 private:
  std::int64_t value_;
};

}  // namespace batcherkit
