#pragma once

#include <atomic>
#include <chrono>
#include <concepts>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "deferred.hpp"
#include "pool.hpp"

namespace batcherkit {

// Per-operation completion status carried inside every batched result.
enum class op_status : std::uint8_t {
  ok,
  unsupported,   // op kind the structure does not batch (e.g. deletes)
  out_of_range,  // key outside the structure's universe
  failed,        // the whole batch aborted before this op could run
};

// A reified client request: the operation plus the cell that resolves the
// issuing client. Both the waiting client and the batch executor hold the
// cell, so error cleanup can complete stragglers safely.
template <class O, class R>
struct BatchedOp {
  O op;
  Deferred<R> cell;

  void complete(R r) const { cell->resolve(std::move(r)); }
  bool try_complete(R r) const { return cell->try_resolve(std::move(r)); }
};

// Multi-producer container holding requests between launches. A Treiber
// stack is enough: push must never lose elements, pop_all drains atomically,
// and batch order is explicitly unspecified.
template <class T>
class RequestContainer {
 public:
  RequestContainer() = default;
  RequestContainer(const RequestContainer&) = delete;
  RequestContainer& operator=(const RequestContainer&) = delete;

  ~RequestContainer() {
    Node* n = head_.exchange(nullptr, std::memory_order_acquire);
    while (n) {
      Node* dead = n;
      n = n->next;
      delete dead;
    }
  }

  // push, empty and pop_all are seq_cst on purpose: the launch protocol's
  // liveness proof needs a total order across the container head, the
  // executor flag and the retry flag (see BatchedStructure).
  void push(T value) {
    Node* n = new Node{std::move(value), head_.load(std::memory_order_relaxed)};
    while (!head_.compare_exchange_weak(n->next, n, std::memory_order_seq_cst,
                                        std::memory_order_relaxed)) {
    }
    size_.fetch_add(1, std::memory_order_relaxed);
  }

  bool empty() const noexcept { return head_.load(std::memory_order_seq_cst) == nullptr; }

  // Racy by nature; only used for the min-batch heuristic.
  std::size_t approx_size() const noexcept { return size_.load(std::memory_order_relaxed); }

  // Atomically takes every element currently in the container.
  std::vector<T> pop_all() {
    Node* n = head_.exchange(nullptr, std::memory_order_seq_cst);
    std::vector<T> out;
    while (n) {
      out.push_back(std::move(n->value));
      Node* dead = n;
      n = n->next;
      delete dead;
    }
    size_.fetch_sub(out.size(), std::memory_order_relaxed);
    return out;
  }

 private:
  struct Node {
    T value;
    Node* next;
  };
  std::atomic<Node*> head_{nullptr};
  std::atomic<std::size_t> size_{0};
};

// An explicitly batched structure: its only mutation entry point takes a
// whole array of reified operations and must complete each exactly once.
template <class B>
concept Batched = requires(B b, Pool& pool,
                           std::span<BatchedOp<typename B::Op, typename B::Result>> ops) {
  typename B::Op;
  typename B::Result;
  b.run_batch(pool, ops);
  { B::failed_result() } -> std::convertible_to<typename B::Result>;
};

struct LaunchConfig {
  std::size_t min_batch = 1;
  std::chrono::steady_clock::duration wait_threshold = std::chrono::milliseconds(1);
};

// Wraps an explicitly batched structure into a direct-style concurrent one.
// Clients push into the request container and race to promote themselves to
// batch executor via the is_running flag; everyone else suspends on their
// cell. At most one executor runs at a time.
//
// All mutable state lives behind a shared_ptr: launch probes scheduled on
// the pool capture the state, so destroying the wrapper while a trailing
// re-check is still queued is safe.
template <Batched B>
class BatchedStructure {
 public:
  using Op = typename B::Op;
  using Result = typename B::Result;
  using WrappedOp = BatchedOp<Op, Result>;
  using Clock = std::chrono::steady_clock;

  BatchedStructure(B impl, Pool& pool, LaunchConfig cfg = {})
      : state_(std::make_shared<State>(std::move(impl), pool, cfg)) {
    if (cfg.min_batch < 1)
      throw std::invalid_argument("BatchedStructure: min_batch must be >= 1");
    if (cfg.wait_threshold <= Clock::duration::zero())
      throw std::invalid_argument("BatchedStructure: wait_threshold must be positive");
  }

  BatchedStructure(const BatchedStructure&) = delete;
  BatchedStructure& operator=(const BatchedStructure&) = delete;
  BatchedStructure(BatchedStructure&&) = default;
  BatchedStructure& operator=(BatchedStructure&&) = default;

  // Direct-style blocking entry point. The calling task suspends (without
  // occupying its worker) until some batch executor resolves its cell. A
  // failed batch surfaces as a result with op_status::failed.
  Result apply(Op op) {
    auto cell = std::make_shared<DeferredCell<Result>>(state_->pool);
    state_->container.push(WrappedOp{std::move(op), cell});
    try {
      State::try_launch(state_);
    } catch (...) {
      // The batch error already completed every drained op (including ours)
      // with failed_result; surface it through the result, not by throwing.
    }
    return cell->wait();
  }

  // One launch attempt; callable from any task at any time. Either finds the
  // container empty, defers below min_batch, loses the executor race, or
  // drains and runs the batch itself and then schedules one trailing
  // re-check for requests that arrived during the run.
  void try_launch() { State::try_launch(state_); }

  // Exclusive access to the wrapped structure (preload, validation). Only
  // safe while no batch can be running.
  B& impl() noexcept { return state_->impl; }
  const B& impl() const noexcept { return state_->impl; }
  Pool& pool() noexcept { return state_->pool; }

  // Blocks until no request is pending and no batch is running. Only
  // meaningful once clients have stopped submitting; after it returns,
  // impl() is safe to inspect.
  void quiesce() {
    State* s = state_.get();
    s->pool.help_until([s] {
      return s->container.empty() && !s->is_running.load(std::memory_order_seq_cst);
    });
  }

 private:
  struct State {
    State(B impl_in, Pool& pool_in, LaunchConfig cfg_in)
        : impl(std::move(impl_in)), pool(pool_in), cfg(cfg_in) {
      last_run.store(Clock::now().time_since_epoch().count(), std::memory_order_relaxed);
    }

    // Liveness invariant: while any request sits in the container, either a
    // batch is running (its finish always schedules a trailing probe) or a
    // retry probe is scheduled. Every exit below preserves it; the seq_cst
    // total order over container pushes and the two flags guarantees that
    // whichever probe ran last saw the straggler's push.
    static void try_launch(const std::shared_ptr<State>& s) {
      if (s->container.empty()) return;
      const auto now = Clock::now();
      if (s->container.approx_size() < s->cfg.min_batch &&
          now.time_since_epoch().count() - s->last_run.load(std::memory_order_relaxed) <
              s->cfg.wait_threshold.count()) {
        schedule_retry(s);
        return;
      }
      bool expected = false;
      if (!s->is_running.compare_exchange_strong(expected, true, std::memory_order_seq_cst))
        return;  // the winner's trailing probe re-checks after it finishes
      auto batch = s->container.pop_all();
      s->last_run.store(now.time_since_epoch().count(), std::memory_order_relaxed);
      if (!batch.empty()) {
        // While this frame runs the batch, waits below it must not pull
        // client tasks: a client blocking on this structure could never
        // unwind while we hold is_running.
        ExecutorFrame in_batch;
        try {
          s->impl.run_batch(s->pool, std::span<WrappedOp>(batch));
        } catch (...) {
          for (auto& bop : batch) bop.try_complete(B::failed_result());
          finish_run(s);
          throw;
        }
      }
      finish_run(s);
    }

    static void finish_run(const std::shared_ptr<State>& s) {
      s->is_running.store(false, std::memory_order_seq_cst);
      s->pool.submit_internal([s] {
        try {
          try_launch(s);
        } catch (...) {
          // Clients of the failed batch were already completed with
          // failed_result; nothing useful can rethrow from a pool task.
        }
      });
    }

    // At most one outstanding retry task per structure. The probe clears the
    // flag with an RMW *before* re-checking the container: any pusher whose
    // exchange saw `true` ordered its push before this clear, so the re-check
    // cannot miss it; pushers who see `false` schedule the next probe.
    static void schedule_retry(const std::shared_ptr<State>& s) {
      if (s->retry_scheduled.exchange(true, std::memory_order_seq_cst)) return;
      s->pool.submit_internal([s] {
        std::this_thread::yield();  // probe chains re-check until launch; don't spin hot
        s->retry_scheduled.exchange(false, std::memory_order_seq_cst);
        try {
          try_launch(s);
        } catch (...) {
        }
      });
    }

    B impl;
    Pool& pool;
    LaunchConfig cfg;
    RequestContainer<WrappedOp> container;
    std::atomic<bool> is_running{false};
    std::atomic<bool> retry_scheduled{false};
    std::atomic<Clock::rep> last_run{0};
  };

  std::shared_ptr<State> state_;
};

// Convenience factory mirroring the library's wrap(impl, pool, cfg) idiom.
template <Batched B>
BatchedStructure<B> wrap(B impl, Pool& pool, LaunchConfig cfg = {}) {
  return BatchedStructure<B>(std::move(impl), pool, cfg);
}

}  // namespace batcherkit
