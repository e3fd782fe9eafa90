#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

namespace batcherkit {

class Pool;

namespace detail {
inline thread_local const Pool* t_worker_pool = nullptr;
inline thread_local std::uint64_t t_task_id = 0;
inline thread_local int t_executor_depth = 0;
inline std::atomic<std::uint64_t> g_next_task_id{0};
}  // namespace detail

// What a suspended task may help with while it waits.
enum class HelpScope {
  all,            // internal tasks first, then queued client tasks
  internal_only,  // never pull a client task onto this stack
};

// RAII marker for a batch-executor frame. While any frame on the current
// thread is an executor, every wait on that thread is forced to
// internal-only helping: pulling a client task could block it on the very
// structure this executor holds the running flag for, pinning both forever.
class ExecutorFrame {
 public:
  ExecutorFrame() { ++detail::t_executor_depth; }
  ~ExecutorFrame() { --detail::t_executor_depth; }
  ExecutorFrame(const ExecutorFrame&) = delete;
  ExecutorFrame& operator=(const ExecutorFrame&) = delete;
};

// Fixed-size task pool with two FIFO queues. "Internal" tasks (batch
// executors, retry probes, parallel-for chunks) always run before "external"
// client tasks, both in the worker loop and while a task helps inside
// help_until(). A suspended *client* may also pull further client tasks onto
// its stack: that is what lets far more operations be pending than there are
// workers, so large batches can form. A suspended *executor* must not (see
// ExecutorFrame), and waits whose completion depends only on internal chains
// (parallel-for joins) opt out via HelpScope::internal_only.
class Pool {
 public:
  using Task = std::function<void()>;

  explicit Pool(std::size_t worker_count) {
    if (worker_count == 0) throw std::invalid_argument("Pool: worker_count must be >= 1");
    workers_.reserve(worker_count);
    for (std::size_t i = 0; i < worker_count; ++i)
      workers_.emplace_back([this] { worker_loop(); });
  }

  Pool(const Pool&) = delete;
  Pool& operator=(const Pool&) = delete;

  // Drains both queues, then joins. Tasks still blocked on unresolved cells
  // at destruction time are a caller bug.
  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

  std::size_t worker_count() const noexcept { return workers_.size(); }

  void submit(Task t) { push(external_, std::move(t), n_external_); }
  void submit_internal(Task t) { push(internal_, std::move(t), n_internal_); }

  // Runs queued tasks on the calling worker until done() holds, blocking on
  // the pool's condition variable when nothing is runnable. A non-worker
  // thread just blocks. done() must eventually be made true by a task or by
  // another thread, and has to be callable under the pool mutex (reading an
  // atomic qualifies).
  template <class Done>
  void help_until(Done&& done, HelpScope scope = HelpScope::all) {
    if (detail::t_worker_pool == this) {
      const bool internal_only =
          scope == HelpScope::internal_only || detail::t_executor_depth > 0;
      for (;;) {
        if (done()) return;
        if (run_one(internal_only)) continue;
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] {
          return done() || !internal_.empty() || (!internal_only && !external_.empty());
        });
      }
    }
    std::unique_lock<std::mutex> lk(mu_);
    cv_.wait(lk, [&] { return done(); });
  }

  // Wakes every blocked helper/waiter. Deferred cells call this after
  // publishing their value.
  void notify() {
    { std::lock_guard<std::mutex> lk(mu_); }
    cv_.notify_all();
  }

  static bool on_worker(const Pool& p) noexcept { return detail::t_worker_pool == &p; }

  // Id of the task the calling thread is currently executing, 0 outside any
  // task. Ids are unique per execution; nested helping restores the outer id.
  static std::uint64_t current_task_id() noexcept { return detail::t_task_id; }

  struct Counters {
    std::uint64_t submitted_internal = 0;
    std::uint64_t submitted_external = 0;
    std::uint64_t executed = 0;
  };
  Counters counters() const noexcept {
    return {n_internal_.load(std::memory_order_relaxed),
            n_external_.load(std::memory_order_relaxed),
            n_executed_.load(std::memory_order_relaxed)};
  }

 private:
  void push(std::deque<Task>& q, Task t, std::atomic<std::uint64_t>& counter) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      if (stopping_) throw std::logic_error("Pool: submit after shutdown");
      q.push_back(std::move(t));
    }
    counter.fetch_add(1, std::memory_order_relaxed);
    cv_.notify_all();
  }

  // Pops and runs one task, internal queue first. False if nothing eligible.
  bool run_one(bool internal_only = false) {
    Task t;
    {
      std::lock_guard<std::mutex> lk(mu_);
      if (!internal_.empty()) {
        t = std::move(internal_.front());
        internal_.pop_front();
      } else if (!internal_only && !external_.empty()) {
        t = std::move(external_.front());
        external_.pop_front();
      } else {
        return false;
      }
    }
    const std::uint64_t outer = detail::t_task_id;
    detail::t_task_id = detail::g_next_task_id.fetch_add(1, std::memory_order_relaxed) + 1;
    t();
    detail::t_task_id = outer;
    n_executed_.fetch_add(1, std::memory_order_relaxed);
    return true;
  }

  void worker_loop() {
    detail::t_worker_pool = this;
    for (;;) {
      if (run_one()) continue;
      std::unique_lock<std::mutex> lk(mu_);
      if (stopping_ && internal_.empty() && external_.empty()) return;
      cv_.wait(lk, [&] { return stopping_ || !internal_.empty() || !external_.empty(); });
      if (stopping_ && internal_.empty() && external_.empty()) return;
    }
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Task> internal_;
  std::deque<Task> external_;
  std::vector<std::thread> workers_;
  bool stopping_ = false;
  std::atomic<std::uint64_t> n_internal_{0};
  std::atomic<std::uint64_t> n_external_{0};
  std::atomic<std::uint64_t> n_executed_{0};
};

}  // namespace batcherkit
