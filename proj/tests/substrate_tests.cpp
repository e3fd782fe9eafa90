#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <atomic>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "batcherkit/deferred.hpp"
#include "batcherkit/parallel.hpp"
#include "batcherkit/pool.hpp"

using namespace batcherkit;

TEST_CASE("pool executes every submitted task exactly once") {
  Pool pool(4);
  constexpr int kTasks = 10000;
  std::vector<std::atomic<int>> hits(kTasks);
  std::atomic<int> done{0};
  for (int i = 0; i < kTasks; ++i)
    pool.submit([&, i] {
      hits[i].fetch_add(1);
      done.fetch_add(1);
    });
  DeferredCell<std::monostate> all(pool);
  pool.submit([&] {
    while (done.load() < kTasks) std::this_thread::yield();
    all.resolve({});
  });
  all.wait();
  for (int i = 0; i < kTasks; ++i) REQUIRE(hits[i].load() == 1);
  REQUIRE(pool.counters().submitted_external == kTasks + 1);
}

TEST_CASE("pool accepts submissions from many threads") {
  Pool pool(3);
  std::atomic<int> ran{0};
  std::vector<std::thread> producers;
  for (int t = 0; t < 8; ++t)
    producers.emplace_back([&] {
      for (int i = 0; i < 500; ++i) pool.submit([&] { ran.fetch_add(1); });
    });
  for (auto& p : producers) p.join();
  DeferredCell<std::monostate> all(pool);
  pool.submit([&] {
    while (ran.load() < 8 * 500) std::this_thread::yield();
    all.resolve({});
  });
  all.wait();
  REQUIRE(ran.load() == 8 * 500);
}

TEST_CASE("pool rejects zero workers") {
  REQUIRE_THROWS_AS(Pool(0), std::invalid_argument);
}

TEST_CASE("deferred cell delivers the resolved value to a waiting task") {
  Pool pool(1);
  auto [cell, resolve] = new_deferred<int>(pool);
  DeferredCell<int> got(pool);
  pool.submit([&, cell = cell] { got.resolve(cell->wait()); });
  // Resolvers run as internal tasks, like the launch probes that resolve
  // clients in the real batching path; waiters only help internal work.
  pool.submit_internal([resolve = resolve] { resolve(3); });
  REQUIRE(got.wait() == 3);
}

TEST_CASE("deferred waiter resumes in its own task frame, never inline in the resolver") {
  // One worker makes the schedule deterministic: A waits, helps by running B;
  // B resolves and then keeps running; A resumes only after B's frame ends.
  Pool pool(1);
  std::mutex mu;
  std::vector<std::string> trace;
  std::atomic<std::uint64_t> waiter_id{0}, resolver_id{0};
  auto log = [&](const std::string& s) {
    std::lock_guard<std::mutex> lk(mu);
    trace.push_back(s);
  };

  auto [cell, resolve] = new_deferred<int>(pool);
  DeferredCell<std::monostate> done(pool);
  pool.submit([&, cell = cell] {
    waiter_id = Pool::current_task_id();
    int v = cell->wait();
    REQUIRE(Pool::current_task_id() == waiter_id.load());  // resumed in own frame
    log("A:resumed:" + std::to_string(v));
    done.resolve({});
  });
  pool.submit_internal([&, resolve = resolve] {
    resolver_id = Pool::current_task_id();
    resolve(3);
    log("B:after-resolve");  // still running: resolution did not run A inline
  });
  done.wait();

  REQUIRE(waiter_id.load() != 0);
  REQUIRE(resolver_id.load() != 0);
  REQUIRE(waiter_id.load() != resolver_id.load());
  REQUIRE(trace == std::vector<std::string>{"B:after-resolve", "A:resumed:3"});
}

TEST_CASE("deferred cell resolves exactly once") {
  Pool pool(1);
  auto [cell, resolve] = new_deferred<int>(pool);
  resolve(7);
  REQUIRE(cell->is_resolved());
  REQUIRE_THROWS_AS(resolve(8), std::logic_error);
  REQUIRE_FALSE(cell->try_resolve(9));
  REQUIRE(cell->wait() == 7);  // waiting after resolution observes the value
}

TEST_CASE("waiting before and after resolution both observe the value") {
  Pool pool(2);
  auto [cell, resolve] = new_deferred<int>(pool);
  std::atomic<int> sum{0};
  CompletionLatch all(pool, 8);
  for (int i = 0; i < 4; ++i)
    pool.submit([&, cell = cell] {
      sum.fetch_add(cell->wait());
      all.arrive();
    });
  resolve(5);
  for (int i = 0; i < 4; ++i)
    pool.submit([&, cell = cell] {
      sum.fetch_add(cell->wait());
      all.arrive();
    });
  all.wait();
  REQUIRE(sum.load() == 8 * 5);
}

TEST_CASE("parallel for visits every index exactly once") {
  Pool pool(4);
  SECTION("gauss sum over [0,10)") {
    std::atomic<long> total{0};
    run_parallel_for(pool, {0, 10}, [&](std::size_t i) { total.fetch_add(static_cast<long>(i)); });
    REQUIRE(total.load() == 45);
  }
  SECTION("large range, every index hit once") {
    constexpr std::size_t kN = 50000;
    std::vector<std::atomic<int>> hits(kN);
    run_parallel_for(pool, {0, kN}, [&](std::size_t i) { hits[i].fetch_add(1); });
    for (std::size_t i = 0; i < kN; ++i) REQUIRE(hits[i].load() == 1);
  }
  SECTION("empty range: no invocations, immediate return") {
    std::atomic<int> calls{0};
    run_parallel_for(pool, {5, 5}, [&](std::size_t) { calls.fetch_add(1); });
    REQUIRE(calls.load() == 0);
  }
  SECTION("malformed range throws") {
    REQUIRE_THROWS_AS(run_parallel_for(pool, {6, 5}, [](std::size_t) {}), std::logic_error);
  }
}

TEST_CASE("parallel for spawns ceil(n/chunk) tasks") {
  Pool pool(4);
  const auto before = pool.counters().submitted_internal;
  run_parallel_for(pool, {0, 10000}, [](std::size_t) {}, 64);
  const auto spawned = pool.counters().submitted_internal - before;
  REQUIRE(spawned == 157);  // ceil(10000 / 64)

  const auto before2 = pool.counters().submitted_internal;
  run_parallel_for(pool, {0, 10000}, [](std::size_t) {});  // default chunking
  const auto spawned2 = pool.counters().submitted_internal - before2;
  const std::size_t chunk = default_chunk_hint(10000, pool.worker_count());
  REQUIRE(spawned2 == (10000 + chunk - 1) / chunk);
}

TEST_CASE("parallel for propagates the first error after draining") {
  Pool pool(4);
  std::atomic<int> ran{0};
  bool caught = false;
  try {
    run_parallel_for(
        pool, {0, 10000},
        [&](std::size_t i) {
          ran.fetch_add(1);
          if (i == 4242) throw std::runtime_error("chunk failure");
        },
        64);
  } catch (const std::runtime_error& e) {
    caught = true;
    REQUIRE(std::string(e.what()) == "chunk failure");
  }
  REQUIRE(caught);
  REQUIRE(ran.load() <= 10000);
  // Pool is still healthy afterwards.
  std::atomic<long> total{0};
  run_parallel_for(pool, {0, 100}, [&](std::size_t i) { total.fetch_add(static_cast<long>(i)); });
  REQUIRE(total.load() == 4950);
}

TEST_CASE("parallel for nests") {
  Pool pool(4);
  std::atomic<long> total{0};
  run_parallel_for(pool, {0, 8}, [&](std::size_t) {
    run_parallel_for(pool, {0, 100}, [&](std::size_t j) { total.fetch_add(static_cast<long>(j)); }, 8);
  });
  REQUIRE(total.load() == 8 * 4950);
}

TEST_CASE("parallel sort matches a sequential stable sort") {
  Pool pool(4);
  std::mt19937_64 rng(42);
  for (std::size_t n : {0ul, 1ul, 2ul, 17ul, 4095ul, 4096ul, 4097ul, 100000ul}) {
    std::vector<long> v(n);
    for (auto& x : v) x = static_cast<long>(rng() % 1000);
    auto expected = v;
    std::stable_sort(expected.begin(), expected.end());
    parallel_sort(pool, std::span<long>(v));
    REQUIRE(v == expected);
  }
  SECTION("already sorted and reversed inputs") {
    std::vector<int> asc(30000);
    std::iota(asc.begin(), asc.end(), 0);
    auto desc = asc;
    std::reverse(desc.begin(), desc.end());
    parallel_sort(pool, std::span<int>(desc));
    REQUIRE(desc == asc);
    parallel_sort(pool, std::span<int>(asc));
    REQUIRE(std::is_sorted(asc.begin(), asc.end()));
  }
}

TEST_CASE("parallel sort is stable") {
  Pool pool(4);
  std::mt19937_64 rng(7);
  std::vector<std::pair<int, int>> v(60000);
  for (int i = 0; i < static_cast<int>(v.size()); ++i)
    v[i] = {static_cast<int>(rng() % 50), i};
  auto expected = v;
  std::stable_sort(expected.begin(), expected.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  parallel_sort(pool, std::span<std::pair<int, int>>(v),
                [](const auto& a, const auto& b) { return a.first < b.first; });
  REQUIRE(v == expected);  // equal keys keep submission order
}

TEST_CASE("partition by pivots") {
  auto key = [](const int& x) { return x; };
  SECTION("single pivot example") {
    const std::vector<int> pivots{5};
    const std::vector<int> items{1, 3, 7};
    auto ranges = partition_by_pivots<int, int>(pivots, items, key);
    REQUIRE(ranges == std::vector<Range>{{0, 2}, {2, 3}});
  }
  SECTION("empty items give all-empty ranges") {
    const std::vector<int> pivots{2, 5, 9};
    auto ranges = partition_by_pivots<int, int>(pivots, std::span<const int>{}, key);
    REQUIRE(ranges.size() == 4);
    for (auto r : ranges) REQUIRE(r.empty());
  }
  SECTION("pivot equal to an item lands the item on the right") {
    const std::vector<int> pivots{3};
    const std::vector<int> items{1, 3, 3, 4};
    auto ranges = partition_by_pivots<int, int>(pivots, items, key);
    REQUIRE(ranges == std::vector<Range>{{0, 1}, {1, 4}});
  }
  SECTION("sentinels cover extremes") {
    const std::vector<int> pivots{10};
    const std::vector<int> low{1, 2};
    auto r1 = partition_by_pivots<int, int>(pivots, low, key);
    REQUIRE(r1 == std::vector<Range>{{0, 2}, {2, 2}});
    const std::vector<int> high{11, 12};
    auto r2 = partition_by_pivots<int, int>(pivots, high, key);
    REQUIRE(r2 == std::vector<Range>{{0, 0}, {0, 2}});
  }
  SECTION("contract violations throw") {
    const std::vector<int> bad_pivots{5, 5};
    const std::vector<int> items{1, 2};
    REQUIRE_THROWS_AS((partition_by_pivots<int, int>(bad_pivots, items, key)), std::logic_error);
    const std::vector<int> pivots{5};
    const std::vector<int> unsorted{3, 1};
    REQUIRE_THROWS_AS((partition_by_pivots<int, int>(pivots, unsorted, key)), std::logic_error);
  }
  SECTION("randomized against a filter oracle") {
    std::mt19937_64 rng(11);
    for (int iter = 0; iter < 200; ++iter) {
      std::vector<int> items(rng() % 200);
      for (auto& x : items) x = static_cast<int>(rng() % 100);
      std::sort(items.begin(), items.end());
      std::vector<int> pivots;
      for (int p = 0; p < 100; p += 1 + static_cast<int>(rng() % 20)) pivots.push_back(p);
      auto ranges = partition_by_pivots<int, int>(pivots, items, key);
      REQUIRE(ranges.size() == pivots.size() + 1);
      std::size_t covered = 0;
      for (std::size_t i = 0; i < ranges.size(); ++i) {
        REQUIRE(ranges[i].begin == covered);  // contiguous, in order
        covered = ranges[i].end;
        for (std::size_t j = ranges[i].begin; j < ranges[i].end; ++j) {
          if (i > 0) REQUIRE(items[j] >= pivots[i - 1]);
          if (i < pivots.size()) REQUIRE(items[j] < pivots[i]);
        }
      }
      REQUIRE(covered == items.size());
    }
  }
}

TEST_CASE("help_until frees the worker for queued internal tasks") {
  // Single worker: the waiting task can only finish if its wait() executes
  // the queued internal tasks instead of spinning.
  Pool pool(1);
  std::atomic<int> stage{0};
  auto [cell, resolve] = new_deferred<int>(pool);
  DeferredCell<std::monostate> done(pool);
  pool.submit([&, cell = cell, resolve = resolve] {
    for (int i = 0; i < 10; ++i) pool.submit_internal([&] { stage.fetch_add(1); });
    pool.submit_internal([&, resolve] { resolve(1); });
    (void)cell->wait();  // only this frame can run the 11 internal tasks
    done.resolve({});
  });
  done.wait();
  REQUIRE(stage.load() == 10);
}

TEST_CASE("an internal-only wait skips queued client tasks") {
  // Parallel-for joins and executors wait with HelpScope::internal_only;
  // queued client tasks stay queued until the waiter unwinds.
  Pool pool(1);
  std::atomic<bool> external_ran{false};
  DeferredCell<std::monostate> gate(pool);
  DeferredCell<std::monostate> done(pool);
  pool.submit([&] {
    pool.submit_internal([&] {
      REQUIRE_FALSE(external_ran.load());
      gate.resolve({});
    });
    gate.wait(HelpScope::internal_only);
    done.resolve({});
  });
  CompletionLatch ext(pool, 1);
  pool.submit([&] {
    external_ran.store(true);
    ext.arrive();
  });
  done.wait();
  ext.wait();
  REQUIRE(external_ran.load());
}

TEST_CASE("a suspended client waiter does run queued client tasks") {
  // This is what lets more operations be pending than there are workers:
  // a blocked client lends its worker to the next client task.
  Pool pool(1);
  std::atomic<bool> helped{false};
  auto [cell, resolve] = new_deferred<int>(pool);
  DeferredCell<std::monostate> done(pool);
  pool.submit([&, cell = cell] {
    (void)cell->wait();  // resolver below only runs if this frame helps it
    done.resolve({});
  });
  pool.submit([&, resolve = resolve] {
    helped.store(true);
    resolve(1);
  });
  done.wait();
  REQUIRE(helped.load());
}
