// B-tree with capacity-driven preemptive splitting and the three-stage
// skip-list batch insert, checked against brute-force oracles.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "batcherkit/batching.hpp"
#include "batcherkit/btree.hpp"
#include "batcherkit/skiplist.hpp"

using namespace batcherkit;

static_assert(Batched<BTree<int>>);
static_assert(Batched<SkipList<int>>);

namespace {

using Tree = BTree<int>;
using Shape = Tree::ShapeNode;
using Op = SetOp<int>;
using Res = SetResult<int>;

BatchedOp<Op, Res> make_op(Pool& pool, Op op) {
  return {std::move(op), std::make_shared<DeferredCell<Res>>(pool)};
}

template <class S>
void require_valid(const S& s) {
  std::string diag;
  const bool ok = s.validate(&diag);
  INFO(diag);
  REQUIRE(ok);
}

// Independent evaluation of the capacity recurrence over a shape snapshot:
// free slots for a leaf, (1 + min child capacity) * free slots otherwise.
std::size_t cap_oracle(int t, const Shape& s) {
  const std::size_t fr = 2 * static_cast<std::size_t>(t) - 1 - s.nkeys;
  if (s.children.empty()) return fr;
  std::size_t m = std::numeric_limits<std::size_t>::max();
  for (const Shape& c : s.children) m = std::min(m, cap_oracle(t, c));
  return (m + 1) * fr;
}

// --- Brute-force split simulator over key-count shapes. Key values are
// irrelevant to splitting, so a shape plus a target leaf fully determines
// one preemptive single-pass insert.

bool shape_full(const Shape& s, int t) {
  return s.nkeys == 2 * static_cast<std::size_t>(t) - 1;
}

void shape_split_child(Shape& p, std::size_t i, int t) {
  Shape& c = p.children[i];
  Shape right;
  right.nkeys = static_cast<std::size_t>(t) - 1;
  if (!c.children.empty()) {
    right.children.assign(c.children.begin() + t, c.children.end());
    c.children.resize(static_cast<std::size_t>(t));
  }
  c.nkeys = static_cast<std::size_t>(t) - 1;
  p.nkeys += 1;
  p.children.insert(p.children.begin() + static_cast<std::ptrdiff_t>(i) + 1, std::move(right));
}

std::size_t leaf_count(const Shape& s) {
  if (s.children.empty()) return 1;
  std::size_t n = 0;
  for (const Shape& c : s.children) n += leaf_count(c);
  return n;
}

// One adversarial insert aimed at leaf number leaf_idx, with preemptive
// splitting of full children along the descent. Returns true when the insert
// cannot complete without splitting the root: either the root is a full leaf,
// or the descent needs to split a full child of the already-full root.
bool shape_insert(Shape& root, int t, std::size_t leaf_idx) {
  Shape* n = &root;
  while (!n->children.empty()) {
    std::size_t acc = 0, ci = 0;
    for (; ci + 1 < n->children.size(); ++ci) {
      const std::size_t lc = leaf_count(n->children[ci]);
      if (leaf_idx < acc + lc) break;
      acc += lc;
    }
    if (shape_full(n->children[ci], t)) {
      if (shape_full(*n, t)) {
        // Below the root every node is entered non-full, and a split inside
        // one insert re-routes into a fresh half; only the root can be full
        // here.
        if (n != &root) throw std::logic_error("full interior node off the root");
        return true;
      }
      shape_split_child(*n, ci, t);
      continue;  // leaf numbering is preserved across the split
    }
    leaf_idx -= acc;
    n = &n->children[ci];
  }
  if (shape_full(*n, t)) {
    if (n != &root) throw std::logic_error("descended into a full leaf");
    return true;
  }
  n->nkeys += 1;
  return false;
}

std::string canon(const Shape& s) {
  std::string out = "(" + std::to_string(s.nkeys);
  std::vector<std::string> kids;
  kids.reserve(s.children.size());
  for (const Shape& c : s.children) kids.push_back(canon(c));
  std::sort(kids.begin(), kids.end());
  for (const std::string& k : kids) out += k;
  out += ")";
  return out;
}

// Exhaustive search over insertion placements: can any sequence of at most
// `budget` inserts split the root?
bool can_split_root_within(const Shape& start, int t, std::size_t budget) {
  std::unordered_set<std::string> seen;
  std::vector<Shape> frontier{start};
  seen.insert(canon(start));
  for (std::size_t d = 0; d < budget; ++d) {
    std::vector<Shape> next;
    for (const Shape& s : frontier) {
      const std::size_t leaves = leaf_count(s);
      for (std::size_t li = 0; li < leaves; ++li) {
        Shape copy = s;
        if (shape_insert(copy, t, li)) return true;
        std::string key = canon(copy);
        if (seen.insert(std::move(key)).second) next.push_back(std::move(copy));
      }
    }
    REQUIRE(seen.size() < 400000);  // search stayed tractable
    frontier = std::move(next);
    if (frontier.empty()) break;
  }
  return false;
}

Tree random_tree(int t, std::mt19937& rng, int n, int key_lo = 0, int key_hi = 1000000000) {
  Tree tree(t, ExecutorConfig{24, 4});
  std::uniform_int_distribution<int> kd(key_lo, key_hi);
  for (int i = 0; i < n; ++i) tree.insert(kd(rng));
  return tree;
}

}  // namespace

TEST_CASE("branching factor below two is rejected") {
  REQUIRE_THROWS_AS(Tree(1), std::invalid_argument);
  REQUIRE_THROWS_AS(Tree(0), std::invalid_argument);
}

TEST_CASE("capacity matches the recurrence on frozen shapes") {
  // Full leaf: no free slot.
  Tree full_leaf(2);
  for (int k : {10, 20, 30}) full_leaf.insert(k);
  REQUIRE(full_leaf.capacity() == 0);

  // t=2 leaf with one key: two free slots.
  Tree one_key(2);
  one_key.insert(10);
  REQUIRE(one_key.capacity() == 2);

  // t=2 interior node with one key over two one-key leaves: (1+2)*2.
  Shape interior;
  interior.nkeys = 1;
  interior.children.resize(2);
  interior.children[0].nkeys = 1;
  interior.children[1].nkeys = 1;
  REQUIRE(cap_oracle(2, interior) == 6);

  // The bound is tight on this shape: one extra insert can split the root.
  REQUIRE_FALSE(can_split_root_within(interior, 2, 6));
  REQUIRE(can_split_root_within(interior, 2, 7));
}

TEST_CASE("cached capacity equals the oracle on random trees") {
  std::mt19937 rng(0xb7ee);
  for (int t : {2, 3, 4}) {
    for (int round = 0; round < 30; ++round) {
      Tree tree = random_tree(t, rng, 1 + static_cast<int>(rng() % 400));
      REQUIRE(tree.capacity() == cap_oracle(t, tree.shape()));
      require_valid(tree);
    }
  }
}

TEST_CASE("sequential insert and contains agree with a sorted set") {
  std::mt19937 rng(0x5e4);
  for (int t : {2, 3, 8}) {
    Tree tree(t);
    std::set<int> model;
    std::uniform_int_distribution<int> kd(0, 4000);
    for (int i = 0; i < 6000; ++i) {
      const int k = kd(rng);
      tree.insert(k);
      model.insert(k);
      if (i % 503 == 0) require_valid(tree);
    }
    require_valid(tree);
    REQUIRE(tree.items() == std::vector<int>(model.begin(), model.end()));
    for (int k = 0; k <= 4000; ++k) REQUIRE(tree.contains(k) == (model.count(k) > 0));
  }
}

TEST_CASE("capacity is a conservative bound under adversarial placements") {
  std::mt19937 rng(0xcab);
  int tested = 0;
  for (int attempt = 0; attempt < 400 && tested < 25; ++attempt) {
    const int t = 2 + static_cast<int>(rng() % 2);
    Tree tree = random_tree(t, rng, 1 + static_cast<int>(rng() % 64));
    const std::size_t cap = tree.capacity();
    if (cap > 12) continue;  // keeps the exhaustive search tractable
    INFO("t=" << t << " size=" << tree.size() << " cap=" << cap);
    REQUIRE_FALSE(can_split_root_within(tree.shape(), t, cap));
    ++tested;
  }
  REQUIRE(tested == 25);
}

TEST_CASE("a batch within the root's capacity never splits the root") {
  Pool pool(4);
  std::mt19937 rng(0x4007);
  for (int t : {2, 3, 4}) {
    for (int round = 0; round < 40; ++round) {
      Tree tree = random_tree(t, rng, 1 + static_cast<int>(rng() % 512));
      std::set<int> model;
      for (int k : tree.items()) model.insert(k);
      const std::size_t cap = tree.capacity();
      const std::size_t want = std::min<std::size_t>(cap, 600);
      std::set<int> batch_set;
      std::uniform_int_distribution<int> kd(0, 1000000000);
      while (batch_set.size() < want) batch_set.insert(kd(rng));
      std::vector<int> batch(batch_set.begin(), batch_set.end());
      for (int k : batch) model.insert(k);

      const std::uint64_t before = tree.root_split_count();
      tree.par_insert(pool, batch);
      REQUIRE(tree.root_split_count() == before);
      require_valid(tree);
      REQUIRE(tree.items() == std::vector<int>(model.begin(), model.end()));
    }
  }
}

TEST_CASE("a batch within one child's capacity never touches the root keys") {
  Pool pool(2);
  std::mt19937 rng(0xc41d);
  int tested = 0;
  for (int attempt = 0; attempt < 200 && tested < 20; ++attempt) {
    const int t = 2 + static_cast<int>(rng() % 3);
    Tree tree = random_tree(t, rng, 64 + static_cast<int>(rng() % 448));
    const auto rk = tree.root_keys();
    const auto shp = tree.shape();
    if (shp.children.empty()) continue;
    const std::size_t ci = rng() % shp.children.size();
    const int lo = (ci == 0) ? 0 : rk[ci - 1] + 1;
    const int hi = (ci == rk.size()) ? 1000000000 : rk[ci] - 1;
    if (hi - lo < 2000) continue;
    const std::size_t child_cap = cap_oracle(t, shp.children[ci]);
    const std::size_t want = std::min<std::size_t>(child_cap, 200);
    if (want == 0) continue;

    std::set<int> batch_set;
    std::uniform_int_distribution<int> kd(lo, hi);
    while (batch_set.size() < want) batch_set.insert(kd(rng));
    std::vector<int> batch(batch_set.begin(), batch_set.end());

    tree.par_insert(pool, batch);
    REQUIRE(tree.root_keys() == rk);
    require_valid(tree);
    ++tested;
  }
  REQUIRE(tested == 20);
}

TEST_CASE("a batch one past the root capacity forces a preemptive split") {
  Pool pool(2);
  Tree tree(2);
  for (int k : {10, 20, 30}) tree.insert(k);
  REQUIRE(tree.capacity() == 0);
  const std::vector<int> batch{15};
  tree.par_insert(pool, batch);
  REQUIRE(tree.split_count() >= 1);
  REQUIRE(tree.items() == std::vector<int>{10, 15, 20, 30});
  require_valid(tree);
}

TEST_CASE("an empty insert batch is a no-op") {
  Pool pool(2);
  Tree tree(3);
  for (int k : {1, 2, 3}) tree.insert(k);
  tree.par_insert(pool, std::span<const int>{});
  REQUIRE(tree.items() == std::vector<int>{1, 2, 3});
}

TEST_CASE("unsorted insert batches are rejected") {
  Pool pool(2);
  Tree tree(3);
  const std::vector<int> bad{5, 3};
  REQUIRE_THROWS_AS(tree.par_insert(pool, bad), std::logic_error);
}

TEST_CASE("parallel search answers match sequential search") {
  Pool pool(4);
  std::mt19937 rng(0x5ea7);
  Tree tree(8, ExecutorConfig{32, 4});
  std::set<int> model;
  std::uniform_int_distribution<int> kd(0, 30000);
  for (int i = 0; i < 5000; ++i) {
    const int k = kd(rng);
    tree.insert(k);
    model.insert(k);
  }
  std::vector<int> queries;
  for (int i = 0; i < 10000; ++i) queries.push_back(kd(rng));
  std::sort(queries.begin(), queries.end());
  std::vector<BatchedOp<Op, Res>> ops;
  ops.reserve(queries.size());
  for (int k : queries) ops.push_back(make_op(pool, SetMember<int>{k}));
  tree.par_search(pool, ops);
  for (std::size_t i = 0; i < ops.size(); ++i) {
    REQUIRE(ops[i].cell->wait() ==
            Res{op_status::ok, model.count(queries[i]) > 0, std::nullopt});
  }
}

TEST_CASE("searches in a mixed batch see the pre-insert tree") {
  Pool pool(2);
  Tree tree(2);
  tree.insert(10);
  tree.insert(20);
  std::vector<BatchedOp<Op, Res>> ops;
  ops.push_back(make_op(pool, SetMember<int>{30}));
  ops.push_back(make_op(pool, SetInsert<int>{30}));
  ops.push_back(make_op(pool, SetMember<int>{10}));
  ops.push_back(make_op(pool, SetDelete<int>{10}));
  ops.push_back(make_op(pool, SetPredecessor<int>{20}));
  tree.run_batch(pool, ops);
  REQUIRE(ops[0].cell->wait() == Res{op_status::ok, false, std::nullopt});
  REQUIRE(ops[1].cell->wait().status == op_status::ok);
  REQUIRE(ops[2].cell->wait() == Res{op_status::ok, true, std::nullopt});
  REQUIRE(ops[3].cell->wait().status == op_status::unsupported);
  REQUIRE(ops[4].cell->wait().status == op_status::unsupported);
  REQUIRE(tree.items() == std::vector<int>{10, 20, 30});
}

TEST_CASE("a thousand random batches replay like a sequential oracle") {
  Pool pool(2);
  std::mt19937 rng(0x1000);
  Tree tree(4, ExecutorConfig{24, 4});
  std::set<int> model;
  std::uniform_int_distribution<int> kd(0, 20000);
  for (int i = 0; i < 300; ++i) {
    const int k = kd(rng);
    tree.insert(k);
    model.insert(k);
  }
  for (int round = 0; round < 1000; ++round) {
    std::vector<BatchedOp<Op, Res>> ops;
    std::vector<Res> expected;
    std::set<int> next = model;
    const int n = 8 + static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) {
      const int k = kd(rng);
      if (rng() % 5 < 3) {
        ops.push_back(make_op(pool, SetInsert<int>{k}));
        expected.push_back({op_status::ok, false, std::nullopt});
        next.insert(k);
      } else {
        ops.push_back(make_op(pool, SetMember<int>{k}));
        expected.push_back({op_status::ok, model.count(k) > 0, std::nullopt});
      }
    }
    tree.run_batch(pool, ops);
    for (std::size_t i = 0; i < ops.size(); ++i) {
      INFO("round " << round << " op " << i);
      REQUIRE(ops[i].cell->wait() == expected[i]);
    }
    model = std::move(next);
    if (round % 100 == 99) {
      REQUIRE(tree.items() == std::vector<int>(model.begin(), model.end()));
      require_valid(tree);
    }
  }
}

TEST_CASE("fifty thousand inserts in one batch land and validate") {
  Pool pool(4);
  Tree tree(8, ExecutorConfig{64, 4});
  std::set<int> model;
  std::mt19937 gen(0x50c0);
  std::uniform_int_distribution<int> kd(0, 10000000);
  std::vector<int> batch;
  batch.reserve(50000);
  for (int i = 0; i < 50000; ++i) {
    const int k = kd(gen);
    batch.push_back(k);
    model.insert(k);
  }
  std::sort(batch.begin(), batch.end());
  tree.par_insert(pool, batch);
  require_valid(tree);
  REQUIRE(tree.size() == model.size());
  std::vector<int> probe(batch.begin(), batch.begin() + 2000);
  for (int k : probe) REQUIRE(tree.contains(k));
  for (int i = 0; i < 2000; ++i) {
    const int k = kd(gen);
    REQUIRE(tree.contains(k) == (model.count(k) > 0));
  }
}

TEST_CASE("wrapped b-tree serves concurrent clients and ends validated") {
  Pool pool(4);
  auto batched = wrap(Tree(8, ExecutorConfig{16, 4}), pool,
                      LaunchConfig{4, std::chrono::microseconds(200)});
  constexpr int kClients = 8;
  constexpr int kPer = 150;
  CompletionLatch done(pool, kClients);
  std::atomic<int> misses{0};
  for (int c = 0; c < kClients; ++c) {
    pool.submit([&, c] {
      for (int i = 0; i < kPer; ++i) {
        const int k = c * kPer + i;
        if (batched.apply(SetInsert<int>{k}).status != op_status::ok) misses.fetch_add(1);
        if (i % 40 == 11) {
          auto r = batched.apply(SetMember<int>{k});
          if (r.status != op_status::ok || !r.found) misses.fetch_add(1);
        }
      }
      done.arrive();
    });
  }
  done.wait();
  batched.quiesce();
  REQUIRE(misses.load() == 0);
  require_valid(batched.impl());
  REQUIRE(batched.impl().size() == kClients * kPer);
}

// --- Skip list ---

TEST_CASE("duplicates inside a batch collapse to one key") {
  Pool pool(2);
  SkipList<int> sl(7);
  sl.batch_insert(pool, {3, 3, 5});
  REQUIRE(sl.items() == std::vector<int>{3, 5});
  require_valid(sl);
}

TEST_CASE("skip list sequential ops agree with a sorted set") {
  SkipList<int> sl(0xfeed);
  std::set<int> model;
  std::mt19937 rng(0x11);
  std::uniform_int_distribution<int> kd(0, 3000);
  for (int i = 0; i < 5000; ++i) {
    const int k = kd(rng);
    REQUIRE(sl.insert(k) == model.insert(k).second);
    if (i % 401 == 0) require_valid(sl);
  }
  require_valid(sl);
  REQUIRE(sl.items() == std::vector<int>(model.begin(), model.end()));
  for (int k = 0; k <= 3000; ++k) REQUIRE(sl.contains(k) == (model.count(k) > 0));
}

TEST_CASE("a ten-thousand-key batch lands into a ten-thousand-key list") {
  Pool pool(4);
  SkipList<int> sl(0xabcd);
  std::set<int> model;
  std::mt19937 rng(0x22);
  std::uniform_int_distribution<int> kd(0, 40000000);
  for (int i = 0; i < 10000; ++i) {
    const int k = kd(rng);
    sl.insert(k);
    model.insert(k);
  }
  std::vector<int> batch;
  for (int i = 0; i < 10000; ++i) {
    const int k = kd(rng);
    batch.push_back(k);
    model.insert(k);
  }
  sl.batch_insert(pool, std::move(batch));
  require_valid(sl);
  REQUIRE(sl.items() == std::vector<int>(model.begin(), model.end()));
}

TEST_CASE("an empty skip list batch is a no-op") {
  Pool pool(2);
  SkipList<int> sl(1);
  sl.insert(4);
  const auto before = sl.structure_checksum();
  sl.batch_insert(pool, {});
  REQUIRE(sl.structure_checksum() == before);
  REQUIRE(sl.items() == std::vector<int>{4});
}

TEST_CASE("the search stage leaves the original list untouched") {
  Pool pool(4);
  SkipList<int> sl(0x51);
  std::mt19937 rng(0x33);
  std::uniform_int_distribution<int> kd(0, 100000);
  for (int i = 0; i < 2000; ++i) sl.insert(kd(rng));
  std::set<int> model;
  for (int k : sl.items()) model.insert(k);

  std::vector<int> batch;
  for (int i = 0; i < 1000; ++i) batch.push_back(kd(rng));
  for (int i = 0; i < 50; ++i) batch.push_back(*std::next(model.begin(), i * 7));  // overlaps
  for (int k : batch) model.insert(k);

  const auto before = sl.structure_checksum();
  auto plan = sl.prepare_batch(pool, std::move(batch));
  REQUIRE(sl.structure_checksum() == before);
  sl.merge_batch(std::move(plan));
  require_valid(sl);
  REQUIRE(sl.items() == std::vector<int>(model.begin(), model.end()));
}

TEST_CASE("the merged structure is independent of the worker count") {
  std::vector<int> batch;
  std::mt19937 rng(0x44);
  std::uniform_int_distribution<int> kd(0, 1000000);
  for (int i = 0; i < 4000; ++i) batch.push_back(kd(rng));

  auto build = [&](unsigned workers) {
    Pool pool(workers);
    SkipList<int> sl(0x777);
    for (int i = 0; i < 500; ++i) sl.insert(i * 17);
    sl.batch_insert(pool, batch);
    require_valid(sl);
    return sl;
  };
  auto one = build(1);
  auto four = build(4);
  REQUIRE(one.items() == four.items());
  REQUIRE(one.structure_checksum() == four.structure_checksum());
}

TEST_CASE("skip list batches answer queries from the pre-insert list") {
  Pool pool(4);
  SkipList<int> sl(0x99);
  std::set<int> model;
  std::mt19937 rng(0x55);
  std::uniform_int_distribution<int> kd(0, 5000);
  for (int i = 0; i < 800; ++i) {
    const int k = kd(rng);
    sl.insert(k);
    model.insert(k);
  }
  for (int round = 0; round < 30; ++round) {
    std::vector<BatchedOp<Op, Res>> ops;
    std::vector<Res> expected;
    std::set<int> next = model;
    for (int i = 0; i < 200; ++i) {
      const int k = kd(rng);
      if (rng() % 2) {
        ops.push_back(make_op(pool, SetInsert<int>{k}));
        expected.push_back({op_status::ok, false, std::nullopt});
        next.insert(k);
      } else {
        ops.push_back(make_op(pool, SetMember<int>{k}));
        expected.push_back({op_status::ok, model.count(k) > 0, std::nullopt});
      }
    }
    ops.push_back(make_op(pool, SetSuccessor<int>{1}));
    expected.push_back({op_status::unsupported, false, std::nullopt});
    sl.run_batch(pool, ops);
    for (std::size_t i = 0; i < ops.size(); ++i) {
      INFO("round " << round << " op " << i);
      REQUIRE(ops[i].cell->wait() == expected[i]);
    }
    model = std::move(next);
  }
  require_valid(sl);
  REQUIRE(sl.items() == std::vector<int>(model.begin(), model.end()));
}

TEST_CASE("wrapped skip list serves concurrent clients and ends validated") {
  Pool pool(4);
  auto batched = wrap(SkipList<int>(0x8), pool, LaunchConfig{4, std::chrono::microseconds(200)});
  constexpr int kClients = 8;
  constexpr int kPer = 150;
  CompletionLatch done(pool, kClients);
  std::atomic<int> misses{0};
  for (int c = 0; c < kClients; ++c) {
    pool.submit([&, c] {
      for (int i = 0; i < kPer; ++i) {
        const int k = c * kPer + i;
        if (batched.apply(SetInsert<int>{k}).status != op_status::ok) misses.fetch_add(1);
        if (i % 40 == 11) {
          auto r = batched.apply(SetMember<int>{k});
          if (r.status != op_status::ok || !r.found) misses.fetch_add(1);
        }
      }
      done.arrive();
    });
  }
  done.wait();
  batched.quiesce();
  REQUIRE(misses.load() == 0);
  require_valid(batched.impl());
  REQUIRE(batched.impl().size() == kClients * kPer);
}
