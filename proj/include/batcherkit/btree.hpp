#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "batcherkit/batching.hpp"
#include "batcherkit/executor_config.hpp"
#include "batcherkit/parallel.hpp"
#include "batcherkit/pool.hpp"
#include "batcherkit/set_ops.hpp"

namespace batcherkit {

// B-tree of ordered keys with batch-parallel search and insert.
//
// Every node caches a capacity statistic: the number of keys its subtree can
// absorb before the node itself must split (free slots for a leaf,
// (1 + min child capacity) * free slots for an interior node). Batch inserts
// use it to split full nodes preemptively on the way down, so no node ever
// holds more than 2t-1 keys mid-run and a batch within the root's capacity
// never splits the root.
template <class K, class Compare = std::less<K>>
class BTree {
 public:
  using key_type = K;
  using Op = SetOp<K>;
  using Result = SetResult<K>;

  static Result failed_result() { return {op_status::failed, false, std::nullopt}; }

  // Occupancy snapshot of a subtree, for shape-level audits.
  struct ShapeNode {
    std::size_t nkeys = 0;
    std::vector<ShapeNode> children;
  };

  explicit BTree(int t = 8, ExecutorConfig cfg = ExecutorConfig{}, Compare cmp = Compare())
      : t_(t), cfg_(cfg), cmp_(std::move(cmp)) {
    if (t < 2) throw std::invalid_argument("branching factor must be at least 2");
    root_ = std::make_unique<Node>();
  }

  BTree(BTree&&) noexcept = default;
  BTree& operator=(BTree&&) noexcept = default;

  int branching() const noexcept { return t_; }
  std::size_t size() const noexcept { return size_; }
  const ExecutorConfig& config() const noexcept { return cfg_; }

  bool contains(const K& k) const {
    const Node* n = root_.get();
    while (n) {
      const auto pos = std::lower_bound(n->keys.begin(), n->keys.end(), k, cmp_);
      if (pos != n->keys.end() && !cmp_(k, *pos)) return true;
      if (n->leaf()) return false;
      n = n->children[static_cast<std::size_t>(pos - n->keys.begin())].get();
    }
    return false;
  }

  void insert(const K& k) {
    if (node_full(*root_)) split_root();
    insert_nonfull(*root_, k);
  }

  std::vector<K> items() const {
    std::vector<K> out;
    out.reserve(size_);
    collect(*root_, out);
    return out;
  }

  // Capacity of the whole tree: how many keys a batch may hold and still be
  // guaranteed not to split the root.
  std::size_t capacity() const { return node_capacity(*root_); }

  std::uint64_t split_count() const noexcept { return splits_; }
  std::uint64_t root_split_count() const noexcept { return root_splits_; }
  std::vector<K> root_keys() const { return root_->keys; }

  ShapeNode shape() const { return shape_of(*root_); }

  bool validate(std::string* diag = nullptr) const {
    if (!root_) {
      if (diag) *diag = "missing root";
      return false;
    }
    int leaf_depth = -1;
    std::size_t count = 0;
    if (!validate_rec(*root_, true, nullptr, nullptr, 0, leaf_depth, count, diag)) return false;
    if (count != size_) {
      if (diag) *diag = "size counter differs from stored keys";
      return false;
    }
    return true;
  }

  // Answers sorted membership queries against the current tree. Each query
  // resolves at the node where its key is found or, at a leaf, proven absent.
  void par_search(Pool& pool, std::span<BatchedOp<Op, Result>> searches) const {
    if (searches.empty()) return;
    for (const auto& bo : searches)
      if (!std::holds_alternative<SetMember<K>>(bo.op))
        throw std::logic_error("par_search expects membership ops");
    const auto by_key = [this](const BatchedOp<Op, Result>& a, const BatchedOp<Op, Result>& b) {
      return cmp_(set_op_key(a.op), set_op_key(b.op));
    };
    if (!std::is_sorted(searches.begin(), searches.end(), by_key))
      throw std::logic_error("par_search: ops not sorted by key");
    search_rec(pool, *root_, searches);
  }

  // Inserts a sorted batch, splitting preemptively. Duplicates within the
  // batch and keys already present are dropped.
  void par_insert(Pool& pool, std::span<const K> keys) {
    if (keys.empty()) return;
    if (!std::is_sorted(keys.begin(), keys.end(), cmp_))
      throw std::logic_error("par_insert: keys not sorted");
    std::vector<K> pending(keys.begin(), keys.end());
    pending.erase(std::unique(pending.begin(), pending.end(),
                              [this](const K& a, const K& b) { return keys_equal(a, b); }),
                  pending.end());

    while (!pending.empty()) {
      if (node_full(*root_)) split_root();
      const std::size_t cap = node_capacity(*root_);
      std::vector<K> spill;
      if (pending.size() <= cap) {
        insert_bounded(pool, *root_, std::span<const K>(pending), spill);
        pending = std::move(spill);
      } else {
        // Bite off an evenly spaced sample the root can absorb this round;
        // the remainder (plus any spill) goes around again.
        std::vector<K> take, rest;
        take.reserve(cap);
        rest.reserve(pending.size() - cap);
        const std::size_t n = pending.size();
        std::size_t picked = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (picked < cap && i == picked * n / cap) {
            take.push_back(std::move(pending[i]));
            ++picked;
          } else {
            rest.push_back(std::move(pending[i]));
          }
        }
        insert_bounded(pool, *root_, std::span<const K>(take), spill);
        std::vector<K> merged(rest.size() + spill.size());
        std::merge(rest.begin(), rest.end(), spill.begin(), spill.end(), merged.begin(), cmp_);
        pending = std::move(merged);
      }
    }
  }

  // Splits the batch into searches and inserts, sorts both in parallel, then
  // answers all searches against the pre-insert tree before inserting.
  void run_batch(Pool& pool, std::span<BatchedOp<Op, Result>> ops) {
    if (ops.empty()) return;
    std::vector<BatchedOp<Op, Result>> searches;
    std::vector<K> inserts;
    for (auto& bo : ops) {
      if (std::holds_alternative<SetMember<K>>(bo.op)) {
        searches.push_back(bo);
      } else if (const auto* ins = std::get_if<SetInsert<K>>(&bo.op)) {
        inserts.push_back(ins->key);
        bo.complete({op_status::ok, false, std::nullopt});
      } else {
        bo.complete({op_status::unsupported, false, std::nullopt});
      }
    }
    parallel_sort(pool, std::span<BatchedOp<Op, Result>>(searches),
                  [this](const BatchedOp<Op, Result>& a, const BatchedOp<Op, Result>& b) {
                    return cmp_(set_op_key(a.op), set_op_key(b.op));
                  });
    parallel_sort(pool, std::span<K>(inserts), cmp_);
    par_search(pool, std::span<BatchedOp<Op, Result>>(searches));
    par_insert(pool, std::span<const K>(inserts));
  }

 private:
  struct Node {
    std::vector<K> keys;
    std::vector<std::unique_ptr<Node>> children;
    mutable std::int64_t cap_cache = -1;  // -1 == dirty
    bool leaf() const noexcept { return children.empty(); }
  };

  static constexpr std::size_t kCapCeil =
      static_cast<std::size_t>(std::numeric_limits<std::int64_t>::max() / 2);

  std::size_t max_keys() const noexcept { return 2 * static_cast<std::size_t>(t_) - 1; }
  std::size_t min_keys() const noexcept { return static_cast<std::size_t>(t_) - 1; }
  bool node_full(const Node& n) const noexcept { return n.keys.size() == max_keys(); }
  bool keys_equal(const K& a, const K& b) const { return !cmp_(a, b) && !cmp_(b, a); }

  static std::size_t mul_saturate(std::size_t a, std::size_t b) {
    if (a == 0 || b == 0) return 0;
    if (a > kCapCeil / b) return kCapCeil;
    return a * b;
  }

  std::size_t node_capacity(const Node& n) const {
    if (n.cap_cache >= 0) return static_cast<std::size_t>(n.cap_cache);
    const std::size_t fr = max_keys() - n.keys.size();
    std::size_t cap;
    if (n.leaf()) {
      cap = fr;
    } else {
      std::size_t m = kCapCeil;
      for (const auto& c : n.children) m = std::min(m, node_capacity(*c));
      cap = mul_saturate(m + 1, fr);
    }
    n.cap_cache = static_cast<std::int64_t>(cap);
    return cap;
  }

  std::size_t capacity_fresh(const Node& n) const {
    const std::size_t fr = max_keys() - n.keys.size();
    if (n.leaf()) return fr;
    std::size_t m = kCapCeil;
    for (const auto& c : n.children) m = std::min(m, capacity_fresh(*c));
    return mul_saturate(m + 1, fr);
  }

  void split_root() {
    auto fresh = std::make_unique<Node>();
    fresh->children.push_back(std::move(root_));
    root_ = std::move(fresh);
    split_child(*root_, 0);
    ++root_splits_;
  }

  // Moves the median of full child i up into p and splits the rest in two.
  void split_child(Node& p, std::size_t i) {
    if (node_full(p)) throw std::logic_error("split into a full node");
    Node& c = *p.children[i];
    if (!node_full(c)) throw std::logic_error("split of a non-full child");
    const std::size_t mid = static_cast<std::size_t>(t_) - 1;
    auto right = std::make_unique<Node>();
    K median = std::move(c.keys[mid]);
    right->keys.assign(std::make_move_iterator(c.keys.begin() + mid + 1),
                       std::make_move_iterator(c.keys.end()));
    c.keys.resize(mid);
    if (!c.leaf()) {
      right->children.assign(std::make_move_iterator(c.children.begin() + t_),
                             std::make_move_iterator(c.children.end()));
      c.children.resize(static_cast<std::size_t>(t_));
    }
    c.cap_cache = -1;
    p.cap_cache = -1;
    p.keys.insert(p.keys.begin() + static_cast<std::ptrdiff_t>(i), std::move(median));
    p.children.insert(p.children.begin() + static_cast<std::ptrdiff_t>(i) + 1, std::move(right));
    ++splits_;
  }

  void insert_nonfull(Node& n, const K& k) {
    n.cap_cache = -1;
    const auto pos = std::lower_bound(n.keys.begin(), n.keys.end(), k, cmp_);
    if (pos != n.keys.end() && !cmp_(k, *pos)) return;  // present
    if (n.leaf()) {
      if (n.keys.size() >= max_keys()) throw std::logic_error("leaf overfilled");
      n.keys.insert(pos, k);
      ++size_;
      return;
    }
    std::size_t idx = static_cast<std::size_t>(pos - n.keys.begin());
    if (node_full(*n.children[idx])) {
      split_child(n, idx);
      if (keys_equal(k, n.keys[idx])) return;  // the raised median is k itself
      if (cmp_(n.keys[idx], k)) ++idx;
    }
    insert_nonfull(*n.children[idx], k);
  }

  // Merges a sorted, deduplicated batch into a leaf; keys beyond the free
  // slots spill back to the caller.
  void leaf_absorb(Node& n, std::span<const K> batch, std::vector<K>& spill) {
    const std::size_t budget = max_keys() - n.keys.size();
    std::vector<K> merged;
    merged.reserve(std::min(max_keys(), n.keys.size() + batch.size()));
    std::size_t added = 0;
    auto it = n.keys.begin();
    auto bt = batch.begin();
    while (it != n.keys.end() || bt != batch.end()) {
      if (bt == batch.end() || (it != n.keys.end() && cmp_(*it, *bt))) {
        merged.push_back(std::move(*it++));
      } else if (it != n.keys.end() && !cmp_(*bt, *it)) {
        ++bt;  // already present
      } else {
        const K& k = *bt++;
        if (added < budget) {
          merged.push_back(k);
          ++added;
        } else {
          spill.push_back(k);
        }
      }
    }
    if (merged.size() > max_keys()) throw std::logic_error("leaf overfilled");
    n.keys = std::move(merged);
    size_ += added;
  }

  // Inserts a sorted batch below n without ever splitting n itself. Full
  // children about to receive keys are split first while n has a free slot;
  // each child then absorbs waves of at most its capacity. Keys that cannot
  // be placed without splitting n spill back to the caller.
  void insert_bounded(Pool& pool, Node& n, std::span<const K> batch, std::vector<K>& spill) {
    if (batch.empty()) return;
    n.cap_cache = -1;
    if (n.leaf()) {
      leaf_absorb(n, batch, spill);
      return;
    }

    std::vector<K> cur(batch.begin(), batch.end());
    while (!cur.empty()) {
      const auto parts = partition_by_pivots<K, K>(
          std::span<const K>(n.keys), std::span<const K>(cur),
          [](const K& k) -> const K& { return k; }, cmp_);
      struct Task {
        std::size_t child;
        Range r;
      };
      std::vector<Task> tasks;
      for (std::size_t j = 0; j < parts.size(); ++j) {
        std::size_t b = parts[j].begin;
        if (j > 0)
          while (b < parts[j].end && keys_equal(cur[b], n.keys[j - 1])) ++b;  // present
        if (b < parts[j].end) tasks.push_back({j, {b, parts[j].end}});
      }
      if (tasks.empty()) return;

      bool split_done = false;
      for (const Task& tk : tasks) {
        if (node_full(*n.children[tk.child]) && !node_full(n)) {
          split_child(n, tk.child);
          split_done = true;
          break;
        }
      }
      if (split_done) continue;  // separators changed; repartition

      // Wave pass: disjoint children absorb in parallel. A still-full child
      // is only reachable once n itself is full; its keys spill.
      std::vector<std::vector<K>> leftover(tasks.size());
      std::vector<std::vector<K>> spills(tasks.size());
      auto body = [&](std::size_t i) {
        const Task& tk = tasks[i];
        Node& c = *n.children[tk.child];
        const std::span<const K> range(cur.data() + tk.r.begin, tk.r.size());
        if (node_full(c)) {
          spills[i].assign(range.begin(), range.end());
          return;
        }
        const std::size_t w = std::min(node_capacity(c), range.size());
        insert_bounded(pool, c, range.first(w), spills[i]);
        leftover[i].assign(range.begin() + static_cast<std::ptrdiff_t>(w), range.end());
      };
      if (cur.size() < cfg_.seq_threshold) {
        for (std::size_t i = 0; i < tasks.size(); ++i) body(i);
      } else {
        run_parallel_for(pool, {0, tasks.size()}, body, 1);
      }

      std::vector<K> next;
      for (auto& l : leftover) next.insert(next.end(), l.begin(), l.end());
      for (auto& s : spills) spill.insert(spill.end(), s.begin(), s.end());
      cur = std::move(next);
    }
  }

  void search_rec(Pool& pool, const Node& n, std::span<BatchedOp<Op, Result>> ops) const {
    if (ops.empty()) return;
    const auto key_of = [](const BatchedOp<Op, Result>& bo) -> const K& {
      return set_op_key(bo.op);
    };
    const auto parts = partition_by_pivots<K, BatchedOp<Op, Result>>(
        std::span<const K>(n.keys), std::span<const BatchedOp<Op, Result>>(ops), key_of, cmp_);
    std::vector<Range> sub(parts.size());
    for (std::size_t j = 0; j < parts.size(); ++j) {
      std::size_t b = parts[j].begin;
      if (j > 0) {
        while (b < parts[j].end && keys_equal(key_of(ops[b]), n.keys[j - 1])) {
          ops[b].complete({op_status::ok, true, std::nullopt});
          ++b;
        }
      }
      sub[j] = {b, parts[j].end};
    }
    if (n.leaf()) {
      for (const Range& r : sub)
        for (std::size_t i = r.begin; i < r.end; ++i)
          ops[i].complete({op_status::ok, false, std::nullopt});
      return;
    }
    if (ops.size() < cfg_.seq_threshold) {
      for (std::size_t j = 0; j < sub.size(); ++j)
        search_rec(pool, *n.children[j], ops.subspan(sub[j].begin, sub[j].size()));
    } else {
      run_parallel_for(
          pool, {0, sub.size()},
          [this, &pool, &n, ops, &sub](std::size_t j) {
            search_rec(pool, *n.children[j], ops.subspan(sub[j].begin, sub[j].size()));
          },
          1);
    }
  }

  void collect(const Node& n, std::vector<K>& out) const {
    if (n.leaf()) {
      out.insert(out.end(), n.keys.begin(), n.keys.end());
      return;
    }
    for (std::size_t i = 0; i < n.keys.size(); ++i) {
      collect(*n.children[i], out);
      out.push_back(n.keys[i]);
    }
    collect(*n.children.back(), out);
  }

  ShapeNode shape_of(const Node& n) const {
    ShapeNode s;
    s.nkeys = n.keys.size();
    s.children.reserve(n.children.size());
    for (const auto& c : n.children) s.children.push_back(shape_of(*c));
    return s;
  }

  bool validate_rec(const Node& n, bool is_root, const K* lo, const K* hi, int depth,
                    int& leaf_depth, std::size_t& count, std::string* diag) const {
    const auto fail = [&](const char* msg) {
      if (diag) *diag = msg;
      return false;
    };
    if (n.keys.size() > max_keys()) return fail("node holds more than 2t-1 keys");
    if (!is_root && n.keys.size() < min_keys()) return fail("node holds fewer than t-1 keys");
    if (is_root && !n.leaf() && n.keys.empty()) return fail("interior root holds no keys");
    for (std::size_t i = 1; i < n.keys.size(); ++i)
      if (!cmp_(n.keys[i - 1], n.keys[i])) return fail("node keys not strictly increasing");
    for (const K& k : n.keys) {
      if (lo && !cmp_(*lo, k)) return fail("key at or below its lower separator");
      if (hi && !cmp_(k, *hi)) return fail("key at or above its upper separator");
    }
    if (n.cap_cache >= 0 && static_cast<std::size_t>(n.cap_cache) != capacity_fresh(n))
      return fail("cached capacity differs from recomputation");
    count += n.keys.size();
    if (n.leaf()) {
      if (leaf_depth < 0)
        leaf_depth = depth;
      else if (depth != leaf_depth)
        return fail("leaves at differing depths");
      return true;
    }
    if (n.children.size() != n.keys.size() + 1) return fail("child count must be key count plus one");
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      const K* clo = (i == 0) ? lo : &n.keys[i - 1];
      const K* chi = (i == n.keys.size()) ? hi : &n.keys[i];
      if (!n.children[i]) return fail("missing child");
      if (!validate_rec(*n.children[i], false, clo, chi, depth + 1, leaf_depth, count, diag))
        return false;
    }
    return true;
  }

  int t_;
  ExecutorConfig cfg_;
  Compare cmp_;
  std::unique_ptr<Node> root_;
  std::size_t size_ = 0;
  std::uint64_t splits_ = 0;
  std::uint64_t root_splits_ = 0;
};

}  // namespace batcherkit
