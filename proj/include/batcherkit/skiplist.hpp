#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "batcherkit/batching.hpp"
#include "batcherkit/parallel.hpp"
#include "batcherkit/pool.hpp"
#include "batcherkit/set_ops.hpp"

namespace batcherkit {

// Skip list with a three-stage batch insert: build a sorted intermediary
// list of pre-leveled nodes, search the original list in parallel without
// modifying it to find each node's splice points, then merge sequentially.
// Node levels are drawn from a seeded generator in key order, so the final
// structure is deterministic for a given seed and batch.
template <class K, class Compare = std::less<K>>
class SkipList {
  struct Node;

 public:
  using key_type = K;
  using Op = SetOp<K>;
  using Result = SetResult<K>;

  static Result failed_result() { return {op_status::failed, false, std::nullopt}; }

  explicit SkipList(std::uint64_t seed = 0x9e3779b97f4a7c15ull, int max_level = 20,
                    Compare cmp = Compare())
      : max_level_(max_level), cmp_(std::move(cmp)), rng_(seed) {
    if (max_level < 1) throw std::invalid_argument("max level must be at least 1");
    head_fwd_.assign(static_cast<std::size_t>(max_level_), nullptr);
  }

  SkipList(SkipList&&) noexcept = default;
  SkipList& operator=(SkipList&&) noexcept = default;

  std::size_t size() const noexcept { return size_; }
  int max_level() const noexcept { return max_level_; }

  bool contains(const K& k) const {
    const Node* pred = nullptr;
    for (int l = max_level_ - 1; l >= 0; --l) {
      const Node* nx = fwd_of(pred, l);
      while (nx && cmp_(nx->key, k)) {
        pred = nx;
        nx = nx->fwd[static_cast<std::size_t>(l)];
      }
    }
    const Node* cand = fwd_of(pred, 0);
    return cand && !cmp_(k, cand->key);
  }

  bool insert(const K& k) {
    std::vector<Node*> update(static_cast<std::size_t>(max_level_), nullptr);
    Node* pred = nullptr;
    for (int l = max_level_ - 1; l >= 0; --l) {
      Node* nx = fwd_of(pred, l);
      while (nx && cmp_(nx->key, k)) {
        pred = nx;
        nx = nx->fwd[static_cast<std::size_t>(l)];
      }
      update[static_cast<std::size_t>(l)] = pred;
    }
    Node* cand = fwd_of(pred, 0);
    if (cand && !cmp_(k, cand->key)) return false;
    const int lvl = draw_level();
    auto node = std::make_unique<Node>(Node{k, std::vector<Node*>(static_cast<std::size_t>(lvl))});
    for (int l = 0; l < lvl; ++l) {
      node->fwd[static_cast<std::size_t>(l)] = fwd_of(update[static_cast<std::size_t>(l)], l);
      set_fwd(update[static_cast<std::size_t>(l)], l, node.get());
    }
    nodes_.push_back(std::move(node));
    ++size_;
    return true;
  }

  std::vector<K> items() const {
    std::vector<K> out;
    out.reserve(size_);
    for (const Node* n = head_fwd_[0]; n; n = n->fwd[0]) out.push_back(n->key);
    return out;
  }

  // Hashes every level's key sequence; unchanged by read-only phases.
  std::size_t structure_checksum() const {
    std::size_t h = 1469598103934665603ull;
    const auto mix = [&h](std::size_t v) {
      h ^= v;
      h *= 1099511628211ull;
    };
    for (int l = 0; l < max_level_; ++l) {
      mix(static_cast<std::size_t>(l) + 0x9e3779b97f4a7c15ull);
      for (const Node* n = head_fwd_[static_cast<std::size_t>(l)]; n;
           n = n->fwd[static_cast<std::size_t>(l)])
        mix(std::hash<K>{}(n->key));
    }
    return h;
  }

  bool validate(std::string* diag = nullptr) const {
    const auto fail = [&](const char* msg) {
      if (diag) *diag = msg;
      return false;
    };
    std::size_t count = 0;
    for (const Node* n = head_fwd_[0]; n; n = n->fwd[0]) {
      ++count;
      if (n->fwd.empty() || n->fwd.size() > static_cast<std::size_t>(max_level_))
        return fail("node level out of range");
      if (n->fwd[0] && !cmp_(n->key, n->fwd[0]->key)) return fail("level 0 not strictly sorted");
    }
    if (count != size_) return fail("size counter differs from level 0 length");
    for (int l = 1; l < max_level_; ++l) {
      const Node* below = head_fwd_[static_cast<std::size_t>(l - 1)];
      for (const Node* n = head_fwd_[static_cast<std::size_t>(l)]; n;
           n = n->fwd[static_cast<std::size_t>(l)]) {
        if (n->fwd.size() <= static_cast<std::size_t>(l)) return fail("link above node level");
        while (below && cmp_(below->key, n->key)) below = below->fwd[static_cast<std::size_t>(l - 1)];
        if (below != n) return fail("level is not a sub-list of the level below");
        below = below->fwd[static_cast<std::size_t>(l - 1)];
        if (n->fwd[static_cast<std::size_t>(l)] &&
            !cmp_(n->key, n->fwd[static_cast<std::size_t>(l)]->key))
          return fail("upper level not strictly sorted");
      }
    }
    return true;
  }

  // Stages 1 and 2 of a batch insert. The original list is only read.
  struct BatchPlan {
    std::vector<std::unique_ptr<Node>> nodes;       // sorted, deduplicated
    std::vector<std::vector<int>> back_batch;       // per node/level: batch index or -1
    std::vector<std::vector<Node*>> back_orig;      // valid where back_batch == -1; nullptr = head
    std::vector<std::uint8_t> skip;                 // key already present in the list
  };

  BatchPlan prepare_batch(Pool& pool, std::vector<K> keys) {
    BatchPlan plan;
    if (keys.empty()) return plan;

    // Stage 1: sort and deduplicate, pre-draw levels in key order, link the
    // intermediary list and record batch-internal back pointers.
    parallel_sort(pool, std::span<K>(keys), cmp_);
    keys.erase(std::unique(keys.begin(), keys.end(),
                           [this](const K& a, const K& b) { return keys_equal(a, b); }),
               keys.end());
    const std::size_t n = keys.size();
    plan.nodes.reserve(n);
    plan.back_batch.resize(n);
    plan.back_orig.resize(n);
    plan.skip.assign(n, 0);
    std::vector<int> last_seen(static_cast<std::size_t>(max_level_), -1);
    for (std::size_t i = 0; i < n; ++i) {
      const int lvl = draw_level();
      plan.nodes.push_back(std::make_unique<Node>(
          Node{std::move(keys[i]), std::vector<Node*>(static_cast<std::size_t>(lvl))}));
      plan.back_batch[i].assign(static_cast<std::size_t>(lvl), -1);
      plan.back_orig[i].assign(static_cast<std::size_t>(lvl), nullptr);
      for (int l = 0; l < lvl; ++l) {
        plan.back_batch[i][static_cast<std::size_t>(l)] = last_seen[static_cast<std::size_t>(l)];
        last_seen[static_cast<std::size_t>(l)] = static_cast<int>(i);
      }
    }
    std::vector<Node*> next_seen(static_cast<std::size_t>(max_level_), nullptr);
    for (std::size_t i = n; i-- > 0;) {
      Node& node = *plan.nodes[i];
      for (std::size_t l = 0; l < node.fwd.size(); ++l) {
        node.fwd[l] = next_seen[l];
        next_seen[l] = &node;
      }
    }

    // Stage 2: one read-only descent of the original list per node finds the
    // splice predecessor for every level the intermediary left unresolved,
    // and flags keys that are already present.
    run_parallel_for(pool, {0, n}, [this, &plan](std::size_t i) {
      const Node& node = *plan.nodes[i];
      const Node* pred = nullptr;
      for (int l = max_level_ - 1; l >= 0; --l) {
        const Node* nx = fwd_of(pred, l);
        while (nx && cmp_(nx->key, node.key)) {
          pred = nx;
          nx = nx->fwd[static_cast<std::size_t>(l)];
        }
        if (l < static_cast<int>(node.fwd.size()) &&
            plan.back_batch[i][static_cast<std::size_t>(l)] < 0)
          plan.back_orig[i][static_cast<std::size_t>(l)] = const_cast<Node*>(pred);
      }
      const Node* cand = fwd_of(pred, 0);
      if (cand && !cmp_(node.key, cand->key)) plan.skip[i] = 1;
    });
    return plan;
  }

  // Stage 3: sequential merge in key order. Back pointers are hints; the
  // merge advances past batch nodes spliced earlier at the same level.
  void merge_batch(BatchPlan plan) {
    const std::size_t n = plan.nodes.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (plan.skip[i]) continue;
      Node& node = *plan.nodes[i];
      bool present = false;
      for (std::size_t l = 0; l < node.fwd.size() && !present; ++l) {
        // Resolve the hint, hopping over skipped batch nodes.
        std::size_t at = i;
        int j = plan.back_batch[at][l];
        while (j >= 0 && plan.skip[static_cast<std::size_t>(j)]) {
          at = static_cast<std::size_t>(j);
          j = plan.back_batch[at][l];
        }
        Node* pred = (j >= 0) ? plan.nodes[static_cast<std::size_t>(j)].get()
                              : plan.back_orig[at][l];
        Node* nx = fwd_of(pred, static_cast<int>(l));
        while (nx && cmp_(nx->key, node.key)) {
          pred = nx;
          nx = nx->fwd[l];
        }
        if (l == 0 && nx && !cmp_(node.key, nx->key)) {
          present = true;  // defensive; stage 2 should have flagged it
          break;
        }
        node.fwd[l] = nx;
        set_fwd(pred, static_cast<int>(l), &node);
      }
      if (!present) {
        nodes_.push_back(std::move(plan.nodes[i]));
        ++size_;
      }
    }
  }

  void batch_insert(Pool& pool, std::vector<K> keys) {
    merge_batch(prepare_batch(pool, std::move(keys)));
  }

  // Membership queries answer the pre-insert list in parallel; inserts then
  // land through the three-stage batch. Other op kinds fail per op.
  void run_batch(Pool& pool, std::span<BatchedOp<Op, Result>> ops) {
    if (ops.empty()) return;
    std::vector<BatchedOp<Op, Result>> queries;
    std::vector<K> inserts;
    for (auto& bo : ops) {
      if (std::holds_alternative<SetMember<K>>(bo.op)) {
        queries.push_back(bo);
      } else if (const auto* ins = std::get_if<SetInsert<K>>(&bo.op)) {
        inserts.push_back(ins->key);
        bo.complete({op_status::ok, false, std::nullopt});
      } else {
        bo.complete({op_status::unsupported, false, std::nullopt});
      }
    }
    run_parallel_for(pool, {0, queries.size()}, [this, &queries](std::size_t i) {
      queries[i].complete({op_status::ok, contains(set_op_key(queries[i].op)), std::nullopt});
    });
    batch_insert(pool, std::move(inserts));
  }

 private:
  struct Node {
    K key;
    std::vector<Node*> fwd;
  };

  Node* fwd_of(const Node* pred, int l) const {
    return pred ? pred->fwd[static_cast<std::size_t>(l)] : head_fwd_[static_cast<std::size_t>(l)];
  }
  void set_fwd(Node* pred, int l, Node* v) {
    (pred ? pred->fwd[static_cast<std::size_t>(l)] : head_fwd_[static_cast<std::size_t>(l)]) = v;
  }
  bool keys_equal(const K& a, const K& b) const { return !cmp_(a, b) && !cmp_(b, a); }

  int draw_level() {
    int lvl = 1;
    while (lvl < max_level_ && (rng_() & 1u)) ++lvl;
    return lvl;
  }

  int max_level_;
  Compare cmp_;
  std::mt19937_64 rng_;
  std::vector<Node*> head_fwd_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::size_t size_ = 0;
};

}  // namespace batcherkit
