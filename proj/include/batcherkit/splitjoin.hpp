#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "batching.hpp"
#include "executor_config.hpp"
#include "map_ops.hpp"
#include "parallel.hpp"
#include "pool.hpp"

namespace batcherkit {

// A mutable ordered map with plain sequential operations.
template <class T>
concept SequentialMap =
    std::default_initializable<T> && std::movable<T> &&
    requires(T t, const T ct, const typename T::key_type& k, typename T::mapped_type v) {
      typename T::key_type;
      typename T::mapped_type;
      { ct.search(k) } -> std::same_as<std::optional<typename T::mapped_type>>;
      t.insert(k, std::move(v));
      t.erase(k);
    };

// A SequentialMap that additionally supports order-based restructuring:
// split(t, k) partitions into keys < k and >= k, join glues two
// non-overlapping trees, size_factor cheaply over-approximates size, and
// set_root swaps in a replacement tree. This is everything the batch
// executor below needs.
template <class T>
concept SplitJoinPrebatch =
    SequentialMap<T> && requires(T t, T o, const T ct, const typename T::key_type& k) {
      typename T::key_compare;
      { ct.size_factor() } -> std::convertible_to<long>;
      { T::split(std::move(t), k) } -> std::same_as<std::pair<T, T>>;
      { T::join(std::move(t), std::move(o)) } -> std::same_as<T>;
      t.set_root(std::move(o));
    };

// Splits t at each pivot in turn. Pivots must be strictly increasing; the
// result holds |pivots|+1 trees whose concatenated traversals equal t's,
// part i covering pivots[i-1] <= key < pivots[i].
template <SplitJoinPrebatch T>
std::vector<T> split_multiple(T t, std::span<const typename T::key_type> pivots) {
  typename T::key_compare cmp{};
  for (std::size_t i = 1; i < pivots.size(); ++i)
    if (!cmp(pivots[i - 1], pivots[i]))
      throw std::logic_error("split_multiple: pivots must be strictly increasing");
  std::vector<T> parts;
  parts.reserve(pivots.size() + 1);
  for (const auto& p : pivots) {
    auto [lo, hi] = T::split(std::move(t), p);
    parts.push_back(std::move(lo));
    t = std::move(hi);
  }
  parts.push_back(std::move(t));
  return parts;
}

// Left fold of join; inverse of split_multiple. Parts must be pairwise
// ordered and non-overlapping (join itself enforces this).
template <SplitJoinPrebatch T>
T join_multiple(std::vector<T> parts) {
  if (parts.empty()) return T{};
  T acc = std::move(parts.front());
  for (std::size_t i = 1; i < parts.size(); ++i) acc = T::join(std::move(acc), std::move(parts[i]));
  return acc;
}

// Batch executor for split/join-capable ordered maps. One batch runs all
// searches in parallel against the pre-insert tree, then applies all inserts
// by splitting the tree at pivots drawn from the batch, filling the pieces
// in parallel, and rejoining. Deletes are not batched and fail per-op.
//
// Insert callbacks complete at classification time, before the tree mutation
// lands: the whole batch is one linearisation window and nobody can observe
// the tree except through batched operations, so acknowledging early is
// legal. Clients must not read the structure through any side channel.
template <SplitJoinPrebatch T>
class SplitJoinMap {
 public:
  using key_type = typename T::key_type;
  using mapped_type = typename T::mapped_type;
  using Op = MapOp<key_type, mapped_type>;
  using Result = MapResult<mapped_type>;

  SplitJoinMap() = default;
  explicit SplitJoinMap(T tree, ExecutorConfig config = {})
      : tree_(std::move(tree)), config_(config) {}
  explicit SplitJoinMap(ExecutorConfig config) : config_(config) {}

  static Result failed_result() { return {op_status::failed, std::nullopt}; }

  const T& tree() const noexcept { return tree_; }
  const ExecutorConfig& config() const noexcept { return config_; }

  void run_batch(Pool& pool, std::span<BatchedOp<Op, Result>> ops) {
    std::vector<const BatchedOp<Op, Result>*> searches;
    std::vector<std::pair<key_type, mapped_type>> inserts;
    for (const auto& bop : ops) {
      if (const auto* s = std::get_if<MapSearch<key_type>>(&bop.op)) {
        searches.push_back(&bop);
      } else if (const auto* ins = std::get_if<MapInsert<key_type, mapped_type>>(&bop.op)) {
        inserts.emplace_back(ins->key, ins->value);
        bop.complete({op_status::ok, std::nullopt});
      } else {
        bop.complete({op_status::unsupported, std::nullopt});
      }
    }

    const T& snapshot = tree_;  // searches answer against the pre-insert tree
    run_parallel_for(pool, {0, searches.size()}, [&searches, &snapshot](std::size_t i) {
      const auto& key = std::get<MapSearch<key_type>>(searches[i]->op).key;
      searches[i]->complete({op_status::ok, snapshot.search(key)});
    });

    par_insert(pool, std::move(inserts));
  }

  // Applies a batch of inserts. Small batches and small trees take the
  // sequential path; everything else splits at pivots sampled from the
  // batch's leading keys (assumed randomly ordered), fills the disjoint
  // pieces in parallel, and rejoins.
  void par_insert(Pool& pool, std::vector<std::pair<key_type, mapped_type>> inserts) {
    typename T::key_compare cmp{};
    if (inserts.size() < config_.seq_threshold ||
        static_cast<std::size_t>(tree_.size_factor()) < config_.size_factor_threshold) {
      insert_seq(inserts);
      return;
    }

    const std::size_t n = inserts.size() / config_.seq_threshold + 1;
    std::vector<key_type> pivots;
    pivots.reserve(n);
    for (std::size_t i = 0; i < n && i < inserts.size(); ++i) pivots.push_back(inserts[i].first);
    std::sort(pivots.begin(), pivots.end(), cmp);
    pivots.erase(std::unique(pivots.begin(), pivots.end(),
                             [&](const key_type& a, const key_type& b) {
                               return !cmp(a, b) && !cmp(b, a);
                             }),
                 pivots.end());
    if (pivots.size() < 2) {  // not enough distinct pivots to cut anything
      insert_seq(inserts);
      return;
    }

    // Equal keys stay in batch order so the later write wins inside its
    // sub-range.
    std::stable_sort(inserts.begin(), inserts.end(),
                     [&](const auto& a, const auto& b) { return cmp(a.first, b.first); });

    std::vector<T> parts = split_multiple(std::move(tree_), std::span<const key_type>(pivots));
    const std::vector<Range> ranges = partition_by_pivots(
        std::span<const key_type>(pivots),
        std::span<const std::pair<key_type, mapped_type>>(inserts),
        [](const auto& kv) -> const key_type& { return kv.first; }, cmp);

    run_parallel_for(
        pool, {0, parts.size()},
        [&parts, &ranges, &inserts](std::size_t j) {
          for (std::size_t i = ranges[j].begin; i < ranges[j].end; ++i)
            parts[j].insert(inserts[i].first, std::move(inserts[i].second));
        },
        1);

    tree_.set_root(join_multiple(std::move(parts)));
  }

 private:
  void insert_seq(std::vector<std::pair<key_type, mapped_type>>& inserts) {
    for (auto& [k, v] : inserts) tree_.insert(k, std::move(v));
  }

  T tree_{};
  ExecutorConfig config_{};
};

}  // namespace batcherkit
