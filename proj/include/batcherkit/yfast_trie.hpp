#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "batcherkit/rb_tree.hpp"
#include "batcherkit/xfast_trie.hpp"

namespace batcherkit {

// Y-fast trie: an x-fast trie over representative keys routes each key to a
// red-black tree bucket of at most 2*log2(u) keys. A key belongs to the
// bucket of the greatest representative at or below it; keys below the
// smallest representative fall into the first bucket. Representatives are
// routing values only, so deletes never have to re-key the top structure
// unless a bucket empties out.
//
// Batch support: expose returns the representatives routing the seeds,
// minus the smallest one, so each bucket is owned by exactly one pivot
// range. insert_range only grows buckets, never splitting and never writing
// the shared top structure; repair then splits every oversized bucket.
class YFastTrie {
 public:
  using key_type = std::uint64_t;
  using aux_type = std::monostate;

  explicit YFastTrie(key_type universe)
      : top_(universe),
        u_(universe),
        threshold_(2 * static_cast<std::size_t>(std::countr_zero(universe))) {}
  YFastTrie(YFastTrie&&) noexcept = default;
  YFastTrie& operator=(YFastTrie&&) noexcept = default;

  key_type universe() const noexcept { return u_; }
  bool empty() const noexcept { return buckets_.empty(); }
  std::size_t bucket_threshold() const noexcept { return threshold_; }

  bool mem(key_type k) const {
    check_key(k);
    if (buckets_.empty()) return false;
    return buckets_.at(route(k)).tree.search(k).has_value();
  }

  void insert(key_type k) {
    check_key(k);
    if (buckets_.empty()) {
      top_.insert(k);
      Bucket b;
      b.tree.insert(k, {});
      b.n = 1;
      buckets_.emplace(k, std::move(b));
      return;
    }
    const key_type r = route(k);
    Bucket& b = buckets_.at(r);
    if (b.tree.search(k)) return;
    b.tree.insert(k, {});
    ++b.n;
    if (b.n > threshold_) split_bucket(r);
  }

  // Absent key: no-op. An emptied bucket retires its representative.
  void erase(key_type k) {
    check_key(k);
    if (buckets_.empty()) return;
    const key_type r = route(k);
    Bucket& b = buckets_.at(r);
    if (!b.tree.search(k)) return;
    b.tree.erase(k);
    --b.n;
    if (b.n == 0) {
      buckets_.erase(r);
      top_.erase(r);
    }
  }

  // Greatest member < k.
  std::optional<key_type> predecessor(key_type k) const {
    check_key(k);
    if (buckets_.empty()) return std::nullopt;
    const key_type r = route(k);
    if (auto p = buckets_.at(r).tree.predecessor_key(k)) return p;
    if (auto prev = top_.predecessor(r)) return buckets_.at(*prev).tree.max_key();
    return std::nullopt;
  }

  // Least member > k.
  std::optional<key_type> successor(key_type k) const {
    check_key(k);
    if (buckets_.empty()) return std::nullopt;
    const key_type r = route(k);
    if (auto s = buckets_.at(r).tree.successor_key(k)) return s;
    if (auto next = top_.successor(r)) return buckets_.at(*next).tree.min_key();
    return std::nullopt;
  }

  // Routes each seed to its representative and drops the smallest one, so
  // the leading pivot range keeps the first bucket to itself. The structure
  // is not modified.
  std::pair<std::vector<key_type>, aux_type> expose(std::span<const key_type> seeds) {
    std::vector<key_type> pivots;
    if (buckets_.empty() || seeds.empty()) return {std::move(pivots), {}};
    const key_type first = *top_.min_key();
    for (key_type s : seeds) {
      check_key(s);
      const key_type r = route(s);
      if (r == first) continue;
      if (pivots.empty() || pivots.back() != r) pivots.push_back(r);
    }
    for (std::size_t i = 1; i < pivots.size(); ++i)
      if (pivots[i - 1] >= pivots[i])
        throw std::logic_error("YFastTrie::expose: seeds must be sorted");
    return {std::move(pivots), {}};
  }

  // Grows buckets without splitting and without writing the top structure,
  // so ranges owning disjoint bucket sets can run concurrently. An empty
  // trie (necessarily a single range) bootstraps one bucket first.
  void insert_range(std::span<const key_type> keys, const aux_type&) {
    if (keys.empty()) return;
    if (buckets_.empty()) {
      check_key(keys.front());
      top_.insert(keys.front());
      buckets_.emplace(keys.front(), Bucket{});
    }
    for (key_type k : keys) {
      check_key(k);
      Bucket& b = buckets_.at(route(k));
      if (b.tree.search(k)) continue;
      b.tree.insert(k, {});
      ++b.n;
    }
  }

  // Splits every bucket the batch pushed past the threshold.
  void repair(const aux_type&) {
    std::vector<key_type> oversize;
    do {
      oversize.clear();
      for (const auto& [rep, b] : buckets_)
        if (b.n > threshold_) oversize.push_back(rep);
      for (key_type rep : oversize) split_bucket(rep);
    } while (!oversize.empty());
  }

  // All members in ascending order.
  std::vector<key_type> items() const {
    std::vector<key_type> out;
    for (key_type rep : top_.items())
      for (const auto& [k, v] : buckets_.at(rep).tree.items()) out.push_back(k);
    return out;
  }

  bool validate(std::string* diag = nullptr) const {
    if (!top_.validate(diag)) return false;
    const auto reps = top_.items();
    if (reps.size() != buckets_.size())
      return fail(diag, "representative set differs from bucket set");
    for (std::size_t i = 0; i < reps.size(); ++i) {
      const auto it = buckets_.find(reps[i]);
      if (it == buckets_.end()) return fail(diag, "representative has no bucket");
      const Bucket& b = it->second;
      if (!b.tree.validate(diag)) return false;
      const auto keys = b.tree.items();
      if (keys.empty()) return fail(diag, "bucket must not be empty");
      if (keys.size() != b.n) return fail(diag, "bucket size counter drifted");
      if (keys.size() > threshold_) return fail(diag, "bucket exceeds the split threshold");
      if (i > 0 && keys.front().first < reps[i])
        return fail(diag, "bucket key below its representative");
      const key_type upper = (i + 1 < reps.size()) ? reps[i + 1] : u_;
      if (keys.back().first >= upper)
        return fail(diag, "bucket key reaches into the next bucket");
    }
    return true;
  }

 private:
  using Rb = RBTree<key_type, std::monostate>;
  struct Bucket {
    Rb tree;
    std::size_t n = 0;
  };

  XFastTrie top_;
  std::unordered_map<key_type, Bucket> buckets_;
  key_type u_;
  std::size_t threshold_;

  void check_key(key_type k) const {
    if (k >= u_) throw std::out_of_range("YFastTrie: key outside universe");
  }

  // Pre: at least one bucket. Keys below the first representative route to
  // the first bucket.
  key_type route(key_type k) const {
    if (top_.mem(k)) return k;
    if (auto p = top_.predecessor(k)) return *p;
    return *top_.successor(k);
  }

  // One split at the median. The high half is always keyed by the median,
  // its smallest key. Only the first bucket can hold keys below its
  // representative; when the median lands at or below the representative the
  // old key is retired and the low half becomes a new first bucket keyed by
  // its minimum.
  void split_bucket(key_type rep) {
    auto node = buckets_.extract(rep);
    const auto keys = node.mapped().tree.items();
    const std::size_t lo_n = keys.size() / 2;
    const key_type median = keys[lo_n].first;
    auto [lo, hi] = Rb::split(std::move(node.mapped().tree), median);
    if (median > rep) {
      buckets_.emplace(rep, Bucket{std::move(lo), lo_n});
    } else {
      if (median != rep) top_.erase(rep);
      const key_type lo_rep = keys.front().first;
      top_.insert(lo_rep);
      buckets_.emplace(lo_rep, Bucket{std::move(lo), lo_n});
    }
    top_.insert(median);
    buckets_.emplace(median, Bucket{std::move(hi), keys.size() - lo_n});
  }

  static bool fail(std::string* diag, const char* what) {
    if (diag) *diag = what;
    return false;
  }
};

}  // namespace batcherkit
