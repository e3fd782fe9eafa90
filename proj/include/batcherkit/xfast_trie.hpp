#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace batcherkit {

// X-fast trie over a power-of-two universe [0, u). One dense array per level:
// level d holds the 2^d prefixes of length d, level B = log2(u) holds the
// leaves. Leaves form a sorted doubly-linked list. An internal node missing
// its left child points at the minimum leaf of its right subtree; missing its
// right child, at the maximum leaf of its left subtree. Queries binary-search
// the levels for the deepest present prefix, then follow one descendant
// pointer and at most one leaf link.
//
// Batch support: expose picks a level L from the seed count, marks every node
// on levels 0..L present, and severs the leaf links that cross the returned
// pivots. Sub-batches then insert strictly inside disjoint level-L subtrees,
// never touching shared levels above L. repair recomputes presence and
// descendant pointers for levels 0..L and restitches the leaf list at the
// pivots.
class XFastTrie {
 public:
  using key_type = std::uint64_t;

  struct ExposeFrame {
    int level = 0;                  // 0 = single chunk, no shared state split
    std::vector<key_type> pivots;   // severed chunk boundaries, ascending
  };
  using aux_type = ExposeFrame;

  explicit XFastTrie(key_type universe) : u_(universe) {
    if (universe < 2 || !std::has_single_bit(universe))
      throw std::invalid_argument("XFastTrie: universe must be a power of two >= 2");
    bits_ = std::countr_zero(universe);
    present_.resize(bits_);
    desc_.resize(bits_);
    for (int d = 0; d < bits_; ++d) {
      present_[d].assign(std::size_t{1} << d, 0);
      desc_[d].assign(std::size_t{1} << d, npos);
    }
    leaf_present_.assign(universe, 0);
    leaf_prev_.assign(universe, npos);
    leaf_next_.assign(universe, npos);
  }
  XFastTrie(XFastTrie&&) noexcept = default;
  XFastTrie& operator=(XFastTrie&&) noexcept = default;

  key_type universe() const noexcept { return u_; }
  bool empty() const noexcept { return !present_[0][0]; }

  bool mem(key_type k) const {
    check_key(k);
    return leaf_present_[k] != 0;
  }

  void insert(key_type k) {
    check_key(k);
    if (leaf_present_[k]) return;
    const auto before = predecessor(k);
    const auto after = successor(k);
    insert_with_floor(k, 0, opt_to_npos(before), opt_to_npos(after));
  }

  // Absent key: no-op.
  void erase(key_type k) {
    check_key(k);
    if (!leaf_present_[k]) return;
    const key_type before = leaf_prev_[k];
    const key_type after = leaf_next_[k];
    if (before != npos) leaf_next_[before] = after;
    if (after != npos) leaf_prev_[after] = before;
    leaf_present_[k] = 0;
    leaf_prev_[k] = leaf_next_[k] = npos;
    for (int d = bits_ - 1; d >= 0; --d) {
      const key_type p = k >> (bits_ - d);
      const bool c0 = present_at(d + 1, 2 * p);
      const bool c1 = present_at(d + 1, 2 * p + 1);
      if (!c0 && !c1) {
        present_[d][p] = 0;
        desc_[d][p] = npos;
      } else if (c0 && c1) {
        desc_[d][p] = npos;
      } else if (c1) {
        desc_[d][p] = min_leaf(d + 1, 2 * p + 1);
      } else {
        desc_[d][p] = max_leaf(d + 1, 2 * p);
      }
    }
  }

  // Greatest member < k.
  std::optional<key_type> predecessor(key_type k) const {
    check_key(k);
    if (leaf_present_[k]) return npos_to_opt(leaf_prev_[k]);
    if (empty()) return std::nullopt;
    const auto [d, p] = deepest_present(k, 0);
    const key_type dsc = desc_[d][p];
    const key_type bit = (k >> (bits_ - d - 1)) & 1;
    if (bit == 1) return dsc;              // max leaf of the left subtree
    return npos_to_opt(leaf_prev_[dsc]);   // dsc is the min leaf above k
  }

  // Least member > k.
  std::optional<key_type> successor(key_type k) const {
    check_key(k);
    if (leaf_present_[k]) return npos_to_opt(leaf_next_[k]);
    if (empty()) return std::nullopt;
    const auto [d, p] = deepest_present(k, 0);
    const key_type dsc = desc_[d][p];
    const key_type bit = (k >> (bits_ - d - 1)) & 1;
    if (bit == 0) return dsc;              // min leaf of the right subtree
    return npos_to_opt(leaf_next_[dsc]);   // dsc is the max leaf below k
  }

  // Picks level L from the seed count, maps each seed to the minimum key of
  // its level-L subtree, severs leaf links crossing those pivots, and marks
  // all nodes on levels 0..L present so sub-batches never write above L.
  std::pair<std::vector<key_type>, aux_type> expose(std::span<const key_type> seeds) {
    aux_type frame;
    if (seeds.empty() || bits_ < 2) {
      if (!seeds.empty()) frame.pivots.push_back(0);
      return {frame.pivots, std::move(frame)};
    }
    const int level =
        std::clamp(static_cast<int>(std::bit_width(seeds.size())), 1, bits_ - 1);
    const int shift = bits_ - level;
    for (key_type s : seeds) {
      check_key(s);
      const key_type p = (s >> shift) << shift;
      if (frame.pivots.empty() || frame.pivots.back() != p) frame.pivots.push_back(p);
    }
    for (std::size_t i = 1; i < frame.pivots.size(); ++i)
      if (frame.pivots[i - 1] >= frame.pivots[i])
        throw std::logic_error("XFastTrie::expose: seeds must be sorted");
    frame.level = level;

    // Boundary pairs are computed on the untouched structure, then severed.
    std::vector<std::pair<key_type, key_type>> cuts;
    for (key_type p : frame.pivots) {
      if (p == 0) continue;
      const key_type left = opt_to_npos(predecessor(p));
      const key_type right = leaf_present_[p] ? p : opt_to_npos(successor(p));
      cuts.emplace_back(left, right);
    }
    for (auto [left, right] : cuts) {
      if (left != npos) leaf_next_[left] = npos;
      if (right != npos) leaf_prev_[right] = npos;
    }
    for (int d = 0; d <= level; ++d)
      std::fill(present_[d].begin(), present_[d].end(), std::uint8_t{1});
    return {frame.pivots, std::move(frame)};
  }

  // Inserts sorted keys belonging to one pivot range. Writes stay inside the
  // range's level-L subtrees and its stretch of the leaf list; shared levels
  // above L are never modified.
  void insert_range(std::span<const key_type> keys, const aux_type& frame) {
    if (keys.empty()) return;
    if (frame.level == 0) {
      for (key_type k : keys) insert(k);
      return;
    }
    const int level = frame.level;
    const int shift = bits_ - level;
    // Subtree span owned by this range, from the pivot bracket around keys[0].
    auto it = std::upper_bound(frame.pivots.begin(), frame.pivots.end(), keys.front());
    const key_type lo = (it == frame.pivots.begin()) ? 0 : *std::prev(it);
    const key_type hi = (it == frame.pivots.end()) ? u_ : *it;
    const key_type sub_lo = lo >> shift;
    const key_type sub_hi = ((hi - 1) >> shift) + 1;

    for (key_type k : keys) {
      check_key(k);
      if (k < lo || k >= hi)
        throw std::logic_error("XFastTrie::insert_range: key outside its pivot range");
      if (leaf_present_[k]) continue;
      const key_type sub = k >> shift;
      key_type before = npos;
      key_type after = npos;
      const auto [d, p] = deepest_present(k, level);
      if (d > level || present_at(level + 1, 2 * sub) || present_at(level + 1, 2 * sub + 1)) {
        const key_type dsc = desc_[d][p];
        const key_type bit = (k >> (bits_ - d - 1)) & 1;
        if (bit == 1) {
          before = dsc;
          after = leaf_next_[dsc];
        } else {
          after = dsc;
          before = leaf_prev_[dsc];
        }
      } else {
        // Empty subtree: nearest neighbours live in sibling subtrees of the
        // same range, reachable without reading any other range's state.
        for (key_type j = sub; j-- > sub_lo;) {
          if (!present_at(level + 1, 2 * j) && !present_at(level + 1, 2 * j + 1)) continue;
          before = max_leaf(level, j);
          after = leaf_next_[before];
          break;
        }
        if (before == npos) {
          for (key_type j = sub + 1; j < sub_hi; ++j) {
            if (!present_at(level + 1, 2 * j) && !present_at(level + 1, 2 * j + 1)) continue;
            after = min_leaf(level, j);
            break;
          }
        }
      }
      insert_with_floor(k, level, before, after);
    }
  }

  // Recomputes presence and descendant pointers on levels 0..L, dropping the
  // nodes expose marked that gained no descendants, then restitches the leaf
  // list across each pivot.
  void repair(const aux_type& frame) {
    if (frame.level == 0) return;
    for (int d = frame.level; d >= 0; --d) {
      auto& level = present_[d];
      for (std::size_t p = 0; p < level.size(); ++p) {
        const bool c0 = present_at(d + 1, 2 * p);
        const bool c1 = present_at(d + 1, 2 * p + 1);
        level[p] = (c0 || c1) ? 1 : 0;
        if (c0 && !c1)
          desc_[d][p] = max_leaf(d + 1, 2 * p);
        else if (c1 && !c0)
          desc_[d][p] = min_leaf(d + 1, 2 * p + 1);
        else
          desc_[d][p] = npos;
      }
    }
    for (key_type p : frame.pivots) {
      if (p == 0) continue;
      const key_type left = floor_leaf_by_tree(p - 1);
      const key_type right = ceil_leaf_by_tree(p);
      if (left != npos) leaf_next_[left] = right;
      if (right != npos) leaf_prev_[right] = left;
    }
  }

  std::optional<key_type> min_key() const {
    if (empty()) return std::nullopt;
    return min_leaf(0, 0);
  }
  std::optional<key_type> max_key() const {
    if (empty()) return std::nullopt;
    return max_leaf(0, 0);
  }

  // All members in ascending order.
  std::vector<key_type> items() const {
    std::vector<key_type> out;
    key_type k = empty() ? npos : min_leaf(0, 0);
    while (k != npos) {
      out.push_back(k);
      k = leaf_next_[k];
    }
    return out;
  }

  bool validate(std::string* diag = nullptr) const {
    for (int d = bits_ - 1; d >= 0; --d) {
      for (std::size_t p = 0; p < present_[d].size(); ++p) {
        const bool c0 = present_at(d + 1, 2 * p);
        const bool c1 = present_at(d + 1, 2 * p + 1);
        if (!present_[d][p]) {
          if (c0 || c1) return fail(diag, "absent node has a present child");
          if (desc_[d][p] != npos)
            return fail(diag, "absent node keeps a descendant pointer");
          continue;
        }
        if (!c0 && !c1) return fail(diag, "present node has no descendants");
        if (c0 && c1) {
          if (desc_[d][p] != npos)
            return fail(diag, "full node keeps a descendant pointer");
        } else {
          const key_type want = c1 ? min_leaf(d + 1, 2 * p + 1) : max_leaf(d + 1, 2 * p);
          if (desc_[d][p] != want)
            return fail(diag, "descendant pointer misses the extreme leaf");
        }
      }
    }
    key_type prev = npos;
    for (key_type k = 0; k < u_; ++k) {
      if (!leaf_present_[k]) continue;
      if (leaf_prev_[k] != prev) return fail(diag, "leaf list prev link broken");
      if (prev != npos && leaf_next_[prev] != k)
        return fail(diag, "leaf list next link broken");
      prev = k;
    }
    if (prev != npos && leaf_next_[prev] != npos)
      return fail(diag, "last leaf must end the list");
    return true;
  }

 private:
  static constexpr key_type npos = std::numeric_limits<key_type>::max();

  key_type u_;
  int bits_;
  // Byte-wide flags: sub-batches flip flags of neighbouring nodes in
  // parallel, which packed bits would turn into data races.
  std::vector<std::vector<std::uint8_t>> present_;
  std::vector<std::vector<key_type>> desc_;
  std::vector<std::uint8_t> leaf_present_;
  std::vector<key_type> leaf_prev_;
  std::vector<key_type> leaf_next_;

  void check_key(key_type k) const {
    if (k >= u_) throw std::out_of_range("XFastTrie: key outside universe");
  }

  static std::optional<key_type> npos_to_opt(key_type k) {
    if (k == npos) return std::nullopt;
    return k;
  }
  static key_type opt_to_npos(std::optional<key_type> k) { return k ? *k : npos; }

  bool present_at(int d, key_type p) const {
    if (d == bits_) return leaf_present_[p] != 0;
    return present_[d][p] != 0;
  }

  key_type min_leaf(int d, key_type p) const {
    while (d < bits_) {
      p = present_at(d + 1, 2 * p) ? 2 * p : 2 * p + 1;
      ++d;
    }
    return p;
  }
  key_type max_leaf(int d, key_type p) const {
    while (d < bits_) {
      p = present_at(d + 1, 2 * p + 1) ? 2 * p + 1 : 2 * p;
      ++d;
    }
    return p;
  }

  // Deepest present node on k's root path, no shallower than `floor`.
  // Presence along the path is monotone, so the levels can be bisected.
  std::pair<int, key_type> deepest_present(key_type k, int floor) const {
    int lo = floor, hi = bits_ - 1;
    while (lo < hi) {
      const int mid = (lo + hi + 1) / 2;
      if (present_at(mid, k >> (bits_ - mid)))
        lo = mid;
      else
        hi = mid - 1;
    }
    return {lo, k >> (bits_ - lo)};
  }

  // Marks k's path from `floor` down, updates descendant pointers with the
  // pre-insert child states, then splices the leaf between its neighbours.
  void insert_with_floor(key_type k, int floor, key_type before, key_type after) {
    for (int d = floor; d < bits_; ++d) {
      const key_type p = k >> (bits_ - d);
      const key_type bit = (k >> (bits_ - d - 1)) & 1;
      if (!present_[d][p]) {
        present_[d][p] = 1;
        desc_[d][p] = k;
        continue;
      }
      const bool toward = present_at(d + 1, 2 * p + bit);
      const bool other = present_at(d + 1, 2 * p + (1 - bit));
      if (!toward && !other) {
        desc_[d][p] = k;  // node pre-marked by expose, first key underneath
      } else if (toward && !other) {
        desc_[d][p] = (bit == 1) ? std::min(desc_[d][p], k) : std::max(desc_[d][p], k);
      } else if (!toward && other) {
        desc_[d][p] = npos;
      }
    }
    leaf_present_[k] = 1;
    leaf_prev_[k] = before;
    leaf_next_[k] = after;
    if (before != npos) leaf_next_[before] = k;
    if (after != npos) leaf_prev_[after] = k;
  }

  // Pure presence-array walks; used by repair when leaf links are still cut.
  key_type floor_leaf_by_tree(key_type k) const {
    if (leaf_present_[k]) return k;
    key_type best_d = npos, best_p = npos;
    for (int d = 0; d < bits_; ++d) {
      const key_type p = k >> (bits_ - d);
      if (!present_[d][p]) break;
      const key_type bit = (k >> (bits_ - d - 1)) & 1;
      if (bit == 1 && present_at(d + 1, 2 * p)) {
        best_d = static_cast<key_type>(d + 1);
        best_p = 2 * p;
      }
      if (!present_at(d + 1, 2 * p + bit)) break;
    }
    if (best_d == npos) return npos;
    return max_leaf(static_cast<int>(best_d), best_p);
  }
  key_type ceil_leaf_by_tree(key_type k) const {
    if (leaf_present_[k]) return k;
    key_type best_d = npos, best_p = npos;
    for (int d = 0; d < bits_; ++d) {
      const key_type p = k >> (bits_ - d);
      if (!present_[d][p]) break;
      const key_type bit = (k >> (bits_ - d - 1)) & 1;
      if (bit == 0 && present_at(d + 1, 2 * p + 1)) {
        best_d = static_cast<key_type>(d + 1);
        best_p = 2 * p + 1;
      }
      if (!present_at(d + 1, 2 * p + bit)) break;
    }
    if (best_d == npos) return npos;
    return min_leaf(static_cast<int>(best_d), best_p);
  }

  static bool fail(std::string* diag, const char* what) {
    if (diag) *diag = what;
    return false;
  }
};

}  // namespace batcherkit
