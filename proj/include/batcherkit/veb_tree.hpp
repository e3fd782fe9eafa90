#pragma once

#include <bit>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace batcherkit {

// Van Emde Boas tree over a power-of-two universe [0, u). Each node splits
// its universe into upper_sqrt(u) clusters of lower_sqrt(u) keys plus a
// summary holding the indices of non-empty clusters. The min field holds its
// key exclusively (the key is not stored below); max is metadata duplicated
// below, except in base-case nodes (u == 2) which have no children at all.
// Clusters and summaries allocate lazily.
//
// Batch support: expose maps seed keys to the minimum key of their root
// cluster, so order-partitioned sub-batches can never target the same
// cluster. insert_range inserts below the root, leaving root min/max/summary
// untouched; repair then recomputes exactly those three.
class VebTree {
 public:
  using key_type = std::uint64_t;
  using aux_type = std::monostate;

  explicit VebTree(key_type universe) {
    if (universe < 2 || !std::has_single_bit(universe))
      throw std::invalid_argument("VebTree: universe must be a power of two >= 2");
    root_ = std::make_unique<Node>(universe);
  }
  VebTree(VebTree&&) noexcept = default;
  VebTree& operator=(VebTree&&) noexcept = default;

  key_type universe() const noexcept { return root_->u; }
  bool empty() const noexcept { return !root_->min.has_value(); }

  bool mem(key_type k) const {
    check_key(k);
    return node_mem(*root_, k);
  }

  void insert(key_type k) {
    check_key(k);
    node_insert(*root_, k);
  }

  // Absent key: no-op.
  void erase(key_type k) {
    check_key(k);
    if (node_mem(*root_, k)) node_erase(*root_, k);
  }

  // Greatest member < k.
  std::optional<key_type> predecessor(key_type k) const {
    check_key(k);
    return node_pred(*root_, k);
  }

  // Least member > k.
  std::optional<key_type> successor(key_type k) const {
    check_key(k);
    return node_succ(*root_, k);
  }

  // Maps each seed to the minimum key of its root cluster and deduplicates;
  // the structure is not modified. Sub-batches partitioned by these pivots
  // target disjoint root clusters. A base-case universe has one chunk.
  std::pair<std::vector<key_type>, aux_type> expose(std::span<const key_type> seeds) {
    std::vector<key_type> pivots;
    if (root_->u == 2) {
      if (!seeds.empty()) pivots.push_back(0);
      return {std::move(pivots), {}};
    }
    const key_type lo_sqrt = lower_sqrt(root_->u);
    for (key_type s : seeds) {
      check_key(s);
      const key_type p = (s / lo_sqrt) * lo_sqrt;
      if (pivots.empty() || pivots.back() != p) pivots.push_back(p);
    }
    for (std::size_t i = 1; i < pivots.size(); ++i)
      if (pivots[i - 1] >= pivots[i])
        throw std::logic_error("VebTree::expose: seeds must be sorted");
    return {std::move(pivots), {}};
  }

  // Sequentially inserts keys into their clusters without touching root
  // min/max/summary. Safe to run concurrently with other insert_range calls
  // whose keys target disjoint root clusters.
  void insert_range(std::span<const key_type> keys, const aux_type&) {
    Node& r = *root_;
    if (r.u == 2) {  // base case owns no clusters; only one chunk can exist
      for (key_type k : keys) {
        check_key(k);
        node_insert(r, k);
      }
      return;
    }
    for (key_type k : keys) {
      check_key(k);
      const key_type h = high(r, k);
      Node& c = ensure_cluster(r, h);
      if (!c.min) {
        c.min = c.max = low(r, k);
      } else {
        node_insert(c, low(r, k));
      }
    }
  }

  // Restores root min, max, and summary after insert_range calls. The
  // clusters themselves are already valid; only root metadata is stale.
  void repair(const aux_type&) {
    Node& r = *root_;
    if (r.u == 2) return;

    // The true minimum may sit inside a cluster; min holds its key
    // exclusively, so pull it out and push any displaced old min back down.
    const auto below = first_nonempty_cluster(r);
    if (below) {
      const key_type cluster_min = index_of(r, below->first, *r.cluster[below->first]->min);
      if (!r.min || cluster_min < *r.min) {
        node_erase(*r.cluster[below->first], *r.cluster[below->first]->min);
        std::optional<key_type> displaced = r.min;
        r.min = cluster_min;
        if (displaced) {
          const key_type h = high(r, *displaced);
          Node& c = ensure_cluster(r, h);
          if (!c.min)
            c.min = c.max = low(r, *displaced);
          else
            node_insert(c, low(r, *displaced));
        }
      }
    }
    // A batch may have re-inserted the root min below the root; evict the
    // duplicate so min stays exclusive.
    if (r.min) {
      Node* dup = r.cluster[static_cast<std::size_t>(high(r, *r.min))].get();
      if (dup && node_mem(*dup, low(r, *r.min))) node_erase(*dup, low(r, *r.min));
    }

    r.summary.reset();
    r.max = r.min;
    for (std::size_t i = 0; i < r.cluster.size(); ++i) {
      if (!r.cluster[i] || !r.cluster[i]->min) continue;
      if (!r.summary) r.summary = std::make_unique<Node>(upper_sqrt(r.u));
      node_insert(*r.summary, static_cast<key_type>(i));
      r.max = index_of(r, static_cast<key_type>(i), *r.cluster[i]->max);
    }
  }

  // All members in ascending order; test and oracle plumbing.
  std::vector<key_type> items() const {
    std::vector<key_type> out;
    collect(*root_, 0, out);
    return out;
  }

  // Root-level layout introspection for tests and diagnostics.
  std::optional<key_type> root_min() const { return root_->min; }
  std::optional<key_type> root_max() const { return root_->max; }
  std::optional<key_type> cluster_min(key_type h) const {
    if (root_->u == 2 || h >= root_->cluster.size()) return std::nullopt;
    const Node* c = cluster_at(*root_, h);
    return c ? c->min : std::nullopt;
  }
  std::optional<key_type> cluster_max(key_type h) const {
    if (root_->u == 2 || h >= root_->cluster.size()) return std::nullopt;
    const Node* c = cluster_at(*root_, h);
    return c ? c->max : std::nullopt;
  }
  std::vector<key_type> summary_items() const {
    std::vector<key_type> out;
    if (root_->summary) collect(*root_->summary, 0, out);
    return out;
  }

  bool validate(std::string* diag = nullptr) const { return check(*root_, diag); }

 private:
  struct Node {
    explicit Node(key_type universe) : u(universe) {
      if (u > 2) cluster.resize(upper_sqrt(u));
    }
    key_type u;
    std::optional<key_type> min;
    std::optional<key_type> max;
    std::vector<std::unique_ptr<Node>> cluster;
    std::unique_ptr<Node> summary;
  };

  std::unique_ptr<Node> root_;

  void check_key(key_type k) const {
    if (k >= root_->u) throw std::out_of_range("VebTree: key outside universe");
  }

  static int bits(key_type u) noexcept { return std::countr_zero(u); }
  static key_type lower_sqrt(key_type u) noexcept {
    return key_type{1} << (bits(u) / 2);
  }
  static key_type upper_sqrt(key_type u) noexcept {
    return key_type{1} << ((bits(u) + 1) / 2);
  }
  static key_type high(const Node& n, key_type k) noexcept { return k / lower_sqrt(n.u); }
  static key_type low(const Node& n, key_type k) noexcept { return k % lower_sqrt(n.u); }
  static key_type index_of(const Node& n, key_type h, key_type l) noexcept {
    return h * lower_sqrt(n.u) + l;
  }

  static Node& ensure_cluster(Node& n, key_type h) {
    auto& slot = n.cluster[static_cast<std::size_t>(h)];
    if (!slot) slot = std::make_unique<Node>(lower_sqrt(n.u));
    return *slot;
  }

  static const Node* cluster_at(const Node& n, key_type h) {
    return n.cluster[static_cast<std::size_t>(h)].get();
  }

  static std::optional<std::pair<key_type, const Node*>> first_nonempty_cluster(const Node& n) {
    for (std::size_t i = 0; i < n.cluster.size(); ++i)
      if (n.cluster[i] && n.cluster[i]->min)
        return std::make_pair(static_cast<key_type>(i), n.cluster[i].get());
    return std::nullopt;
  }

  static bool node_mem(const Node& n, key_type k) {
    if (n.min == k || n.max == k) return true;
    if (n.u == 2) return false;
    const Node* c = cluster_at(n, high(n, k));
    return c && node_mem(*c, low(n, k));
  }

  static void node_insert(Node& n, key_type k) {
    if (!n.min) {
      n.min = n.max = k;
      return;
    }
    if (k == *n.min) return;
    if (k < *n.min) std::swap(k, *n.min);
    if (n.u > 2) {
      const key_type h = high(n, k);
      Node& c = ensure_cluster(n, h);
      if (!c.min) {
        if (!n.summary) n.summary = std::make_unique<Node>(upper_sqrt(n.u));
        node_insert(*n.summary, h);
        c.min = c.max = low(n, k);
      } else {
        node_insert(c, low(n, k));
      }
    }
    if (k > *n.max) n.max = k;
  }

  // Pre: k is a member of n.
  static void node_erase(Node& n, key_type k) {
    if (n.min == n.max) {
      n.min.reset();
      n.max.reset();
      return;
    }
    if (n.u == 2) {
      n.min = (k == 0) ? key_type{1} : key_type{0};
      n.max = n.min;
      return;
    }
    if (k == *n.min) {  // promote the second-smallest key into min
      const key_type first = *n.summary->min;
      k = index_of(n, first, *cluster_at(n, first)->min);
      n.min = k;
    }
    Node& c = *n.cluster[static_cast<std::size_t>(high(n, k))];
    node_erase(c, low(n, k));
    if (!c.min) {
      node_erase(*n.summary, high(n, k));
      if (k == *n.max) {
        if (!n.summary->max) {
          n.max = n.min;
        } else {
          const key_type last = *n.summary->max;
          n.max = index_of(n, last, *cluster_at(n, last)->max);
        }
      }
    } else if (k == *n.max) {
      n.max = index_of(n, high(n, k), *c.max);
    }
  }

  static std::optional<key_type> node_succ(const Node& n, key_type k) {
    if (n.u == 2) {
      if (k == 0 && n.max == 1) return 1;
      return std::nullopt;
    }
    if (n.min && k < *n.min) return n.min;
    const key_type h = high(n, k);
    const Node* c = cluster_at(n, h);
    if (c && c->max && low(n, k) < *c->max) {
      return index_of(n, h, *node_succ(*c, low(n, k)));
    }
    if (!n.summary) return std::nullopt;
    const auto next = node_succ(*n.summary, h);
    if (!next) return std::nullopt;
    return index_of(n, *next, *cluster_at(n, *next)->min);
  }

  static std::optional<key_type> node_pred(const Node& n, key_type k) {
    if (n.u == 2) {
      if (k == 1 && n.min == 0) return 0;
      return std::nullopt;
    }
    if (n.max && k > *n.max) return n.max;
    const key_type h = high(n, k);
    const Node* c = cluster_at(n, h);
    if (c && c->min && low(n, k) > *c->min) {
      return index_of(n, h, *node_pred(*c, low(n, k)));
    }
    const auto prev = n.summary ? node_pred(*n.summary, h) : std::nullopt;
    if (!prev) {
      if (n.min && k > *n.min) return n.min;  // min lives outside the clusters
      return std::nullopt;
    }
    return index_of(n, *prev, *cluster_at(n, *prev)->max);
  }

  static void collect(const Node& n, key_type base, std::vector<key_type>& out) {
    if (!n.min) return;
    out.push_back(base + *n.min);
    if (n.u == 2) {
      if (*n.max != *n.min) out.push_back(base + *n.max);
      return;
    }
    for (std::size_t i = 0; i < n.cluster.size(); ++i)
      if (n.cluster[i])
        collect(*n.cluster[i], base + static_cast<key_type>(i) * lower_sqrt(n.u), out);
  }

  static bool fail(std::string* diag, const char* what) {
    if (diag) *diag = what;
    return false;
  }

  static bool check(const Node& n, std::string* diag) {
    if (n.min.has_value() != n.max.has_value())
      return fail(diag, "min and max must be set together");
    if (n.min && (*n.min >= n.u || *n.max >= n.u))
      return fail(diag, "min or max outside node universe");
    if (n.min && *n.min > *n.max) return fail(diag, "min exceeds max");
    if (n.u == 2) {
      if (!n.cluster.empty() || n.summary)
        return fail(diag, "base-case node must not have clusters or a summary");
      return true;
    }
    if (n.cluster.size() != upper_sqrt(n.u)) return fail(diag, "cluster array size mismatch");
    if (!n.min) {
      for (const auto& c : n.cluster)
        if (c && c->min) return fail(diag, "empty node has a non-empty cluster");
      if (n.summary && n.summary->min) return fail(diag, "empty node has a non-empty summary");
      return true;
    }

    std::optional<key_type> below_min, below_max;
    for (std::size_t i = 0; i < n.cluster.size(); ++i) {
      const Node* c = n.cluster[i].get();
      const bool nonempty = c && c->min.has_value();
      const bool in_summary =
          n.summary && n.summary->min && node_mem(*n.summary, static_cast<key_type>(i));
      if (nonempty != in_summary) return fail(diag, "summary disagrees with cluster emptiness");
      if (c && !check(*c, diag)) return false;
      if (nonempty) {
        const key_type lo = index_of(n, static_cast<key_type>(i), *c->min);
        const key_type hi = index_of(n, static_cast<key_type>(i), *c->max);
        if (!below_min) below_min = lo;
        below_max = hi;
      }
    }
    if (n.summary && !check(*n.summary, diag)) return false;
    if (below_min && *n.min >= *below_min)
      return fail(diag, "min must be smaller than every clustered key");
    const key_type expect_max = below_max ? *below_max : *n.min;
    if (*n.max != expect_max) return fail(diag, "max differs from the largest stored key");
    if (n.u > 2 && n.min) {
      const Node* c = cluster_at(n, high(n, *n.min));
      if (c && node_mem(*c, low(n, *n.min)))
        return fail(diag, "min key must not be duplicated in a cluster");
    }
    return true;
  }
};

}  // namespace batcherkit
