#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace batcherkit {

// In-place treap. Invariants: BST order on keys, max-heap order on
// priorities (ties allowed), stored height is 1 + max child height.
//
// A key's priority is a fixed 64-bit mix of its hash and the tree's seed, so
// a given key set always settles into the same shape for a given seed, no
// matter the insertion order. The seed is a constructor argument for
// reproducible experiments.
template <class K, class V, class Compare = std::less<K>, class Hash = std::hash<K>>
class Treap {
 public:
  using key_type = K;
  using mapped_type = V;
  using key_compare = Compare;

  struct Node {
    K key;
    V value;
    std::uint64_t priority;
    int height;
    Node* left;
    Node* right;
  };

  Treap() = default;
  explicit Treap(std::uint64_t seed, Compare cmp = Compare(), Hash hash = Hash())
      : cmp_(std::move(cmp)), hash_(std::move(hash)), seed_(seed) {}
  Treap(const Treap&) = delete;
  Treap& operator=(const Treap&) = delete;
  Treap(Treap&& o) noexcept
      : root_(o.root_), cmp_(std::move(o.cmp_)), hash_(std::move(o.hash_)), seed_(o.seed_) {
    o.root_ = nullptr;
  }
  Treap& operator=(Treap&& o) noexcept {
    if (this != &o) {
      destroy(root_);
      root_ = o.root_;
      cmp_ = std::move(o.cmp_);
      hash_ = std::move(o.hash_);
      seed_ = o.seed_;
      o.root_ = nullptr;
    }
    return *this;
  }
  ~Treap() { destroy(root_); }

  bool empty() const noexcept { return root_ == nullptr; }

  std::uint64_t seed() const noexcept { return seed_; }

  int size_factor() const noexcept { return h(root_); }

  std::uint64_t priority_of(const K& k) const { return mix64(hash_(k) ^ seed_); }

  std::optional<V> search(const K& k) const {
    const Node* n = root_;
    while (n) {
      if (cmp_(k, n->key))
        n = n->left;
      else if (cmp_(n->key, k))
        n = n->right;
      else
        return n->value;
    }
    return std::nullopt;
  }

  void insert(const K& k, V v) { root_ = ins(root_, k, std::move(v)); }

  // Absent key: no-op.
  void erase(const K& k) { root_ = del(root_, k); }

  void clear() {
    destroy(root_);
    root_ = nullptr;
  }

  // Key partition: left gets keys < k, right gets keys >= k.
  static std::pair<Treap, Treap> split(Treap t, const K& k) {
    Node* root = t.root_;
    t.root_ = nullptr;
    auto [l, r] = split_rec(root, k, t.cmp_);
    Treap lt(t.seed_, t.cmp_, t.hash_), rt(t.seed_, t.cmp_, t.hash_);
    lt.root_ = l;
    rt.root_ = r;
    return {std::move(lt), std::move(rt)};
  }

  // Pre: every key of a < every key of b (either may be empty).
  static Treap join(Treap a, Treap b) {
    if (a.root_ && b.root_ && !a.cmp_(max_node(a.root_)->key, min_node(b.root_)->key))
      throw std::logic_error("Treap::join: key ranges overlap");
    Treap out(b.root_ ? b.seed_ : a.seed_, b.cmp_, b.hash_);
    out.root_ = merge(a.root_, b.root_);
    a.root_ = nullptr;
    b.root_ = nullptr;
    return out;
  }

  void set_root(Treap other) { *this = std::move(other); }

  std::optional<K> min_key() const {
    return root_ ? std::optional<K>(min_node(root_)->key) : std::nullopt;
  }
  std::optional<K> max_key() const {
    return root_ ? std::optional<K>(max_node(root_)->key) : std::nullopt;
  }

  std::vector<std::pair<K, V>> items() const {
    std::vector<std::pair<K, V>> out;
    walk(root_, out);
    return out;
  }

  bool validate(std::string* diag = nullptr) const {
    return check(root_, nullptr, nullptr, nullptr, diag) >= 0;
  }

  const Node* root() const noexcept { return root_; }

  // Test support: adopt a hand-built node graph without checking invariants.
  static Treap adopt_unchecked(Node* root) {
    Treap t;
    t.root_ = root;
    return t;
  }

 private:
  Node* root_ = nullptr;
  Compare cmp_{};
  Hash hash_{};
  std::uint64_t seed_ = 0x9e3779b97f4a7c15ull;

  // Finalizer-style 64-bit mixer; full avalanche, zero maps away from zero.
  static std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  static int h(const Node* n) noexcept { return n ? n->height : 0; }
  static void fix_h(Node* n) noexcept {
    n->height = 1 + (h(n->left) > h(n->right) ? h(n->left) : h(n->right));
  }

  static Node* min_node(Node* n) {
    while (n->left) n = n->left;
    return n;
  }
  static Node* max_node(Node* n) {
    while (n->right) n = n->right;
    return n;
  }

  static void destroy(Node* n) {
    if (!n) return;
    destroy(n->left);
    destroy(n->right);
    delete n;
  }

  static void walk(const Node* n, std::vector<std::pair<K, V>>& out) {
    if (!n) return;
    walk(n->left, out);
    out.emplace_back(n->key, n->value);
    walk(n->right, out);
  }

  Node* ins(Node* n, const K& k, V&& v) {
    if (!n) return new Node{k, std::move(v), priority_of(k), 1, nullptr, nullptr};
    if (cmp_(k, n->key)) {
      n->left = ins(n->left, k, std::move(v));
      if (n->left->priority > n->priority) {
        Node* x = n->left;
        n->left = x->right;
        x->right = n;
        fix_h(n);
        fix_h(x);
        return x;
      }
    } else if (cmp_(n->key, k)) {
      n->right = ins(n->right, k, std::move(v));
      if (n->right->priority > n->priority) {
        Node* x = n->right;
        n->right = x->left;
        x->left = n;
        fix_h(n);
        fix_h(x);
        return x;
      }
    } else {
      n->value = std::move(v);
      return n;
    }
    fix_h(n);
    return n;
  }

  Node* del(Node* n, const K& k) {
    if (!n) return nullptr;
    if (cmp_(k, n->key))
      n->left = del(n->left, k);
    else if (cmp_(n->key, k))
      n->right = del(n->right, k);
    else {
      Node* m = merge(n->left, n->right);
      delete n;
      return m;
    }
    fix_h(n);
    return n;
  }

  // Pre: every key of a < every key of b. Heap order picks the root.
  static Node* merge(Node* a, Node* b) {
    if (!a) return b;
    if (!b) return a;
    if (a->priority >= b->priority) {
      a->right = merge(a->right, b);
      fix_h(a);
      return a;
    }
    b->left = merge(a, b->left);
    fix_h(b);
    return b;
  }

  static std::pair<Node*, Node*> split_rec(Node* t, const K& k, const Compare& cmp) {
    if (!t) return {nullptr, nullptr};
    if (cmp(t->key, k)) {  // t->key < k: t and its left side stay left
      auto [l2, r2] = split_rec(t->right, k, cmp);
      t->right = l2;
      fix_h(t);
      return {t, r2};
    }
    auto [l1, r1] = split_rec(t->left, k, cmp);  // k <= t->key: t stays right
    t->left = r1;
    fix_h(t);
    return {l1, t};
  }

  // Returns the height, or -1 on any violation.
  int check(const Node* n, const Node* parent, const K* lo, const K* hi,
            std::string* diag) const {
    if (!n) return 0;
    if ((lo && !cmp_(*lo, n->key)) || (hi && !cmp_(n->key, *hi))) {
      if (diag) *diag = "BST order violated";
      return -1;
    }
    if (parent && n->priority > parent->priority) {
      if (diag) *diag = "child priority exceeds parent priority";
      return -1;
    }
    if (n->priority != priority_of(n->key)) {
      if (diag) *diag = "priority differs from the seed-derived value";
      return -1;
    }
    const int lh = check(n->left, n, lo, &n->key, diag);
    if (lh < 0) return -1;
    const int rh = check(n->right, n, &n->key, hi, diag);
    if (rh < 0) return -1;
    const int here = 1 + (lh > rh ? lh : rh);
    if (n->height != here) {
      if (diag) *diag = "stored height differs from recomputed";
      return -1;
    }
    return here;
  }
};

}  // namespace batcherkit
