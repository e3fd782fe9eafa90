#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace batcherkit {

// In-place AVL tree with stored heights. Invariants: BST order, sibling
// heights differ by at most one, stored height is 1 + max child height
// (empty subtree has height 0).
template <class K, class V, class Compare = std::less<K>>
class AVLTree {
 public:
  using key_type = K;
  using mapped_type = V;
  using key_compare = Compare;

  struct Node {
    K key;
    V value;
    int height;
    Node* left;
    Node* right;
  };

  AVLTree() = default;
  explicit AVLTree(Compare cmp) : cmp_(std::move(cmp)) {}
  AVLTree(const AVLTree&) = delete;
  AVLTree& operator=(const AVLTree&) = delete;
  AVLTree(AVLTree&& o) noexcept : root_(o.root_), cmp_(std::move(o.cmp_)) { o.root_ = nullptr; }
  AVLTree& operator=(AVLTree&& o) noexcept {
    if (this != &o) {
      destroy(root_);
      root_ = o.root_;
      cmp_ = std::move(o.cmp_);
      o.root_ = nullptr;
    }
    return *this;
  }
  ~AVLTree() { destroy(root_); }

  bool empty() const noexcept { return root_ == nullptr; }

  int size_factor() const noexcept { return h(root_); }

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
  static std::pair<AVLTree, AVLTree> split(AVLTree t, const K& k) {
    Node* root = t.root_;
    t.root_ = nullptr;
    auto [l, r] = split_rec(root, k, t.cmp_);
    AVLTree lt(t.cmp_), rt(t.cmp_);
    lt.root_ = l;
    rt.root_ = r;
    return {std::move(lt), std::move(rt)};
  }

  // Pre: every key of a < every key of b (either may be empty).
  static AVLTree join(AVLTree a, AVLTree b) {
    if (a.root_ && b.root_ && !a.cmp_(max_node(a.root_)->key, min_node(b.root_)->key))
      throw std::logic_error("AVLTree::join: key ranges overlap");
    if (!a.root_) return b;
    if (!b.root_) return a;
    auto [rest, mid] = split_last(a.root_);
    a.root_ = nullptr;
    AVLTree out(std::move(b.cmp_));
    out.root_ = join_mid(rest, mid, b.root_);
    b.root_ = nullptr;
    return out;
  }

  void set_root(AVLTree other) { *this = std::move(other); }

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
    return check(root_, nullptr, nullptr, diag) >= 0;
  }

  const Node* root() const noexcept { return root_; }

  // Test support: adopt a hand-built node graph without checking invariants.
  static AVLTree adopt_unchecked(Node* root) {
    AVLTree t;
    t.root_ = root;
    return t;
  }

 private:
  Node* root_ = nullptr;
  Compare cmp_{};

  static int h(const Node* n) noexcept { return n ? n->height : 0; }
  static void fix_h(Node* n) noexcept { n->height = 1 + std::max(h(n->left), h(n->right)); }
  static int balance_of(const Node* n) noexcept { return h(n->right) - h(n->left); }

  static Node* min_node(Node* n) {
    while (n->left) n = n->left;
    return n;
  }
  static Node* max_node(Node* n) {
    while (n->right) n = n->right;
    return n;
  }

  static Node* rotate_left(Node* n) {
    Node* x = n->right;
    n->right = x->left;
    x->left = n;
    fix_h(n);
    fix_h(x);
    return x;
  }

  static Node* rotate_right(Node* n) {
    Node* x = n->left;
    n->left = x->right;
    x->right = n;
    fix_h(n);
    fix_h(x);
    return x;
  }

  // Recomputes n's height and restores the balance bound at n. Children must
  // already satisfy it.
  static Node* rebalance(Node* n) {
    fix_h(n);
    const int b = balance_of(n);
    if (b > 1) {
      if (balance_of(n->right) < 0) n->right = rotate_right(n->right);
      return rotate_left(n);
    }
    if (b < -1) {
      if (balance_of(n->left) > 0) n->left = rotate_left(n->left);
      return rotate_right(n);
    }
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
    if (!n) return new Node{k, std::move(v), 1, nullptr, nullptr};
    if (cmp_(k, n->key))
      n->left = ins(n->left, k, std::move(v));
    else if (cmp_(n->key, k))
      n->right = ins(n->right, k, std::move(v));
    else {
      n->value = std::move(v);
      return n;
    }
    return rebalance(n);
  }

  Node* del(Node* n, const K& k) {
    if (!n) return nullptr;
    if (cmp_(k, n->key))
      n->left = del(n->left, k);
    else if (cmp_(n->key, k))
      n->right = del(n->right, k);
    else if (n->left && n->right) {  // swap in the successor, delete it below
      auto [r, kk, vv] = del_min(n->right);
      n->key = std::move(kk);
      n->value = std::move(vv);
      n->right = r;
    } else {
      Node* c = n->left ? n->left : n->right;
      delete n;
      return c;
    }
    return rebalance(n);
  }

  std::tuple<Node*, K, V> del_min(Node* n) {
    if (!n->left) {
      K k = std::move(n->key);
      V v = std::move(n->value);
      Node* c = n->right;
      delete n;
      return {c, std::move(k), std::move(v)};
    }
    auto [l, k, v] = del_min(n->left);
    n->left = l;
    return {rebalance(n), std::move(k), std::move(v)};
  }

  // Join with a middle node by descending the taller side's spine until the
  // heights are within one, attaching mid there, and rebalancing on the way
  // out. `mid`'s key must separate l and r; its children are overwritten.
  static Node* join_mid(Node* l, Node* mid, Node* r) {
    if (h(l) > h(r) + 1) {
      l->right = join_mid(l->right, mid, r);
      return rebalance(l);
    }
    if (h(r) > h(l) + 1) {
      r->left = join_mid(l, mid, r->left);
      return rebalance(r);
    }
    mid->left = l;
    mid->right = r;
    fix_h(mid);
    return mid;
  }

  // Detaches the maximum node; the remainder stays a valid tree.
  static std::pair<Node*, Node*> split_last(Node* t) {
    if (!t->right) {
      Node* rest = t->left;
      t->left = nullptr;
      fix_h(t);
      return {rest, t};
    }
    auto [r_rest, m] = split_last(t->right);
    t->right = nullptr;
    Node* rest = join_mid(t->left, t, r_rest);
    return {rest, m};
  }

  static std::pair<Node*, Node*> split_rec(Node* t, const K& k, const Compare& cmp) {
    if (!t) return {nullptr, nullptr};
    Node* tl = t->left;
    Node* tr = t->right;
    if (cmp(t->key, k)) {  // t->key < k: t joins the left part
      auto [l2, r2] = split_rec(tr, k, cmp);
      t->left = t->right = nullptr;
      return {join_mid(tl, t, l2), r2};
    }
    auto [l1, r1] = split_rec(tl, k, cmp);  // k <= t->key: t joins the right part
    t->left = t->right = nullptr;
    return {l1, join_mid(r1, t, tr)};
  }

  // Returns the height, or -1 on any violation.
  int check(const Node* n, const K* lo, const K* hi, std::string* diag) const {
    if (!n) return 0;
    if ((lo && !cmp_(*lo, n->key)) || (hi && !cmp_(n->key, *hi))) {
      if (diag) *diag = "BST order violated";
      return -1;
    }
    const int lh = check(n->left, lo, &n->key, diag);
    if (lh < 0) return -1;
    const int rh = check(n->right, &n->key, hi, diag);
    if (rh < 0) return -1;
    if (lh - rh > 1 || rh - lh > 1) {
      if (diag) *diag = "sibling heights differ by more than one";
      return -1;
    }
    const int here = 1 + std::max(lh, rh);
    if (n->height != here) {
      if (diag) *diag = "stored height differs from recomputed";
      return -1;
    }
    return here;
  }
};

}  // namespace batcherkit
