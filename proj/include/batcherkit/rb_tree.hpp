#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace batcherkit {

// In-place red-black tree with stored black heights. Invariants: BST order,
// nil leaves are black, a red node has black children, every root-to-leaf
// path crosses the same number of black nodes. The root may be red: split
// and join hand around subtrees whose roots keep their colour.
//
// black_height(n) counts the black nodes from n down to each leaf, n
// included; nil has black height 0, so a single red root has black height 0.
// Stored heights let split and join rebalance in O(log n) without recounting.
template <class K, class V, class Compare = std::less<K>>
class RBTree {
 public:
  using key_type = K;
  using mapped_type = V;
  using key_compare = Compare;

  struct Node {
    K key;
    V value;
    bool red;
    int black_height;
    Node* left;
    Node* right;
  };

  RBTree() = default;
  explicit RBTree(Compare cmp) : cmp_(std::move(cmp)) {}
  RBTree(const RBTree&) = delete;
  RBTree& operator=(const RBTree&) = delete;
  RBTree(RBTree&& o) noexcept : root_(o.root_), cmp_(std::move(o.cmp_)) { o.root_ = nullptr; }
  RBTree& operator=(RBTree&& o) noexcept {
    if (this != &o) {
      destroy(root_);
      root_ = o.root_;
      cmp_ = std::move(o.cmp_);
      o.root_ = nullptr;
    }
    return *this;
  }
  ~RBTree() { destroy(root_); }

  bool empty() const noexcept { return root_ == nullptr; }

  // Over-approximates tree size for the executor's "worth splitting" check.
  int size_factor() const noexcept { return bh(root_); }

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

  void insert(const K& k, V v) {
    root_ = ins(root_, k, std::move(v));
    if (root_->red) {
      root_->red = false;
      fix_bh(root_);
    }
  }

  // Absent key: no-op.
  void erase(const K& k) {
    if (!root_) return;
    root_ = del(root_, k).first;
  }

  void clear() {
    destroy(root_);
    root_ = nullptr;
  }

  // Key partition: left gets keys < k, right gets keys >= k.
  static std::pair<RBTree, RBTree> split(RBTree t, const K& k) {
    Node* root = t.root_;
    t.root_ = nullptr;
    auto [l, r] = split_rec(root, k, t.cmp_);
    RBTree lt(t.cmp_), rt(t.cmp_);
    lt.root_ = blacken(l);
    rt.root_ = blacken(r);
    return {std::move(lt), std::move(rt)};
  }

  // Pre: every key of a < every key of b (either may be empty).
  static RBTree join(RBTree a, RBTree b) {
    if (a.root_ && b.root_ && !a.cmp_(max_node(a.root_)->key, min_node(b.root_)->key))
      throw std::logic_error("RBTree::join: key ranges overlap");
    if (!a.root_) return b;
    if (!b.root_) return a;
    auto [rest, mid] = split_last(a.root_);
    a.root_ = nullptr;
    RBTree out(std::move(b.cmp_));
    out.root_ = blacken(join_mid(rest, mid, b.root_));
    b.root_ = nullptr;
    return out;
  }

  void set_root(RBTree other) { *this = std::move(other); }

  std::optional<K> min_key() const {
    return root_ ? std::optional<K>(min_node(root_)->key) : std::nullopt;
  }
  std::optional<K> max_key() const {
    return root_ ? std::optional<K>(max_node(root_)->key) : std::nullopt;
  }

  // Greatest key < k.
  std::optional<K> predecessor_key(const K& k) const {
    std::optional<K> best;
    for (const Node* n = root_; n;) {
      if (cmp_(n->key, k)) {
        best = n->key;
        n = n->right;
      } else {
        n = n->left;
      }
    }
    return best;
  }

  // Least key > k.
  std::optional<K> successor_key(const K& k) const {
    std::optional<K> best;
    for (const Node* n = root_; n;) {
      if (cmp_(k, n->key)) {
        best = n->key;
        n = n->left;
      } else {
        n = n->right;
      }
    }
    return best;
  }

  // In-order key/value sequence; test and oracle plumbing.
  std::vector<std::pair<K, V>> items() const {
    std::vector<std::pair<K, V>> out;
    walk(root_, out);
    return out;
  }

  // Full invariant recomputation. On failure fills `diag` with the violated
  // rule and returns false.
  bool validate(std::string* diag = nullptr) const {
    return check(root_, nullptr, nullptr, diag) >= 0;
  }

  const Node* root() const noexcept { return root_; }

  // Test support: adopt a hand-built node graph without checking invariants.
  static RBTree adopt_unchecked(Node* root) {
    RBTree t;
    t.root_ = root;
    return t;
  }

 private:
  Node* root_ = nullptr;
  Compare cmp_{};

  static int bh(const Node* n) noexcept { return n ? n->black_height : 0; }
  static bool is_red(const Node* n) noexcept { return n && n->red; }
  static void fix_bh(Node* n) noexcept { n->black_height = bh(n->left) + (n->red ? 0 : 1); }

  static Node* blacken(Node* n) {
    if (is_red(n)) {
      n->red = false;
      fix_bh(n);
    }
    return n;
  }

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
    fix_bh(n);
    fix_bh(x);
    return x;
  }

  static Node* rotate_right(Node* n) {
    Node* x = n->left;
    n->left = x->right;
    x->right = n;
    fix_bh(n);
    fix_bh(x);
    return x;
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

  // Restores the red-red insertion patterns below a black node: the middle
  // key becomes a red parent of two black children. Preserves subtree black
  // height.
  static Node* balance(Node* n) {
    if (is_red(n->left) && is_red(n->left->left)) {
      n = rotate_right(n);
    } else if (is_red(n->left) && is_red(n->left->right)) {
      n->left = rotate_left(n->left);
      n = rotate_right(n);
    } else if (is_red(n->right) && is_red(n->right->right)) {
      n = rotate_left(n);
    } else if (is_red(n->right) && is_red(n->right->left)) {
      n->right = rotate_right(n->right);
      n = rotate_left(n);
    } else {
      return n;
    }
    n->red = true;
    n->left->red = false;
    n->right->red = false;
    fix_bh(n->left);
    fix_bh(n->right);
    fix_bh(n);
    return n;
  }

  Node* ins(Node* n, const K& k, V&& v) {
    if (!n) return new Node{k, std::move(v), true, 0, nullptr, nullptr};
    if (cmp_(k, n->key))
      n->left = ins(n->left, k, std::move(v));
    else if (cmp_(n->key, k))
      n->right = ins(n->right, k, std::move(v));
    else {
      n->value = std::move(v);
      return n;
    }
    fix_bh(n);
    if (!n->red) n = balance(n);
    return n;
  }

  // Deletion fixups: the left (right) subtree of n is one black level short.
  // Returns the repaired subtree and whether the deficit still propagates.
  std::pair<Node*, bool> fix_left(Node* n) {
    Node* w = n->right;  // sibling of the deficit; always a real node
    if (is_red(w)) {     // sibling red: rotate it above, then fix below
      n->red = true;
      w->red = false;
      Node* top = rotate_left(n);
      auto [sub, d] = fix_left(n);  // new sibling is black; terminates here
      top->left = sub;
      fix_bh(top);
      return {top, d};
    }
    if (!is_red(w->left) && !is_red(w->right)) {  // demote sibling
      w->red = true;
      fix_bh(w);
      if (n->red) {
        n->red = false;
        fix_bh(n);
        return {n, false};
      }
      fix_bh(n);
      return {n, true};
    }
    if (!is_red(w->right)) {  // near child red: rotate into the far case
      w->left->red = false;
      fix_bh(w->left);
      w->red = true;
      n->right = rotate_right(w);
      w = n->right;
    }
    w->red = n->red;  // far child red: rotation restores the black count
    n->red = false;
    w->right->red = false;
    fix_bh(w->right);
    Node* top = rotate_left(n);
    return {top, false};
  }

  std::pair<Node*, bool> fix_right(Node* n) {
    Node* w = n->left;
    if (is_red(w)) {
      n->red = true;
      w->red = false;
      Node* top = rotate_right(n);
      auto [sub, d] = fix_right(n);
      top->right = sub;
      fix_bh(top);
      return {top, d};
    }
    if (!is_red(w->left) && !is_red(w->right)) {
      w->red = true;
      fix_bh(w);
      if (n->red) {
        n->red = false;
        fix_bh(n);
        return {n, false};
      }
      fix_bh(n);
      return {n, true};
    }
    if (!is_red(w->left)) {
      w->right->red = false;
      fix_bh(w->right);
      w->red = true;
      n->left = rotate_left(w);
      w = n->left;
    }
    w->red = n->red;
    n->red = false;
    w->left->red = false;
    fix_bh(w->left);
    Node* top = rotate_right(n);
    return {top, false};
  }

  std::pair<Node*, bool> unlink_leafish(Node* n) {
    Node* c = n->left ? n->left : n->right;
    bool deficit = !n->red;
    delete n;
    if (deficit && is_red(c)) {
      c->red = false;
      fix_bh(c);
      deficit = false;
    }
    return {c, deficit};
  }

  std::pair<Node*, bool> del(Node* n, const K& k) {
    if (!n) return {nullptr, false};
    if (cmp_(k, n->key)) {
      auto [l, d] = del(n->left, k);
      n->left = l;
      return d ? fix_left(n) : std::pair<Node*, bool>{n, false};
    }
    if (cmp_(n->key, k)) {
      auto [r, d] = del(n->right, k);
      n->right = r;
      return d ? fix_right(n) : std::pair<Node*, bool>{n, false};
    }
    if (n->left && n->right) {  // swap in the successor, delete it below
      auto [r, kk, vv, d] = del_min(n->right);
      n->key = std::move(kk);
      n->value = std::move(vv);
      n->right = r;
      return d ? fix_right(n) : std::pair<Node*, bool>{n, false};
    }
    return unlink_leafish(n);
  }

  std::tuple<Node*, K, V, bool> del_min(Node* n) {
    if (!n->left) {
      K k = std::move(n->key);
      V v = std::move(n->value);
      auto [c, d] = unlink_leafish(n);
      return {c, std::move(k), std::move(v), d};
    }
    auto [l, k, v, d] = del_min(n->left);
    n->left = l;
    if (!d) return {n, std::move(k), std::move(v), false};
    auto [t, d2] = fix_left(n);
    return {t, std::move(k), std::move(v), d2};
  }

  // Join with a middle node, descending the taller tree's spine until the
  // black heights meet, then repairing any red-red pair on the way out.
  // `mid`'s key must separate l and r; its old colour and children are
  // overwritten.
  static Node* join_right(Node* l, Node* mid, Node* r) {
    if (!is_red(l) && bh(l) == bh(r)) {
      mid->left = l;
      mid->right = r;
      mid->red = true;
      fix_bh(mid);
      return mid;
    }
    l->right = join_right(l->right, mid, r);
    if (!l->red && is_red(l->right) && is_red(l->right->right)) {
      l->right->right->red = false;
      fix_bh(l->right->right);
      fix_bh(l->right);
      return rotate_left(l);
    }
    fix_bh(l);
    return l;
  }

  static Node* join_left(Node* l, Node* mid, Node* r) {
    if (!is_red(r) && bh(r) == bh(l)) {
      mid->left = l;
      mid->right = r;
      mid->red = true;
      fix_bh(mid);
      return mid;
    }
    r->left = join_left(l, mid, r->left);
    if (!r->red && is_red(r->left) && is_red(r->left->left)) {
      r->left->left->red = false;
      fix_bh(r->left->left);
      fix_bh(r->left);
      return rotate_right(r);
    }
    fix_bh(r);
    return r;
  }

  static Node* join_mid(Node* l, Node* mid, Node* r) {
    if (bh(l) > bh(r)) {
      Node* t = join_right(l, mid, r);
      if (t->red && is_red(t->right)) {
        t->red = false;
        fix_bh(t);
      }
      return t;
    }
    if (bh(l) < bh(r)) {
      Node* t = join_left(l, mid, r);
      if (t->red && is_red(t->left)) {
        t->red = false;
        fix_bh(t);
      }
      return t;
    }
    mid->left = l;
    mid->right = r;
    mid->red = !is_red(l) && !is_red(r);  // red child forces a black mid
    fix_bh(mid);
    return mid;
  }

  // Detaches the maximum node; the remainder stays a valid tree.
  static std::pair<Node*, Node*> split_last(Node* t) {
    if (!t->right) {
      Node* rest = blacken(t->left);
      t->left = t->right = nullptr;
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

  // Returns the black height, or -1 on any violation.
  int check(const Node* n, const K* lo, const K* hi, std::string* diag) const {
    if (!n) return 0;
    if ((lo && !cmp_(*lo, n->key)) || (hi && !cmp_(n->key, *hi))) {
      if (diag) *diag = "BST order violated";
      return -1;
    }
    if (n->red && (is_red(n->left) || is_red(n->right))) {
      if (diag) *diag = "red node has a red child";
      return -1;
    }
    const int lbh = check(n->left, lo, &n->key, diag);
    if (lbh < 0) return -1;
    const int rbh = check(n->right, &n->key, hi, diag);
    if (rbh < 0) return -1;
    if (lbh != rbh) {
      if (diag) *diag = "unequal black counts on leaf paths";
      return -1;
    }
    const int here = lbh + (n->red ? 0 : 1);
    if (n->black_height != here) {
      if (diag) *diag = "stored black height differs from recomputed";
      return -1;
    }
    return here;
  }
};

}  // namespace batcherkit
