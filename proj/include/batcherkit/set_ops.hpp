#pragma once

#include <optional>
#include <variant>

#include "batcherkit/batching.hpp"

namespace batcherkit {

// Operations accepted by batched integer-set executors.
template <class K>
struct SetMember {
  K key;
};
template <class K>
struct SetInsert {
  K key;
};
template <class K>
struct SetDelete {
  K key;
};
template <class K>
struct SetPredecessor {
  K key;
};
template <class K>
struct SetSuccessor {
  K key;
};

template <class K>
using SetOp =
    std::variant<SetMember<K>, SetInsert<K>, SetDelete<K>, SetPredecessor<K>, SetSuccessor<K>>;

// `found` answers membership; `key` answers predecessor/successor.
template <class K>
struct SetResult {
  op_status status = op_status::ok;
  bool found = false;
  std::optional<K> key;
  bool operator==(const SetResult&) const = default;
};

template <class K>
const K& set_op_key(const SetOp<K>& op) {
  return std::visit([](const auto& o) -> const K& { return o.key; }, op);
}

}  // namespace batcherkit
