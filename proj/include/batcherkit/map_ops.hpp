#pragma once

#include <optional>
#include <variant>

#include "batching.hpp"

namespace batcherkit {

// Operation alphabet for batched ordered maps.
template <class K>
struct MapSearch {
  K key;
};

template <class K, class V>
struct MapInsert {
  K key;
  V value;
};

template <class K>
struct MapDelete {
  K key;
};

template <class K, class V>
using MapOp = std::variant<MapSearch<K>, MapInsert<K, V>, MapDelete<K>>;

// `value` carries the payload of a successful search hit; it is empty for
// misses and for every non-search operation.
template <class V>
struct MapResult {
  op_status status;
  std::optional<V> value;

  bool operator==(const MapResult&) const = default;
};

}  // namespace batcherkit
