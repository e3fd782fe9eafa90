#pragma once

#include <cstddef>

namespace batcherkit {

// Tuning knobs shared by the batch executors. Batches smaller than
// seq_threshold run sequentially: below roughly this size the split and
// rejoin overhead costs more than the parallelism recovers. Structures whose
// size_factor (a cheap over-approximation of size, e.g. a stored height)
// falls below size_factor_threshold are also handled sequentially.
struct ExecutorConfig {
  std::size_t seq_threshold = 64;
  std::size_t size_factor_threshold = 4;
};

}  // namespace batcherkit
