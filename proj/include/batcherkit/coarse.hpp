#pragma once

#include <mutex>
#include <utility>

namespace batcherkit {

// Coarse-grained baseline: one mutex serialising every operation on a
// sequential structure.
template <class S>
class CoarseWrapper {
 public:
  explicit CoarseWrapper(S inner) : inner_(std::move(inner)) {}

  template <class F>
  decltype(auto) with_lock(F&& f) {
    std::lock_guard<std::mutex> lk(mu_);
    return std::forward<F>(f)(inner_);
  }

 private:
  std::mutex mu_;
  S inner_;
};

}  // namespace batcherkit
