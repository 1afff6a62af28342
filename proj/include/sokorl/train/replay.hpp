#pragma once

#include <cstddef>
#include <deque>
#include <mutex>
#include <utility>
#include <vector>

#include "sokorl/errors.hpp"
#include "sokorl/rng.hpp"

namespace sokorl::train {

// FIFO replay store with capacity counted in weight units (physical segments
// weigh their step count, abstract transitions weigh 1). Append and sample are
// linearizable: one mutex guards the deque, so concurrent writers never lose
// or duplicate items. Sampling is uniform over stored items, with replacement.
template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {}

  void append(T item, size_t weight = 1) {
    std::lock_guard<std::mutex> lock(mu_);
    items_.emplace_back(std::move(item), weight);
    weight_ += weight;
    appended_ += weight;
    while (weight_ > capacity_ && items_.size() > 1) {
      weight_ -= items_.front().second;
      items_.pop_front();
    }
  }

  std::vector<T> sample(int batch, Rng& rng) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (items_.empty()) throw EmptyBuffer("sample from empty replay buffer");
    std::vector<T> out;
    out.reserve(static_cast<size_t>(batch));
    for (int i = 0; i < batch; ++i)
      out.push_back(items_[static_cast<size_t>(rng.below(items_.size()))].first);
    return out;
  }

  size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return items_.size();
  }
  size_t weight() const {
    std::lock_guard<std::mutex> lock(mu_);
    return weight_;
  }
  size_t total_appended() const {
    std::lock_guard<std::mutex> lock(mu_);
    return appended_;
  }

 private:
  mutable std::mutex mu_;
  std::deque<std::pair<T, size_t>> items_;
  size_t capacity_;
  size_t weight_ = 0;
  size_t appended_ = 0;
};

}  // namespace sokorl::train
