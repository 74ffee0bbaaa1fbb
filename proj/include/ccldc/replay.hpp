#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ccldc/augment.hpp"
#include "ccldc/rng.hpp"

namespace ccldc {

struct Example {
  Image image;
  int label = 0;
};

/// Fixed-capacity reservoir of labeled examples.
///
/// After n offers, every offered example is stored with probability
/// min(1, capacity / n) and the storage holds min(n, capacity) items.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed);

  /// Reservoir insertion: append while filling, then replace a uniformly
  /// chosen slot with probability capacity / (n_seen + 1).
  void insert(const Example& example);

  /// Memory batch of k examples. Empty when the buffer is empty. When fewer
  /// than k examples are stored, draws k with replacement; otherwise draws k
  /// distinct slots.
  std::vector<Example> sample(std::size_t k, Rng& rng) const;
  /// Slot indices chosen by the same rule as sample().
  std::vector<std::size_t> sample_indices(std::size_t k, Rng& rng) const;

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return storage_.size(); }
  bool empty() const { return storage_.empty(); }
  std::size_t n_seen() const { return n_seen_; }
  const std::vector<Example>& storage() const { return storage_; }

  /// CSV of (index, label) plus a raw little-endian f64 blob of the images in
  /// slot order.
  void dump(const std::filesystem::path& csv_path, const std::filesystem::path& blob_path) const;

 private:
  std::size_t capacity_;
  std::size_t n_seen_ = 0;
  std::vector<Example> storage_;
  Rng rng_;
};

}  // namespace ccldc
