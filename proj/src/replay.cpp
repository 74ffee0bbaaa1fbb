#include "ccldc/replay.hpp"

#include <fstream>
#include <numeric>

#include "ccldc/errors.hpp"

namespace ccldc {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed)
    : capacity_(capacity), rng_(seed) {
  storage_.reserve(capacity);
}

void ReplayBuffer::insert(const Example& example) {
  if (storage_.size() < capacity_) {
    storage_.push_back(example);
  } else if (capacity_ > 0) {
    const std::size_t slot = rng_.index(n_seen_ + 1);
    if (slot < capacity_) storage_[slot] = example;
  }
  ++n_seen_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t k, Rng& rng) const {
  std::vector<std::size_t> picks;
  const std::size_t n = storage_.size();
  if (n == 0 || k == 0) return picks;
  picks.reserve(k);
  if (n < k) {
    for (std::size_t i = 0; i < k; ++i) picks.push_back(rng.index(n));
    return picks;
  }
  // Partial Fisher-Yates over slot indices.
  std::vector<std::size_t> slots(n);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.index(n - i);
    std::swap(slots[i], slots[j]);
    picks.push_back(slots[i]);
  }
  return picks;
}

std::vector<Example> ReplayBuffer::sample(std::size_t k, Rng& rng) const {
  std::vector<Example> batch;
  for (std::size_t i : sample_indices(k, rng)) batch.push_back(storage_[i]);
  return batch;
}

void ReplayBuffer::dump(const std::filesystem::path& csv_path,
                        const std::filesystem::path& blob_path) const {
  std::ofstream csv(csv_path);
  std::ofstream blob(blob_path, std::ios::binary);
  if (!csv || !blob) throw Error("cannot write buffer dump to " + csv_path.string());
  csv << "index,label\n";
  for (std::size_t i = 0; i < storage_.size(); ++i) {
    csv << i << ',' << storage_[i].label << '\n';
    const auto& px = storage_[i].image.pixels;
    blob.write(reinterpret_cast<const char*>(px.data()),
               static_cast<std::streamsize>(px.size() * sizeof(double)));
  }
}

}  // namespace ccldc
