#include "macnet/batch.hpp"

#include <algorithm>

#include "macnet/error.hpp"
#include "macnet/rng.hpp"

namespace macnet {

const Image& ImageCache::get(const std::filesystem::path& root, const std::string& rel_path) {
  auto it = cache_.find(rel_path);
  if (it == cache_.end()) {
    it = cache_.emplace(rel_path, load_image(root / rel_path)).first;
  }
  return it->second;
}

BatchIterator::BatchIterator(const DatasetManifest& manifest,
                             const std::filesystem::path& data_root, Split split,
                             std::int64_t batch_size, std::uint64_t seed, std::int64_t epoch,
                             const AugmentationPolicy* policy, ImageCache* cache)
    : root_(data_root),
      batch_size_(batch_size),
      seed_(seed),
      epoch_(epoch),
      policy_(policy && policy->enabled ? policy : nullptr),
      cache_(cache) {
  if (batch_size < 1) throw ContractError("batch_iterator: batch_size must be >= 1");
  std::int64_t canonical = 0;
  for (const auto& e : manifest.events) {
    const int label = manifest.class_index(e.class_name);
    for (const auto& img : e.image_paths) {
      if (e.split == split) samples_.push_back({img, label, canonical});
      ++canonical;
    }
  }
  if (samples_.empty()) {
    throw ContractError(std::string("batch_iterator: split '") + split_name(split) + "' is empty");
  }
  if (split == Split::kTrain) {
    Rng rng = make_rng(mix_seed(seed, static_cast<std::uint64_t>(epoch), 0xb17c5u));
    for (std::size_t i = samples_.size(); i > 1; --i) {
      std::swap(samples_[i - 1],
                samples_[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1))]);
    }
  }
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= samples_.size()) return std::nullopt;
  const std::size_t count =
      std::min<std::size_t>(static_cast<std::size_t>(batch_size_), samples_.size() - cursor_);

  Batch batch;
  batch.size = static_cast<std::int64_t>(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Sample& s = samples_[cursor_ + i];
    Image img;
    const Image* src;
    if (cache_) {
      src = &cache_->get(root_, s.path);
    } else {
      img = load_image(root_ / s.path);
      src = &img;
    }
    Image augmented;
    if (policy_) {
      Rng rng = make_rng(mix_seed(mix_seed(seed_, static_cast<std::uint64_t>(epoch_)),
                                  static_cast<std::uint64_t>(s.canonical_index)));
      augmented = augment(*src, *policy_, rng);
      src = &augmented;
    }
    if (batch.height == 0) {
      batch.height = src->height;
      batch.width = src->width;
      batch.images.resize(count * src->data.size());
    }
    if (src->height != batch.height || src->width != batch.width) {
      throw ShapeError("batch_iterator: image extents disagree within a batch (" + s.path + ")");
    }
    std::copy(src->data.begin(), src->data.end(), batch.images.begin() + i * src->data.size());
    batch.labels.push_back(s.label);
  }
  cursor_ += count;
  return batch;
}

}  // namespace macnet
