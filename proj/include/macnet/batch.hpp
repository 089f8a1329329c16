#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "macnet/augment.hpp"
#include "macnet/image.hpp"
#include "macnet/manifest.hpp"

namespace macnet {

struct Batch {
  std::int64_t size = 0;  // final batch of an epoch may be partial
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<float> images;  // [size, 3, height, width]
  std::vector<int> labels;
};

// Decoded-image cache keyed by manifest-relative path.
class ImageCache {
 public:
  const Image& get(const std::filesystem::path& root, const std::string& rel_path);

 private:
  std::unordered_map<std::string, Image> cache_;
};

// One epoch over one split. Train epochs visit a seeded permutation of
// the split's images; val/test epochs visit manifest order. Each
// sample's augmentation stream derives from (seed, epoch, sample index)
// in the canonical manifest order, independent of visit order.
class BatchIterator {
 public:
  BatchIterator(const DatasetManifest& manifest, const std::filesystem::path& data_root,
                Split split, std::int64_t batch_size, std::uint64_t seed, std::int64_t epoch,
                const AugmentationPolicy* policy = nullptr, ImageCache* cache = nullptr);

  std::optional<Batch> next();
  std::int64_t num_samples() const { return static_cast<std::int64_t>(samples_.size()); }

 private:
  struct Sample {
    std::string path;
    int label = 0;
    std::int64_t canonical_index = 0;
  };

  std::filesystem::path root_;
  std::vector<Sample> samples_;  // in visit order
  std::int64_t batch_size_;
  std::uint64_t seed_;
  std::int64_t epoch_;
  const AugmentationPolicy* policy_;
  ImageCache* cache_;
  std::size_t cursor_ = 0;
};

}  // namespace macnet
