#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace macnet {

enum class Split { kTrain = 0, kVal = 1, kTest = 2, kUnassigned = 3 };

const char* split_name(Split split);
Split split_from_name(const std::string& name);

// A maximal contiguous run of photo-stream frames at one visited place.
// Events are the atomic unit of dataset splitting: all images of one
// event share one class label and one split.
struct EventRecord {
  std::string event_id;
  std::string class_name;
  std::vector<std::string> image_paths;  // temporal order, relative to the manifest
  Split split = Split::kUnassigned;
};

struct SplitCounts {
  std::int64_t images = 0;
  std::int64_t events = 0;
};

struct DatasetManifest {
  std::vector<std::string> class_names;  // index order defines the label mapping
  std::vector<EventRecord> events;

  int class_index(const std::string& name) const;
  std::int64_t images_in(Split split) const;
  std::int64_t events_in(Split split) const;
  // counts[class][split]
  std::vector<std::array<SplitCounts, 3>> per_class_counts() const;
  std::vector<std::int64_t> train_image_counts_per_class() const;

  // Structural checks: non-empty events, consistent class names,
  // no duplicate event ids.
  void validate() const;
};

// Assigns whole events to train/val/test, targeting the given image
// ratios per class. Events are ordered largest-first (equal sizes in
// seeded order) and each goes to the split with the largest remaining
// image deficit; classes with fewer than three events put their largest
// event in train and the rest wherever the deficit is largest.
// Deterministic given the seed. Ratios must be positive and sum to 1.
void event_split(DatasetManifest& manifest, double train_ratio, double val_ratio,
                 double test_ratio, std::uint64_t seed);

// Manifest file: UTF-8 CSV, header line, one image per record:
// image_path,class_name,event_id,split
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Per-class stats table (images and events per split), CSV.
void write_stats_csv(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace macnet
