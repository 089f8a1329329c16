#pragma once

#include <cstdint>
#include <filesystem>

#include "macnet/manifest.hpp"

namespace macnet {

// Desk-scale synthetic photo-stream generator. Each class is a distinct
// procedural texture family (frequency / orientation / palette); images
// within one event are small perturbations of one base sample, mimicking
// temporally adjacent frames.
struct SynthSpec {
  int num_classes = 4;
  int events_per_class = 7;
  int images_per_event_min = 4;
  int images_per_event_max = 4;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::uint64_t seed = 42;

  void validate() const;
};

// Writes PPM images under out_dir/images/... plus out_dir/manifest.csv
// (splits unassigned) and returns the manifest. Deterministic given the
// seed, byte for byte.
DatasetManifest generate_synthetic_dataset(const SynthSpec& spec,
                                           const std::filesystem::path& out_dir);

}  // namespace macnet
