#pragma once

#include <cstdint>

#include "macnet/image.hpp"
#include "macnet/rng.hpp"

namespace macnet {

// Train-time augmentation recipe. Angle/translation/scale/delta fields
// are symmetric ranges by default; fixed_magnitudes switches brightness
// and contrast to exact deltas (the two readings of the recipe are both
// supported, range sampling is the default).
struct AugmentationPolicy {
  std::int64_t crop_h = 0;  // 0 means crop to the full input extent
  std::int64_t crop_w = 0;
  double brightness_delta = 0.2;
  double contrast_delta = 0.1;
  double affine_angle_deg = 20.0;      // rotation sampled in [-a, a]
  double translation_fraction = 0.5;   // of each extent, [-f, f]
  double scale_min = 0.5;
  double scale_max = 1.0;
  double extra_rotation_deg = 10.0;    // second rotation, [-r, r]
  bool fixed_magnitudes = false;
  bool enabled = true;

  static AugmentationPolicy identity() {
    AugmentationPolicy p;
    p.brightness_delta = 0.0;
    p.contrast_delta = 0.0;
    p.affine_angle_deg = 0.0;
    p.translation_fraction = 0.0;
    p.scale_min = p.scale_max = 1.0;
    p.extra_rotation_deg = 0.0;
    return p;
  }
};

// Applies, in order: scale+rotation+translation affine warp (bilinear,
// zero fill), a second rotation, random crop to the policy size,
// additive brightness, contrast about mid-gray, then clamps to [0,1].
// Deterministic given the rng stream.
Image augment(const Image& image, const AugmentationPolicy& policy, Rng& rng);

}  // namespace macnet
