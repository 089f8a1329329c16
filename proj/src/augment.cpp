#include "macnet/augment.hpp"

#include <algorithm>
#include <cmath>

#include "macnet/error.hpp"

namespace macnet {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Bilinear sample with zero fill outside the source bounds.
float sample_bilinear(const Image& src, int channel, double y, double x) {
  const std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
  const std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  auto tap = [&](std::int64_t yy, std::int64_t xx) -> double {
    if (yy < 0 || yy >= src.height || xx < 0 || xx >= src.width) return 0.0;
    return static_cast<double>(src.at(channel, yy, xx));
  };
  const double top = tap(y0, x0) * (1.0 - fx) + tap(y0, x0 + 1) * fx;
  const double bot = tap(y0 + 1, x0) * (1.0 - fx) + tap(y0 + 1, x0 + 1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

// dst(p) = src(R(-theta) * (p - center - t) / s + center)
Image warp(const Image& src, double angle_deg, double scale, double tx, double ty) {
  const double theta = angle_deg * kPi / 180.0;
  const double cos_t = std::cos(-theta), sin_t = std::sin(-theta);
  const double inv_s = 1.0 / scale;
  const double cy = (static_cast<double>(src.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(src.width) - 1.0) / 2.0;
  Image dst = Image::make(src.height, src.width);
  for (std::int64_t y = 0; y < src.height; ++y) {
    for (std::int64_t x = 0; x < src.width; ++x) {
      const double dy = (static_cast<double>(y) - cy - ty) * inv_s;
      const double dx = (static_cast<double>(x) - cx - tx) * inv_s;
      const double sy = cos_t * dy + sin_t * dx + cy;
      const double sx = -sin_t * dy + cos_t * dx + cx;
      for (int c = 0; c < 3; ++c) dst.at(c, y, x) = sample_bilinear(src, c, sy, sx);
    }
  }
  return dst;
}

}  // namespace

Image augment(const Image& image, const AugmentationPolicy& policy, Rng& rng) {
  const std::int64_t crop_h = policy.crop_h > 0 ? policy.crop_h : image.height;
  const std::int64_t crop_w = policy.crop_w > 0 ? policy.crop_w : image.width;
  if (crop_h > image.height || crop_w > image.width) {
    throw ShapeError("augment: crop " + std::to_string(crop_h) + "x" + std::to_string(crop_w) +
                     " larger than image " + std::to_string(image.height) + "x" +
                     std::to_string(image.width));
  }

  // Parameter sampling order is part of the determinism contract.
  const double scale = uniform_range(rng, policy.scale_min, policy.scale_max);
  const double angle = uniform_range(rng, -policy.affine_angle_deg, policy.affine_angle_deg);
  const double tx =
      uniform_range(rng, -policy.translation_fraction, policy.translation_fraction) *
      static_cast<double>(image.width);
  const double ty =
      uniform_range(rng, -policy.translation_fraction, policy.translation_fraction) *
      static_cast<double>(image.height);
  const double extra_angle =
      uniform_range(rng, -policy.extra_rotation_deg, policy.extra_rotation_deg);
  const std::int64_t off_y = uniform_int(rng, 0, image.height - crop_h);
  const std::int64_t off_x = uniform_int(rng, 0, image.width - crop_w);
  const double brightness =
      policy.fixed_magnitudes ? policy.brightness_delta
                              : uniform_range(rng, -policy.brightness_delta, policy.brightness_delta);
  const double contrast =
      policy.fixed_magnitudes ? 1.0 + policy.contrast_delta
                              : uniform_range(rng, 1.0 - policy.contrast_delta, 1.0 + policy.contrast_delta);

  Image work = image;
  const bool warp1 = scale != 1.0 || angle != 0.0 || tx != 0.0 || ty != 0.0;
  if (warp1) work = warp(work, angle, scale, tx, ty);
  if (extra_angle != 0.0) work = warp(work, extra_angle, 1.0, 0.0, 0.0);

  Image out = Image::make(crop_h, crop_w);
  for (int c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < crop_h; ++y) {
      for (std::int64_t x = 0; x < crop_w; ++x) {
        double v = static_cast<double>(work.at(c, y + off_y, x + off_x));
        v += brightness;
        v = 0.5 + contrast * (v - 0.5);
        out.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

}  // namespace macnet
