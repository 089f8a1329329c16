#include "macnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "macnet/error.hpp"
#include "macnet/image.hpp"
#include "macnet/rng.hpp"

namespace macnet {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

std::string zero_pad(std::int64_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*lld", width, static_cast<long long>(value));
  return buf;
}

}  // namespace

void SynthSpec::validate() const {
  if (num_classes < 1 || events_per_class < 1 || images_per_event_min < 1) {
    throw ContractError("synth: all counts must be positive");
  }
  if (images_per_event_max < images_per_event_min) {
    throw ContractError("synth: images_per_event range is inverted");
  }
  if (height < 1 || width < 1) throw ContractError("synth: image extents must be positive");
}

DatasetManifest generate_synthetic_dataset(const SynthSpec& spec,
                                           const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create output directory: " + (out_dir / "images").string());

  DatasetManifest manifest;
  for (int k = 0; k < spec.num_classes; ++k) {
    manifest.class_names.push_back("class_" + zero_pad(k, 2));
  }

  for (int k = 0; k < spec.num_classes; ++k) {
    const std::string& cls = manifest.class_names[static_cast<std::size_t>(k)];
    // Class texture family: hue-separated palette, class-specific stripe
    // frequency and orientation.
    const double hue = static_cast<double>(k) / static_cast<double>(spec.num_classes);
    const Rgb palette_a = hsv_to_rgb(hue, 0.75, 0.95);
    const Rgb palette_b = hsv_to_rgb(hue, 0.55, 0.35);
    const double freq = 3.0 + 2.0 * static_cast<double>(k);
    const double orient = kPi * static_cast<double>(k) / static_cast<double>(spec.num_classes);

    const auto class_dir = out_dir / "images" / cls;
    for (int e = 0; e < spec.events_per_class; ++e) {
      Rng ev_rng = make_rng(mix_seed(spec.seed, static_cast<std::uint64_t>(k),
                                     static_cast<std::uint64_t>(e)));
      const double phase0 = uniform_range(ev_rng, 0.0, 2.0 * kPi);
      const double orient_e = orient + uniform_range(ev_rng, -0.08, 0.08);
      const double pal_jit[3] = {uniform_range(ev_rng, -0.04, 0.04),
                                 uniform_range(ev_rng, -0.04, 0.04),
                                 uniform_range(ev_rng, -0.04, 0.04)};
      const double blob_cx = uniform_range(ev_rng, 0.2, 0.8);
      const double blob_cy = uniform_range(ev_rng, 0.2, 0.8);
      const double blob_sigma = uniform_range(ev_rng, 0.12, 0.25);
      const int n_images =
          static_cast<int>(uniform_int(ev_rng, spec.images_per_event_min, spec.images_per_event_max));

      const std::string event_tag = "ev_" + zero_pad(e, 3);
      EventRecord rec;
      rec.event_id = cls + "_" + event_tag;
      rec.class_name = cls;
      const auto event_dir = class_dir / event_tag;
      std::filesystem::create_directories(event_dir, ec);
      if (ec) throw IoError("cannot create output directory: " + event_dir.string());

      for (int i = 0; i < n_images; ++i) {
        // Adjacent frames drift slightly in phase and brightness.
        const double phase = phase0 + 0.12 * static_cast<double>(i) +
                             uniform_range(ev_rng, -0.03, 0.03);
        const double brightness = uniform_range(ev_rng, -0.03, 0.03);
        Image img = Image::make(spec.height, spec.width);
        Rng px_rng = make_rng(mix_seed(mix_seed(spec.seed, static_cast<std::uint64_t>(k)),
                                       static_cast<std::uint64_t>(e),
                                       static_cast<std::uint64_t>(i) + 1));
        for (std::int64_t y = 0; y < spec.height; ++y) {
          const double v = static_cast<double>(y) / static_cast<double>(spec.height);
          for (std::int64_t x = 0; x < spec.width; ++x) {
            const double u = static_cast<double>(x) / static_cast<double>(spec.width);
            const double g =
                0.5 + 0.5 * std::sin(2.0 * kPi * freq * (u * std::cos(orient_e) + v * std::sin(orient_e)) +
                                     phase);
            const double du = u - blob_cx, dv = v - blob_cy;
            const double blob =
                0.2 * std::exp(-(du * du + dv * dv) / (2.0 * blob_sigma * blob_sigma));
            const double noise = uniform_range(px_rng, -0.015, 0.015);
            const double base[3] = {palette_b.r + (palette_a.r - palette_b.r) * g + pal_jit[0],
                                    palette_b.g + (palette_a.g - palette_b.g) * g + pal_jit[1],
                                    palette_b.b + (palette_a.b - palette_b.b) * g + pal_jit[2]};
            for (int c = 0; c < 3; ++c) {
              img.at(c, y, x) = static_cast<float>(
                  std::clamp(base[c] + blob + brightness + noise, 0.0, 1.0));
            }
          }
        }
        const std::string rel = "images/" + cls + "/" + event_tag + "/img_" + zero_pad(i, 3) + ".ppm";
        write_image_ppm(img, out_dir / rel);
        rec.image_paths.push_back(rel);
      }
      manifest.events.push_back(std::move(rec));
    }
  }

  save_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

}  // namespace macnet
