#pragma once

#include <cmath>
#include <iostream>

#include "statekit/errors.hpp"
#include "statekit/image.hpp"
#include "statekit/rng.hpp"

namespace statekit {

// Random augmentation factors: rotation up to +-45 degrees, shear up to
// +-0.2 rad, zoom in [0.8, 1.2] per axis, deterministic 1/255 rescale, and
// fair-coin horizontal/vertical flips.
struct AugmentationConfig {
  double rotation_max_deg = 45.0;
  double shear_max = 0.2;  // radians
  double zoom_delta = 0.2;
  double rescale_factor = 1.0 / 255.0;
  bool hflip = true;
  bool vflip = true;
};

inline void validate(const AugmentationConfig& cfg) {
  if (cfg.rotation_max_deg < 0.0) throw DataError("augment: rotation_max must be >= 0");
  if (cfg.shear_max < 0.0) throw DataError("augment: shear_max must be >= 0");
  if (cfg.zoom_delta < 0.0 || cfg.zoom_delta >= 1.0) {
    throw DataError("augment: zoom_delta must be in [0, 1)");
  }
  if (cfg.rescale_factor <= 0.0) throw DataError("augment: rescale factor must be > 0");
}

struct AugmentationParams {
  double angle_deg = 0.0;
  double shear = 0.0;  // radians
  double zoom_x = 1.0;
  double zoom_y = 1.0;
  bool do_hflip = false;
  bool do_vflip = false;
};

// 2x3 affine mapping output pixel coordinates to input coordinates:
//   x_in = m[0]*x + m[1]*y + m[2],  y_in = m[3]*x + m[4]*y + m[5].
struct Affine2D {
  double m[6] = {1, 0, 0, 0, 1, 0};

  static Affine2D identity() { return {}; }

  void apply(double x, double y, double* xi, double* yi) const {
    *xi = m[0] * x + m[1] * y + m[2];
    *yi = m[3] * x + m[4] * y + m[5];
  }
};

// Draw order is fixed (angle, shear, zoom_x, zoom_y, then gated flip coins)
// so a given rng state always yields the same parameters. Range draws are
// consumed even when a factor is zero, keeping the stream aligned across
// configs that differ only in magnitudes.
inline AugmentationParams sample_params(const AugmentationConfig& cfg, Rng& rng) {
  validate(cfg);
  AugmentationParams p;
  p.angle_deg = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
  p.shear = rng.uniform(-cfg.shear_max, cfg.shear_max);
  p.zoom_x = rng.uniform(1.0 - cfg.zoom_delta, 1.0 + cfg.zoom_delta);
  p.zoom_y = rng.uniform(1.0 - cfg.zoom_delta, 1.0 + cfg.zoom_delta);
  p.do_hflip = cfg.hflip && rng.coin();
  p.do_vflip = cfg.vflip && rng.coin();
  return p;
}

// Builds the output-to-input map for the forward transform
// rotate -> shear -> zoom -> flip, all about the image center. Neutral
// parameters produce the exact identity matrix.
inline Affine2D params_to_affine(const AugmentationParams& p, int height, int width) {
  if (height < 1 || width < 1) throw DimensionError("params_to_affine: empty image");
  const double theta = p.angle_deg * M_PI / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double sh = std::tan(p.shear);
  const double fx = p.do_hflip ? -1.0 : 1.0;
  const double fy = p.do_vflip ? -1.0 : 1.0;

  // forward linear part L = Flip * Zoom * Shear * Rot; a positive angle
  // turns content counter-clockwise on screen (x right, y down)
  const double r00 = ct, r01 = st, r10 = -st, r11 = ct;
  const double s00 = r00 + sh * r10, s01 = r01 + sh * r11;  // Shear * Rot
  const double s10 = r10, s11 = r11;
  const double z00 = p.zoom_x * s00, z01 = p.zoom_x * s01;  // Zoom * ...
  const double z10 = p.zoom_y * s10, z11 = p.zoom_y * s11;
  const double l00 = fx * z00, l01 = fx * z01;              // Flip * ...
  const double l10 = fy * z10, l11 = fy * z11;

  const double det = l00 * l11 - l01 * l10;
  if (std::abs(det) < 1e-12) throw DataError("params_to_affine: singular transform");
  const double i00 = l11 / det, i01 = -l01 / det;
  const double i10 = -l10 / det, i11 = l00 / det;

  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  Affine2D t;
  t.m[0] = i00;
  t.m[1] = i01;
  t.m[2] = cx - (i00 * cx + i01 * cy);
  t.m[3] = i10;
  t.m[4] = i11;
  t.m[5] = cy - (i10 * cx + i11 * cy);
  return t;
}

// Resamples with bilinear interpolation; samples falling outside the raster
// clamp to the nearest edge pixel. Shape and value domain are preserved.
inline Image apply_affine(const Image& img, const Affine2D& t) {
  Image out(img.height, img.width, img.channels, img.domain);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double xi, yi;
      t.apply(x, y, &xi, &yi);
      for (int c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = quantize_domain(sample_bilinear_clamped(img, yi, xi, c), img.domain);
      }
    }
  }
  return out;
}

inline Image flip_h(const Image& img) {
  Image out(img.height, img.width, img.channels, img.domain);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
      }
    }
  }
  return out;
}

inline Image flip_v(const Image& img) {
  Image out(img.height, img.width, img.channels, img.domain);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = img.at(img.height - 1 - y, x, c);
      }
    }
  }
  return out;
}

// Multiplies every value by `factor` and declares the result unit-domain.
// With the standard 1/255 factor on byte input no clamping can occur; other
// factors clamp out-of-range results and warn once per image.
inline Image rescale(const Image& img, double factor) {
  if (factor <= 0.0) throw DataError("rescale: factor must be > 0");
  Image out = img;
  out.domain = PixelDomain::unit_range;
  bool clamped = false;
  for (double& v : out.data) {
    v *= factor;
    if (v < 0.0 || v > 1.0) {
      v = std::min(1.0, std::max(0.0, v));
      clamped = true;
    }
  }
  if (clamped) {
    std::cerr << "rescale: factor " << factor
              << " produced values outside [0,1]; clamped\n";
  }
  return out;
}

// Full per-sample pipeline: sample params, apply the affine, then the
// deterministic rescale. Byte-domain in, unit-domain out, same H x W x C.
inline Image augment_sample(const Image& img, const AugmentationConfig& cfg, Rng& rng) {
  if (img.domain != PixelDomain::byte_range) {
    throw DataError("augment_sample expects a byte-domain image");
  }
  const AugmentationParams p = sample_params(cfg, rng);
  const Affine2D t = params_to_affine(p, img.height, img.width);
  return rescale(apply_affine(img, t), cfg.rescale_factor);
}

}  // namespace statekit
