// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "misfit/core/error.hpp"
#include "misfit/core/rng.hpp"
#include "misfit/data/image.hpp"
#include "misfit/data/resize.hpp"

namespace misfit {

// Affine warp parameters applied to the thermal image: rotation about the
// image center, then scale, then translation. dx shifts columns, dy rows.
struct MisalignmentSpec {
  double dx = 0.0;
  double dy = 0.0;
  double rotation_deg = 0.0;
  double scale = 1.0;
  double crop_fraction = 0.0;
  double noise_sigma = 0.0;

  bool is_identity() const {
    return dx == 0.0 && dy == 0.0 && rotation_deg == 0.0 && scale == 1.0 && crop_fraction == 0.0 &&
           noise_sigma == 0.0;
  }

  void validate() const {
    if (scale <= 0.0) throw ValidationError("misalignment scale must be > 0");
    if (crop_fraction < 0.0 || crop_fraction >= 0.5) {
      throw ValidationError("misalignment crop_fraction must be in [0, 0.5)");
    }
    if (noise_sigma < 0.0) throw ValidationError("misalignment noise_sigma must be >= 0");
  }
};

// Forward map of a point (row, col) under the warp. The synthetic harness
// uses this to place ground-truth blob centers in warped coordinates.
inline std::pair<double, double> transform_point(const MisalignmentSpec& spec, double row, double col, int h,
                                                 int w) {
  const double cy = (h - 1) * 0.5;
  const double cx = (w - 1) * 0.5;
  const double theta = spec.rotation_deg * M_PI / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double ry = row - cy;
  const double rx = col - cx;
  // Rotation (x right, y down, positive angle turns x toward y), then scale.
  const double wx = spec.scale * (c * rx - s * ry);
  const double wy = spec.scale * (s * rx + c * ry);
  return {cy + wy + spec.dy, cx + wx + spec.dx};
}

// Warps the thermal image by spec, preserving the visual image. Out-of-frame
// samples replicate the nearest edge; crop_fraction removes a border that is
// then re-padded by edge replication; finally Gaussian noise is added and
// values are clipped to [0, 1].
inline ImagePair inject_misalignment(const ImagePair& pair, const MisalignmentSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (!pair.visual.same_size(pair.thermal)) {
    throw ShapeError("inject_misalignment: pair images must be the same size");
  }
  const Image& src = pair.thermal;
  const int h = src.h;
  const int w = src.w;

  ImagePair out;
  out.visual = pair.visual;
  out.aligned = false;
  out.warnings = pair.warnings;

  Image warped(h, w, 1);
  const double cy = (h - 1) * 0.5;
  const double cx = (w - 1) * 0.5;
  const double theta = spec.rotation_deg * M_PI / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double inv_scale = 1.0 / spec.scale;
  std::size_t out_of_frame = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Inverse map: undo translation, then scale, then rotation.
      const double ux = (x - cx - spec.dx) * inv_scale;
      const double uy = (y - cy - spec.dy) * inv_scale;
      const double sx = cx + (c * ux + s * uy);
      const double sy = cy + (-s * ux + c * uy);
      if (sx < 0.0 || sx > w - 1 || sy < 0.0 || sy > h - 1) ++out_of_frame;
      warped.at(y, x, 0) = sample_bilinear(src, sy, sx, 0);
    }
  }
  if (out_of_frame * 2 > static_cast<std::size_t>(h) * w) {
    out.warnings.push_back("misalignment warp moved more than 50% of thermal content out of frame");
  }

  if (spec.crop_fraction > 0.0) {
    const int by = static_cast<int>(std::floor(h * spec.crop_fraction * 0.5));
    const int bx = static_cast<int>(std::floor(w * spec.crop_fraction * 0.5));
    Image padded(h, w, 1);
    for (int y = 0; y < h; ++y) {
      const int sy2 = std::clamp(y, by, h - 1 - by);
      for (int x = 0; x < w; ++x) {
        const int sx2 = std::clamp(x, bx, w - 1 - bx);
        padded.at(y, x, 0) = warped.at(sy2, sx2, 0);
      }
    }
    warped = std::move(padded);
  }

  if (spec.noise_sigma > 0.0) {
    Rng rng(mix_seed(seed, 0x6e6f6973ULL));
    for (float& v : warped.px) {
      v = static_cast<float>(std::clamp(v + spec.noise_sigma * rng.normal(), 0.0, 1.0));
    }
  } else {
    for (float& v : warped.px) {
      v = std::clamp(v, 0.0f, 1.0f);
    }
  }

  out.thermal = std::move(warped);
  out.thermal.source_path = src.source_path;
  return out;
}

}  // namespace misfit
