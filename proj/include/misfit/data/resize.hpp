// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "misfit/core/error.hpp"
#include "misfit/data/image.hpp"

namespace misfit {

// Bilinear sample with edge replication outside the frame.
inline float sample_bilinear(const Image& img, double y, double x, int ch) {
  const double yc = std::clamp(y, 0.0, static_cast<double>(img.h - 1));
  const double xc = std::clamp(x, 0.0, static_cast<double>(img.w - 1));
  const int y0 = static_cast<int>(std::floor(yc));
  const int x0 = static_cast<int>(std::floor(xc));
  const int y1 = std::min(y0 + 1, img.h - 1);
  const int x1 = std::min(x0 + 1, img.w - 1);
  const double fy = yc - y0;
  const double fx = xc - x0;
  const double v00 = img.at(y0, x0, ch);
  const double v01 = img.at(y0, x1, ch);
  const double v10 = img.at(y1, x0, ch);
  const double v11 = img.at(y1, x1, ch);
  const double top = v00 + (v01 - v00) * fx;
  const double bot = v10 + (v11 - v10) * fx;
  return static_cast<float>(top + (bot - top) * fy);
}

// Bilinear resize with pixel-center alignment. Identity sizes return the
// input bit-for-bit.
inline Image resize_bilinear(const Image& img, int target_h, int target_w) {
  if (target_h < 1 || target_w < 1) throw ValidationError("resize target must be positive");
  if (target_h == img.h && target_w == img.w) return img;
  Image out(target_h, target_w, img.c);
  out.source_path = img.source_path;
  const double sy = static_cast<double>(img.h) / target_h;
  const double sx = static_cast<double>(img.w) / target_w;
  for (int y = 0; y < target_h; ++y) {
    const double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < target_w; ++x) {
      const double src_x = (x + 0.5) * sx - 0.5;
      for (int ch = 0; ch < img.c; ++ch) {
        out.at(y, x, ch) = std::clamp(sample_bilinear(img, src_y, src_x, ch), 0.0f, 1.0f);
      }
    }
  }
  return out;
}

// Resizes both modalities to a common training resolution. The target must
// be divisible by the network downsampling factor.
inline ImagePair preprocess_pair(const ImagePair& pair, int target_h, int target_w, int downsample_factor = 4) {
  if (target_h < 32 || target_w < 32) {
    throw ConfigError("preprocess target must be at least 32x32, got " + std::to_string(target_h) + "x" +
                      std::to_string(target_w));
  }
  if (downsample_factor < 1 || target_h % downsample_factor != 0 || target_w % downsample_factor != 0) {
    throw ConfigError("preprocess target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                      " is not divisible by the network downsampling factor " + std::to_string(downsample_factor));
  }
  ImagePair out;
  out.visual = resize_bilinear(pair.visual, target_h, target_w);
  out.thermal = resize_bilinear(pair.thermal, target_h, target_w);
  out.aligned = pair.aligned;
  out.warnings = pair.warnings;
  return out;
}

}  // namespace misfit
