// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "misfit/core/error.hpp"
#include "misfit/core/tensor.hpp"

namespace misfit {

// Luminance coefficients shared by histograms, metrics, and thermal
// conversion of 3-channel grayscale sources.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

// Single image, H x W x C interleaved, float intensities in [0, 1].
// C is 3 (visual) or 1 (thermal).
struct Image {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<float> px;
  std::string source_path;

  Image() = default;
  Image(int height, int width, int channels)
      : h(height), w(width), c(channels), px(static_cast<std::size_t>(height) * width * channels, 0.0f) {}

  float& at(int y, int x, int ch) { return px[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
  float at(int y, int x, int ch) const { return px[(static_cast<std::size_t>(y) * w + x) * c + ch]; }

  std::size_t size() const { return px.size(); }

  bool same_size(const Image& other) const { return h == other.h && w == other.w; }
};

inline void validate_image(const Image& img, const char* what, int min_side = 8) {
  if (img.c != 1 && img.c != 3) {
    throw ValidationError(std::string(what) + ": channel count must be 1 or 3, got " + std::to_string(img.c));
  }
  if (img.h < min_side || img.w < min_side) {
    throw ValidationError(std::string(what) + ": image too small (" + std::to_string(img.h) + "x" +
                          std::to_string(img.w) + "), minimum side is " + std::to_string(min_side));
  }
  if (img.px.size() != static_cast<std::size_t>(img.h) * img.w * img.c) {
    throw ValidationError(std::string(what) + ": pixel buffer size does not match dimensions");
  }
  for (float v : img.px) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw ValidationError(std::string(what) + ": pixel values must be finite and in [0,1]");
    }
  }
}

// One visual-thermal pair. aligned is true only for synthetic pairs before
// any warp was injected.
struct ImagePair {
  Image visual;   // C = 3
  Image thermal;  // C = 1
  bool aligned = false;
  std::vector<std::string> warnings;
};

inline Image make_constant_image(int h, int w, int c, float value) {
  Image img(h, w, c);
  std::fill(img.px.begin(), img.px.end(), value);
  return img;
}

// Per-pixel luminance; identity for single-channel input.
inline Image to_luminance(const Image& img) {
  if (img.c == 1) return img;
  Image out(img.h, img.w, 1);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const double v = kLumaR * img.at(y, x, 0) + kLumaG * img.at(y, x, 1) + kLumaB * img.at(y, x, 2);
      out.at(y, x, 0) = static_cast<float>(v);
    }
  }
  return out;
}

// Thermal channel replicated to 3 channels (discriminator real pairs, L1).
inline Image replicate3(const Image& img) {
  if (img.c == 3) return img;
  Image out(img.h, img.w, 3);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const float v = img.at(y, x, 0);
      out.at(y, x, 0) = v;
      out.at(y, x, 1) = v;
      out.at(y, x, 2) = v;
    }
  }
  return out;
}

// Image (HWC float) -> network tensor (C,H,W).
template <typename S>
Tensor<S> image_to_chw(const Image& img) {
  Tensor<S> t({img.c, img.h, img.w});
  for (int ch = 0; ch < img.c; ++ch) {
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        t(ch, y, x) = static_cast<S>(img.at(y, x, ch));
      }
    }
  }
  return t;
}

template <typename S>
Image chw_to_image(const Tensor<S>& t) {
  if (t.rank() != 3) throw ShapeError("chw_to_image: expected rank-3 tensor, got " + t.shape_str());
  Image img(t.dim(1), t.dim(2), t.dim(0));
  for (int ch = 0; ch < img.c; ++ch) {
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        img.at(y, x, ch) = static_cast<float>(t(ch, y, x));
      }
    }
  }
  return img;
}

}  // namespace misfit
