// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "misfit/core/error.hpp"
#include "misfit/core/rng.hpp"
#include "misfit/data/image.hpp"
#include "misfit/data/misalign.hpp"

namespace misfit {

// Exact geometry of a synthetic scene; the verification harness uses it to
// locate thermal hot spots in the fused output.
struct SceneTruth {
  std::vector<std::pair<double, double>> blob_centers;  // (row, col)
  std::vector<double> blob_radii;                       // Gaussian sigma, pixels
  MisalignmentSpec warp_applied;
};

struct SyntheticConfig {
  double background_max = 0.45;  // thermal background stays below 0.5
  double blob_peak_min = 0.85;
  double blob_peak_max = 1.0;
  double blob_sigma_min_frac = 1.0 / 32.0;  // relative to min(h, w)
  double blob_sigma_max_frac = 1.0 / 10.0;
  int noise_cell = 8;  // lattice spacing of the value noise, pixels
  int visual_shapes = 6;
};

namespace detail {

// Smooth value noise: a coarse random lattice, bilinearly interpolated.
// Output in [0, 1].
inline std::vector<float> value_noise(Rng& rng, int h, int w, int cell) {
  const int gh = h / cell + 2;
  const int gw = w / cell + 2;
  std::vector<double> lattice(static_cast<std::size_t>(gh) * gw);
  for (double& v : lattice) v = rng.uniform();
  std::vector<float> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const double gy = static_cast<double>(y) / cell;
    const int y0 = static_cast<int>(gy);
    const double fy = gy - y0;
    for (int x = 0; x < w; ++x) {
      const double gx = static_cast<double>(x) / cell;
      const int x0 = static_cast<int>(gx);
      const double fx = gx - x0;
      const double v00 = lattice[static_cast<std::size_t>(y0) * gw + x0];
      const double v01 = lattice[static_cast<std::size_t>(y0) * gw + x0 + 1];
      const double v10 = lattice[static_cast<std::size_t>(y0 + 1) * gw + x0];
      const double v11 = lattice[static_cast<std::size_t>(y0 + 1) * gw + x0 + 1];
      const double top = v00 + (v01 - v00) * fx;
      const double bot = v10 + (v11 - v10) * fx;
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(top + (bot - top) * fy);
    }
  }
  return out;
}

}  // namespace detail

// Builds an aligned visual-thermal pair with known ground truth. The thermal
// image carries hot Gaussian blobs over a dim textured background; the visual
// image carries terrain-like texture and shapes drawn from an independent
// stream, so blob locations are never visually salient.
inline std::pair<ImagePair, SceneTruth> generate_synthetic_scene(std::uint64_t seed, int h, int w, int n_blobs,
                                                                 const SyntheticConfig& cfg = {}) {
  if (h < 32 || w < 32) throw ValidationError("synthetic scene must be at least 32x32");
  if (n_blobs < 0) throw ValidationError("n_blobs must be >= 0");
  if (n_blobs > (h / 8) * (w / 8)) {
    throw GenerationError("cannot place " + std::to_string(n_blobs) + " blobs in a " + std::to_string(h) + "x" +
                          std::to_string(w) + " scene");
  }

  SceneTruth truth;
  ImagePair pair;
  pair.aligned = true;

  // Thermal: dim smooth background plus hot blobs.
  {
    Rng rng(mix_seed(seed, 1));
    Image th(h, w, 1);
    const std::vector<float> base = detail::value_noise(rng, h, w, cfg.noise_cell);
    const std::vector<float> fine = detail::value_noise(rng, h, w, std::max(2, cfg.noise_cell / 2));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = 0.75 * base[static_cast<std::size_t>(y) * w + x] + 0.25 * fine[static_cast<std::size_t>(y) * w + x];
        th.at(y, x, 0) = static_cast<float>(v * cfg.background_max);
      }
    }

    const double sig_lo = std::max(1.5, cfg.blob_sigma_min_frac * std::min(h, w));
    const double sig_hi = std::max(sig_lo + 0.5, cfg.blob_sigma_max_frac * std::min(h, w));
    for (int b = 0; b < n_blobs; ++b) {
      const double sigma = rng.uniform(sig_lo, sig_hi);
      const double margin = 2.0 * sigma;
      const double cy = rng.uniform(margin, h - 1 - margin);
      const double cx = rng.uniform(margin, w - 1 - margin);
      const double peak = rng.uniform(cfg.blob_peak_min, cfg.blob_peak_max);
      truth.blob_centers.emplace_back(cy, cx);
      truth.blob_radii.push_back(sigma);
      const int reach = static_cast<int>(std::ceil(4.0 * sigma));
      const int y0 = std::max(0, static_cast<int>(cy) - reach);
      const int y1 = std::min(h - 1, static_cast<int>(cy) + reach);
      const int x0 = std::max(0, static_cast<int>(cx) - reach);
      const int x1 = std::min(w - 1, static_cast<int>(cx) + reach);
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          const double g = peak * std::exp(-d2 / (2.0 * sigma * sigma));
          float& px = th.at(y, x, 0);
          px = static_cast<float>(std::min(1.0, px + g));
        }
      }
    }
    pair.thermal = std::move(th);
  }

  // Visual: terrain palette from independent noise, plus low-contrast shapes.
  // Nothing here depends on the blob stream.
  {
    Rng rng(mix_seed(seed, 2));
    Image vis(h, w, 3);
    const std::vector<float> coarse = detail::value_noise(rng, h, w, cfg.noise_cell * 2);
    const std::vector<float> fine = detail::value_noise(rng, h, w, std::max(2, cfg.noise_cell / 2));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double t = 0.65 * coarse[static_cast<std::size_t>(y) * w + x] + 0.35 * fine[static_cast<std::size_t>(y) * w + x];
        // Brown-to-green terrain ramp.
        const double r = 0.25 + 0.30 * t;
        const double g = 0.30 + 0.40 * t;
        const double b = 0.15 + 0.20 * (1.0 - t);
        vis.at(y, x, 0) = static_cast<float>(r);
        vis.at(y, x, 1) = static_cast<float>(g);
        vis.at(y, x, 2) = static_cast<float>(b);
      }
    }
    for (int sidx = 0; sidx < cfg.visual_shapes; ++sidx) {
      const int sh = 2 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(std::max(2, h / 6))));
      const int sw = 2 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(std::max(2, w / 6))));
      const int sy = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(std::max(1, h - sh))));
      const int sx = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(std::max(1, w - sw))));
      const double shade = rng.uniform(-0.15, 0.15);
      for (int y = sy; y < std::min(h, sy + sh); ++y) {
        for (int x = sx; x < std::min(w, sx + sw); ++x) {
          for (int ch = 0; ch < 3; ++ch) {
            float& px = vis.at(y, x, ch);
            px = static_cast<float>(std::clamp(px + shade, 0.0, 1.0));
          }
        }
      }
    }
    pair.visual = std::move(vis);
  }

  return {std::move(pair), std::move(truth)};
}

}  // namespace misfit
