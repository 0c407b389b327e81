// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "misfit/core/error.hpp"
#include "misfit/data/image.hpp"

namespace misfit {

// Probabilities are clamped this far from 0 and 1 before any log.
inline constexpr double kProbClamp = 1e-7;

struct LossWeights {
  double lambda_ir = 1.0;
  double lambda_rgb = 1.0;
  double lambda_kl = 10.0;
  double lambda_l1 = 100.0;

  void validate() const {
    if (lambda_ir < 0.0 || lambda_rgb < 0.0 || lambda_kl < 0.0 || lambda_l1 < 0.0) {
      throw ValidationError("loss weights must be non-negative");
    }
  }
};

// Named scalar components of one generator-phase step.
struct LossBreakdown {
  double adv_ir = 0.0;
  double adv_rgb = 0.0;
  double gen = 0.0;
  double kl = 0.0;
  double l1 = 0.0;
  double total = 0.0;
};

inline double clamp_prob(double p) { return std::min(1.0 - kProbClamp, std::max(kProbClamp, p)); }

// Discriminator objective for one modality: -log D(real) - log(1 - D(fused)).
inline double adversarial_loss_discriminator(double d_real, double d_fused) {
  if (!std::isfinite(d_real) || !std::isfinite(d_fused)) {
    throw NumericError("adversarial_loss_discriminator: non-finite discriminator output");
  }
  return -std::log(clamp_prob(d_real)) - std::log(1.0 - clamp_prob(d_fused));
}

// Non-saturating generator objective, one -log D(fused) term per modality.
inline double adversarial_loss_generator(double d_fused_ir, double d_fused_rgb, const LossWeights& w) {
  w.validate();
  if (!std::isfinite(d_fused_ir) || !std::isfinite(d_fused_rgb)) {
    throw NumericError("adversarial_loss_generator: non-finite discriminator output");
  }
  return w.lambda_ir * (-std::log(clamp_prob(d_fused_ir))) + w.lambda_rgb * (-std::log(clamp_prob(d_fused_rgb)));
}

// Smoothed intensity distribution of an image.
struct PixelDistribution {
  std::vector<double> probs;
  double epsilon = 0.0;
};

// Hard equal-width histogram of the luminance, epsilon-smoothed and
// renormalized. Used for reported KL values; training uses the soft variant.
inline PixelDistribution image_to_distribution(const Image& img, int bins = 64, double epsilon = 1e-8) {
  if (bins < 2) throw ValidationError("image_to_distribution: bins must be >= 2");
  const Image lum = to_luminance(img);
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (float v : lum.px) {
    int b = static_cast<int>(static_cast<double>(v) * bins);
    b = std::min(bins - 1, std::max(0, b));
    counts[static_cast<std::size_t>(b)] += 1.0;
  }
  const double n = static_cast<double>(lum.px.size());
  PixelDistribution dist;
  dist.epsilon = epsilon;
  dist.probs.resize(static_cast<std::size_t>(bins));
  const double norm = 1.0 + bins * epsilon;
  for (int b = 0; b < bins; ++b) {
    dist.probs[static_cast<std::size_t>(b)] = (counts[static_cast<std::size_t>(b)] / n + epsilon) / norm;
  }
  return dist;
}

inline double kl_divergence(const PixelDistribution& p, const PixelDistribution& q) {
  if (p.probs.size() != q.probs.size()) throw ShapeError("kl_divergence: distribution sizes differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    kl += p.probs[i] * std::log(p.probs[i] / q.probs[i]);
  }
  return kl;
}

// KL(P_fus || P_ir) + KL(P_fus || P_rgb) over hard histograms.
inline double kl_loss(const Image& fused, const Image& ir, const Image& rgb, int bins = 64,
                      double epsilon = 1e-8) {
  const PixelDistribution p = image_to_distribution(fused, bins, epsilon);
  const PixelDistribution q_ir = image_to_distribution(ir, bins, epsilon);
  const PixelDistribution q_rgb = image_to_distribution(rgb, bins, epsilon);
  return kl_divergence(p, q_ir) + kl_divergence(p, q_rgb);
}

// Mean absolute difference against the thermal (channel-replicated) and
// visual images. The mean reduction keeps lambda_l1 resolution-independent.
inline double l1_loss(const Image& fused, const Image& ir, const Image& rgb) {
  if (!fused.same_size(ir) || !fused.same_size(rgb)) {
    throw ShapeError("l1_loss: images must share H x W");
  }
  if (fused.c != 3 || rgb.c != 3 || ir.c != 1) throw ShapeError("l1_loss: expected fused/rgb 3-channel, ir 1-channel");
  double sum_ir = 0.0;
  double sum_rgb = 0.0;
  for (int y = 0; y < fused.h; ++y) {
    for (int x = 0; x < fused.w; ++x) {
      const double t = ir.at(y, x, 0);
      for (int ch = 0; ch < 3; ++ch) {
        const double f = fused.at(y, x, ch);
        sum_ir += std::abs(f - t);
        sum_rgb += std::abs(f - static_cast<double>(rgb.at(y, x, ch)));
      }
    }
  }
  const double n = static_cast<double>(fused.size());
  return sum_ir / n + sum_rgb / n;
}

// Weighted sum of the generator-phase components.
inline double total_loss(double gen, double kl, double l1, const LossWeights& w) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v)) throw NumericError(std::string("total_loss: non-finite component ") + name);
  };
  check(gen, "gen");
  check(kl, "kl");
  check(l1, "l1");
  return gen + w.lambda_kl * kl + w.lambda_l1 * l1;
}

// ---------------------------------------------------------------------------
// Soft (Gaussian-kernel) histogram: the differentiable surrogate used in the
// training graph so that KL gradients reach the fused pixels.
// ---------------------------------------------------------------------------

struct SoftHistogram {
  std::vector<double> probs;
  // Cached per-pixel normalized kernel weights and inputs for the backward
  // pass. weights[i * bins + j] = w_ij / W_i.
  std::vector<double> weights;
  std::vector<double> values;
  int bins = 0;
  double sigma = 0.0;
  double epsilon = 0.0;
};

inline SoftHistogram soft_histogram(const std::vector<double>& values, int bins, double epsilon, double sigma) {
  if (bins < 2) throw ValidationError("soft_histogram: bins must be >= 2");
  SoftHistogram h;
  h.bins = bins;
  h.sigma = sigma;
  h.epsilon = epsilon;
  h.values = values;
  const std::size_t n = values.size();
  h.weights.assign(n * static_cast<std::size_t>(bins), 0.0);
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double wsum = 0.0;
    double* wrow = &h.weights[i * static_cast<std::size_t>(bins)];
    for (int j = 0; j < bins; ++j) {
      const double center = (j + 0.5) / bins;
      const double d = values[i] - center;
      wrow[j] = std::exp(-d * d / (2.0 * sigma * sigma));
      wsum += wrow[j];
    }
    for (int j = 0; j < bins; ++j) {
      wrow[j] /= wsum;
      counts[static_cast<std::size_t>(j)] += wrow[j];
    }
  }
  const double norm = 1.0 + bins * epsilon;
  h.probs.resize(static_cast<std::size_t>(bins));
  for (int j = 0; j < bins; ++j) {
    h.probs[static_cast<std::size_t>(j)] = (counts[static_cast<std::size_t>(j)] / static_cast<double>(n) + epsilon) / norm;
  }
  return h;
}

// d(probs[j]) / d(values[i]), folded against an upstream gradient dL/dprobs.
// Returns dL/dvalues.
inline std::vector<double> soft_histogram_backward(const SoftHistogram& h, const std::vector<double>& dprobs) {
  const std::size_t n = h.values.size();
  const int bins = h.bins;
  const double norm = 1.0 + bins * h.epsilon;
  const double inv_sig2 = 1.0 / (h.sigma * h.sigma);
  std::vector<double> dvalues(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* wrow = &h.weights[i * static_cast<std::size_t>(bins)];
    // s_ij = w_ij / W_i; ds_ij/dx depends on the full row.
    // dw_ij/dx = w_ij * (c_j - x)/sigma^2 (unnormalized), and with r_ij the
    // normalized weights: ds_ij/dx = s_ij * ((c_j - x) - sum_k s_ik (c_k - x)) / sigma^2.
    double mean_c = 0.0;
    for (int j = 0; j < bins; ++j) {
      const double center = (j + 0.5) / bins;
      mean_c += wrow[j] * center;
    }
    double acc = 0.0;
    for (int j = 0; j < bins; ++j) {
      const double center = (j + 0.5) / bins;
      const double ds = wrow[j] * (center - mean_c) * inv_sig2;
      acc += dprobs[static_cast<std::size_t>(j)] * ds;
    }
    dvalues[i] = acc / (static_cast<double>(n) * norm);
  }
  return dvalues;
}

}  // namespace misfit
