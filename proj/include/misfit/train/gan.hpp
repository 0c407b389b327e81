// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "misfit/core/error.hpp"
#include "misfit/data/image.hpp"
#include "misfit/losses/losses.hpp"
#include "misfit/nn/discriminator.hpp"
#include "misfit/nn/generator.hpp"

namespace misfit {

// Generator plus the two modality discriminators, initialized together so a
// single seed pins every parameter byte.
template <typename S>
struct FusionModel {
  Generator<S> gen;
  PatchDiscriminator<S> disc_ir;
  PatchDiscriminator<S> disc_rgb;

  FusionModel(const GeneratorConfig& gen_cfg, int disc_width, int disc_layers)
      : gen(gen_cfg),
        disc_ir("disc_ir", DiscriminatorConfig{1, disc_width, disc_layers}),
        disc_rgb("disc_rgb", DiscriminatorConfig{3, disc_width, disc_layers}) {}

  void initialize(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x696e6974ULL));
    init_parameters<S>(gen.params(), rng);
    init_parameters<S>(disc_ir.params(), rng);
    init_parameters<S>(disc_rgb.params(), rng);
  }

  std::vector<ParamGroup<S>*> all_params() {
    std::vector<ParamGroup<S>*> out = gen.params();
    for (auto* g : disc_ir.params()) out.push_back(g);
    for (auto* g : disc_rgb.params()) out.push_back(g);
    return out;
  }

  void zero_all_grads() {
    for (auto* g : all_params()) g->zero_grad();
  }
};

// One preprocessed training batch in network layout.
template <typename S>
struct Batch {
  Tensor<S> rgb;  // (N, 3, H, W)
  Tensor<S> ir;   // (N, 1, H, W)
  Tensor<S> ir3;  // (N, 3, H, W), thermal replicated for real pairs and L1

  int n() const { return rgb.dim(0); }
  int h() const { return rgb.dim(2); }
  int w() const { return rgb.dim(3); }
};

template <typename S>
Batch<S> make_batch(const std::vector<const ImagePair*>& items) {
  if (items.empty()) throw ValidationError("make_batch: empty batch");
  const int h = items[0]->visual.h;
  const int w = items[0]->visual.w;
  Batch<S> batch;
  batch.rgb = Tensor<S>({static_cast<int>(items.size()), 3, h, w});
  batch.ir = Tensor<S>({static_cast<int>(items.size()), 1, h, w});
  batch.ir3 = Tensor<S>({static_cast<int>(items.size()), 3, h, w});
  for (std::size_t i = 0; i < items.size(); ++i) {
    const ImagePair& p = *items[i];
    if (p.visual.h != h || p.visual.w != w || !p.visual.same_size(p.thermal)) {
      throw ShapeError("make_batch: items not preprocessed to a common resolution");
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const S t = static_cast<S>(p.thermal.at(y, x, 0));
        batch.ir(static_cast<int>(i), 0, y, x) = t;
        for (int c = 0; c < 3; ++c) {
          batch.rgb(static_cast<int>(i), c, y, x) = static_cast<S>(p.visual.at(y, x, c));
          batch.ir3(static_cast<int>(i), c, y, x) = t;
        }
      }
    }
  }
  return batch;
}

struct KlSettings {
  int bins = 64;
  double epsilon = 1e-8;
  double sigma = 1.0 / 64.0;  // Gaussian kernel width of the soft binning
};

namespace detail {

// d/dp of -log(clamp(p)); zero where the clamp is active.
inline double neg_log_grad(double p) {
  if (p <= kProbClamp || p >= 1.0 - kProbClamp) return 0.0;
  return -1.0 / p;
}

// d/dp of -log(1 - clamp(p)).
inline double neg_log1m_grad(double p) {
  if (p <= kProbClamp || p >= 1.0 - kProbClamp) return 0.0;
  return 1.0 / (1.0 - p);
}

template <typename S>
std::vector<double> fused_luminance(const Tensor<S>& fused, int item) {
  const int h = fused.dim(2), w = fused.dim(3);
  std::vector<double> lum(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      lum[static_cast<std::size_t>(y) * w + x] = kLumaR * static_cast<double>(fused(item, 0, y, x)) +
                                                 kLumaG * static_cast<double>(fused(item, 1, y, x)) +
                                                 kLumaB * static_cast<double>(fused(item, 2, y, x));
    }
  }
  return lum;
}

template <typename S>
std::vector<double> plane_values(const Tensor<S>& t, int item) {
  const int h = t.dim(2), w = t.dim(3);
  std::vector<double> v(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) v[static_cast<std::size_t>(y) * w + x] = static_cast<double>(t(item, 0, y, x));
  }
  return v;
}

}  // namespace detail

// Loss of one discriminator over a batch: mean of Eq.-style
// -log D(real pair) - log(1 - D(fake pair)). With accumulate_grads, parameter
// gradients are added; input gradients are discarded (the fused image is
// detached in the discriminator phases).
template <typename S>
double discriminator_objective(PatchDiscriminator<S>& disc, const Tensor<S>& original,
                               const Tensor<S>& real_second, const Tensor<S>& fused_detached,
                               bool accumulate_grads) {
  const int n = original.dim(0);
  double loss = 0.0;

  Tensor<S> probs_real = disc.forward(original, real_second);
  const std::vector<double> d_real = mean_patch_probs(probs_real);
  if (accumulate_grads) {
    Tensor<S> dprobs(probs_real.shape());
    const std::size_t per = probs_real.size() / static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i) {
      const double dd = detail::neg_log_grad(d_real[static_cast<std::size_t>(i)]) /
                        (static_cast<double>(n) * static_cast<double>(per));
      S* p = dprobs.data() + static_cast<std::size_t>(i) * per;
      for (std::size_t e = 0; e < per; ++e) p[e] = static_cast<S>(dd);
    }
    disc.backward(dprobs);
  }

  Tensor<S> probs_fake = disc.forward(original, fused_detached);
  const std::vector<double> d_fake = mean_patch_probs(probs_fake);
  if (accumulate_grads) {
    Tensor<S> dprobs(probs_fake.shape());
    const std::size_t per = probs_fake.size() / static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i) {
      const double dd = detail::neg_log1m_grad(d_fake[static_cast<std::size_t>(i)]) /
                        (static_cast<double>(n) * static_cast<double>(per));
      S* p = dprobs.data() + static_cast<std::size_t>(i) * per;
      for (std::size_t e = 0; e < per; ++e) p[e] = static_cast<S>(dd);
    }
    disc.backward(dprobs);
  }

  for (int i = 0; i < n; ++i) {
    loss += adversarial_loss_discriminator(d_real[static_cast<std::size_t>(i)], d_fake[static_cast<std::size_t>(i)]);
  }
  return loss / static_cast<double>(n);
}

// Weighted combination used for the breakdown's gen field; the adv values
// are already -log D(fused) means, so this is just the lambda weighting.
inline double adversarial_loss_generator_value(double adv_ir, double adv_rgb, const LossWeights& w) {
  return w.lambda_ir * adv_ir + w.lambda_rgb * adv_rgb;
}

// Generator-phase objective over a batch: non-saturating adversarial terms
// against both discriminators, soft-binned KL, and L1, weighted per config.
// When accumulate_grads is set, runs the full backward into the generator
// parameters (discriminator gradients accumulated on the way must be cleared
// by the caller before the next discriminator update).
//
// The returned breakdown carries the soft-binned KL value: it is the
// quantity the optimizer sees, so total stays bitwise recomputable from the
// row. Hard-histogram KL is reported by the evaluation path instead.
template <typename S>
LossBreakdown generator_objective(FusionModel<S>& model, const Batch<S>& batch, const Tensor<S>& fused,
                                  const LossWeights& weights, bool kl_in_total, const KlSettings& kl_cfg,
                                  bool accumulate_grads) {
  weights.validate();
  const int n = batch.n();
  const int h = batch.h();
  const int w = batch.w();
  const std::size_t hw = static_cast<std::size_t>(h) * w;

  LossWeights effective = weights;
  if (!kl_in_total) effective.lambda_kl = 0.0;

  Tensor<S> probs_ir = model.disc_ir.forward(batch.ir, fused);
  const std::vector<double> d_ir = mean_patch_probs(probs_ir);
  Tensor<S> dfused(fused.shape());
  if (accumulate_grads) {
    Tensor<S> dprobs(probs_ir.shape());
    const std::size_t per = probs_ir.size() / static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i) {
      const double dd = effective.lambda_ir * detail::neg_log_grad(d_ir[static_cast<std::size_t>(i)]) /
                        (static_cast<double>(n) * static_cast<double>(per));
      S* p = dprobs.data() + static_cast<std::size_t>(i) * per;
      for (std::size_t e = 0; e < per; ++e) p[e] = static_cast<S>(dd);
    }
    Tensor<S> dsecond = model.disc_ir.backward(dprobs);
    for (std::size_t i = 0; i < dfused.size(); ++i) dfused[i] += dsecond[i];
  }

  Tensor<S> probs_rgb = model.disc_rgb.forward(batch.rgb, fused);
  const std::vector<double> d_rgb = mean_patch_probs(probs_rgb);
  if (accumulate_grads) {
    Tensor<S> dprobs(probs_rgb.shape());
    const std::size_t per = probs_rgb.size() / static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i) {
      const double dd = effective.lambda_rgb * detail::neg_log_grad(d_rgb[static_cast<std::size_t>(i)]) /
                        (static_cast<double>(n) * static_cast<double>(per));
      S* p = dprobs.data() + static_cast<std::size_t>(i) * per;
      for (std::size_t e = 0; e < per; ++e) p[e] = static_cast<S>(dd);
    }
    Tensor<S> dsecond = model.disc_rgb.backward(dprobs);
    for (std::size_t i = 0; i < dfused.size(); ++i) dfused[i] += dsecond[i];
  }

  double adv_ir = 0.0, adv_rgb = 0.0;
  for (int i = 0; i < n; ++i) {
    adv_ir += -std::log(clamp_prob(d_ir[static_cast<std::size_t>(i)]));
    adv_rgb += -std::log(clamp_prob(d_rgb[static_cast<std::size_t>(i)]));
  }
  adv_ir /= n;
  adv_rgb /= n;

  // Soft-binned KL per item; gradients reach the fused pixels through the
  // luminance conversion.
  double kl_value = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::vector<double> lum = detail::fused_luminance(fused, i);
    const SoftHistogram p = soft_histogram(lum, kl_cfg.bins, kl_cfg.epsilon, kl_cfg.sigma);
    const SoftHistogram q_ir = soft_histogram(detail::plane_values(batch.ir, i), kl_cfg.bins, kl_cfg.epsilon, kl_cfg.sigma);
    std::vector<double> rgb_lum(hw);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        rgb_lum[static_cast<std::size_t>(y) * w + x] = kLumaR * static_cast<double>(batch.rgb(i, 0, y, x)) +
                                                       kLumaG * static_cast<double>(batch.rgb(i, 1, y, x)) +
                                                       kLumaB * static_cast<double>(batch.rgb(i, 2, y, x));
      }
    }
    const SoftHistogram q_rgb = soft_histogram(rgb_lum, kl_cfg.bins, kl_cfg.epsilon, kl_cfg.sigma);

    double kli = 0.0;
    std::vector<double> dkl_dp(static_cast<std::size_t>(kl_cfg.bins), 0.0);
    for (int b = 0; b < kl_cfg.bins; ++b) {
      const double pv = p.probs[static_cast<std::size_t>(b)];
      const double qi = q_ir.probs[static_cast<std::size_t>(b)];
      const double qr = q_rgb.probs[static_cast<std::size_t>(b)];
      kli += pv * std::log(pv / qi) + pv * std::log(pv / qr);
      dkl_dp[static_cast<std::size_t>(b)] = (std::log(pv / qi) + 1.0) + (std::log(pv / qr) + 1.0);
    }
    kl_value += kli;

    if (accumulate_grads && effective.lambda_kl > 0.0) {
      const std::vector<double> dlum = soft_histogram_backward(p, dkl_dp);
      const double scale = effective.lambda_kl / static_cast<double>(n);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double g = scale * dlum[static_cast<std::size_t>(y) * w + x];
          dfused(i, 0, y, x) += static_cast<S>(g * kLumaR);
          dfused(i, 1, y, x) += static_cast<S>(g * kLumaG);
          dfused(i, 2, y, x) += static_cast<S>(g * kLumaB);
        }
      }
    }
  }
  kl_value /= n;

  // L1 against both sources, mean reduction per term.
  double l1_value = 0.0;
  const double inv_elems = 1.0 / (3.0 * static_cast<double>(hw));
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double f = static_cast<double>(fused(i, c, y, x));
          const double dt = f - static_cast<double>(batch.ir3(i, c, y, x));
          const double dr = f - static_cast<double>(batch.rgb(i, c, y, x));
          acc += std::abs(dt) + std::abs(dr);
          if (accumulate_grads && effective.lambda_l1 > 0.0) {
            const double sgn = ((dt > 0.0) - (dt < 0.0)) + ((dr > 0.0) - (dr < 0.0));
            dfused(i, c, y, x) += static_cast<S>(effective.lambda_l1 / n * sgn * inv_elems);
          }
        }
      }
    }
    l1_value += acc * inv_elems;
  }
  l1_value /= n;

  LossBreakdown b;
  b.adv_ir = adv_ir;
  b.adv_rgb = adv_rgb;
  b.gen = adversarial_loss_generator_value(adv_ir, adv_rgb, effective);
  b.kl = kl_value;
  b.l1 = l1_value;
  b.total = total_loss(b.gen, b.kl, b.l1, effective);

  if (accumulate_grads) {
    model.gen.backward(dfused);
  }
  return b;
}

}  // namespace misfit
