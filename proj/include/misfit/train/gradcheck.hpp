// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "misfit/data/resize.hpp"
#include "misfit/data/synthetic.hpp"
#include "misfit/train/config.hpp"
#include "misfit/train/gan.hpp"

namespace misfit {

struct GradCheckGroup {
  std::string name;
  std::size_t size = 0;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double worst = 0.0;

  bool passes(double threshold = 1e-4) const { return worst < threshold; }
};

namespace detail {

// Relative error with an absolute fallback for near-zero pairs.
inline double grad_rel_err(double analytic, double numeric) {
  const double denom = std::max(std::abs(analytic), std::abs(numeric));
  if (denom < 1e-8) {
    return std::abs(analytic - numeric) <= 1e-8 ? 0.0 : std::abs(analytic - numeric) / 1e-8;
  }
  return std::abs(analytic - numeric) / denom;
}

inline double check_group(ParamGroup<double>& group, const Tensor<double>& analytic,
                          const std::function<double()>& objective, double step) {
  double worst = 0.0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    const double saved = group.value[i];
    group.value[i] = saved + step;
    const double up = objective();
    group.value[i] = saved - step;
    const double down = objective();
    group.value[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, grad_rel_err(analytic[i], numeric));
  }
  return worst;
}

}  // namespace detail

// The small double-precision architecture used for verification.
inline TrainingConfig gradcheck_config() {
  TrainingConfig cfg;
  cfg.seed = 415;
  cfg.resolution_h = 16;
  cfg.resolution_w = 16;
  cfg.batch_size = 2;
  cfg.model.generator.down_width = 4;
  cfg.model.generator.feat_dim = 6;
  cfg.model.generator.d_model = 8;
  cfg.model.generator.n_heads = 2;
  cfg.model.generator.up_width = 4;
  cfg.model.generator.up_channels = 3;
  cfg.model.generator.unet_base = 4;
  cfg.model.generator.unet_depth = 2;
  cfg.model.disc_width = 4;
  cfg.model.disc_layers = 2;
  // Few wide bins and strong smoothing keep the soft-KL third derivatives
  // small enough for quadratic-accurate central differences.
  cfg.kl_bins = 16;
  cfg.kl_epsilon = 1e-3;
  return cfg;
}

// Central-difference verification of every parameter group at double
// precision: generator groups against the total generator objective (soft
// KL path), discriminator groups against their adversarial loss with the
// fused image held fixed. corrupt_group >= 0 scales that group's analytic
// gradient by 1.05 to prove the checker detects broken backward paths.
inline GradCheckReport gradient_check(std::uint64_t seed, int corrupt_group = -1, double fd_step = 1e-4) {
  TrainingConfig cfg = gradcheck_config();
  cfg.seed = seed;

  FusionModel<double> model(cfg.effective_generator(), cfg.model.disc_width, cfg.model.disc_layers);
  model.initialize(seed);
  // Verify at a generic parameter point: the scaled-normal init is nearly
  // symmetric and leaves some instance-norm channels with degenerate spatial
  // variance, whose extreme curvature swamps an h^2 difference quotient.
  {
    Rng jitter(mix_seed(seed, 0x6a746472ULL));
    for (auto* g : model.all_params()) {
      for (std::size_t i = 0; i < g->size(); ++i) g->value[i] += jitter.normal(0.0, 0.25);
    }
  }

  // Two synthetic scenes at the verification resolution. Intensities are
  // pushed into bands away from 0.5 so no L1 kink |fused - target| sits
  // within the finite-difference step of the near-0.5 untrained outputs, and
  // per-pixel noise inside each band keeps every channel spatially varied
  // (a near-constant instance-norm input has curvature an h^2 quotient
  // cannot resolve).
  std::vector<ImagePair> pairs;
  Rng texture(mix_seed(seed, 0x74657874ULL));
  for (int i = 0; i < cfg.batch_size; ++i) {
    auto [pair, truth] = generate_synthetic_scene(mix_seed(seed, 900 + static_cast<std::uint64_t>(i)), 32, 32, 2);
    ImagePair scaled;
    scaled.visual = resize_bilinear(pair.visual, cfg.resolution_h, cfg.resolution_w);
    scaled.thermal = resize_bilinear(pair.thermal, cfg.resolution_h, cfg.resolution_w);
    for (Image* img : {&scaled.visual, &scaled.thermal}) {
      for (float& v : img->px) {
        const float centered = std::round(v * 5.0f) / 5.0f - 0.5f;
        v = 0.5f + (centered < 0.0f ? -1.0f : 1.0f) * (0.2f + 0.6f * std::abs(centered));
        const float lo = v < 0.5f ? 0.0f : 0.7f;
        v = std::clamp(v + static_cast<float>(texture.uniform(-0.06, 0.06)), lo, lo + 0.3f);
      }
    }
    pairs.push_back(std::move(scaled));
  }
  std::vector<const ImagePair*> ptrs;
  for (const auto& p : pairs) ptrs.push_back(&p);
  const Batch<double> batch = make_batch<double>(ptrs);

  KlSettings kl;
  kl.bins = cfg.kl_bins;
  kl.epsilon = cfg.kl_epsilon;
  kl.sigma = 1.5 / cfg.kl_bins;
  const LossWeights weights = cfg.effective_weights();

  GradCheckReport report;
  int group_index = 0;

  // Generator groups against the full generator-phase objective.
  {
    model.zero_all_grads();
    auto fwd = model.gen.forward(batch.rgb, batch.ir);
    generator_objective(model, batch, fwd.fused, weights, cfg.kl_in_total(), kl, true);
    std::vector<Tensor<double>> analytic;
    for (auto* g : model.gen.params()) analytic.push_back(g->grad);

    auto objective = [&]() {
      auto f = model.gen.forward(batch.rgb, batch.ir);
      return generator_objective(model, batch, f.fused, weights, cfg.kl_in_total(), kl, false).total;
    };
    const auto groups = model.gen.params();
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      Tensor<double> a = analytic[gi];
      if (group_index == corrupt_group) {
        for (std::size_t e = 0; e < a.size(); ++e) a[e] *= 1.05;
      }
      GradCheckGroup entry;
      entry.name = groups[gi]->name;
      entry.size = groups[gi]->size();
      entry.max_rel_err = detail::check_group(*groups[gi], a, objective, fd_step);
      report.worst = std::max(report.worst, entry.max_rel_err);
      report.groups.push_back(std::move(entry));
      ++group_index;
    }
  }

  // Discriminator groups against their own adversarial losses; the fused
  // image is a constant input here.
  auto fwd = model.gen.forward(batch.rgb, batch.ir);
  const Tensor<double> fused = fwd.fused;
  struct DiscCase {
    PatchDiscriminator<double>* disc;
    const Tensor<double>* original;
    const Tensor<double>* real_second;
  };
  const DiscCase cases[] = {{&model.disc_ir, &batch.ir, &batch.ir3}, {&model.disc_rgb, &batch.rgb, &batch.rgb}};
  for (const auto& dc : cases) {
    for (auto* g : dc.disc->params()) g->zero_grad();
    discriminator_objective(*dc.disc, *dc.original, *dc.real_second, fused, true);
    std::vector<Tensor<double>> analytic;
    for (auto* g : dc.disc->params()) analytic.push_back(g->grad);

    auto objective = [&]() {
      return discriminator_objective(*dc.disc, *dc.original, *dc.real_second, fused, false);
    };
    const auto groups = dc.disc->params();
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      Tensor<double> a = analytic[gi];
      if (group_index == corrupt_group) {
        for (std::size_t e = 0; e < a.size(); ++e) a[e] *= 1.05;
      }
      GradCheckGroup entry;
      entry.name = groups[gi]->name;
      entry.size = groups[gi]->size();
      entry.max_rel_err = detail::check_group(*groups[gi], a, objective, fd_step);
      report.worst = std::max(report.worst, entry.max_rel_err);
      report.groups.push_back(std::move(entry));
      ++group_index;
    }
  }

  return report;
}

}  // namespace misfit
