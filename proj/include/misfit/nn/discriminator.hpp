// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "misfit/core/error.hpp"
#include "misfit/nn/generator.hpp"
#include "misfit/nn/layers.hpp"

namespace misfit {

struct DiscriminatorConfig {
  int original_channels = 1;  // 1 for the thermal-side discriminator, 3 for visual
  int width = 32;
  int n_layers = 4;  // stride-2 stages

  void validate() const {
    if (original_channels != 1 && original_channels != 3) {
      throw ConfigError("discriminator config: original_channels must be 1 or 3");
    }
    if (width < 1) throw ConfigError("discriminator config: width must be >= 1");
    if (n_layers < 1 || n_layers > 6) throw ConfigError("discriminator config: n_layers must be in [1, 6]");
  }
};

// Patch discriminator over the channel concatenation of (original, fused).
// Emits a grid of per-patch probabilities; the scalar decision is their mean.
template <typename S>
class PatchDiscriminator {
 public:
  PatchDiscriminator(std::string name, const DiscriminatorConfig& cfg)
      : name_(std::move(name)), cfg_((cfg.validate(), cfg)),
        first_(name_ + ".conv0", cfg.original_channels + 3, cfg.width, 4, 2, 1, true) {
    int in_w = cfg_.width;
    for (int l = 1; l < cfg_.n_layers; ++l) {
      const int out_w = std::min(cfg_.width << l, cfg_.width * 8);
      mids_.push_back(std::make_unique<ConvBlock<S>>(name_ + ".conv" + std::to_string(l), in_w, out_w, 4, 2, 1));
      in_w = out_w;
    }
    head_ = std::make_unique<Conv2d<S>>(name_ + ".head", in_w, 1, 3, 1, 1, true);
  }

  const DiscriminatorConfig& config() const { return cfg_; }

  // original: (N, original_channels, H, W); second: (N, 3, H, W).
  Tensor<S> forward(const Tensor<S>& original, const Tensor<S>& second) {
    if (original.rank() != 4 || original.dim(1) != cfg_.original_channels) {
      throw ShapeError(name_ + ": original input has " +
                       (original.rank() == 4 ? std::to_string(original.dim(1)) : std::string("?")) +
                       " channels but this discriminator judges the " +
                       (cfg_.original_channels == 1 ? "thermal" : "visual") +
                       " modality (wrong modality discriminator?)");
    }
    if (second.rank() != 4 || second.dim(1) != 3) {
      throw ShapeError(name_ + ": fused-slot input must be (N,3,H,W), got " + second.shape_str());
    }
    if (original.dim(0) != second.dim(0) || original.dim(2) != second.dim(2) ||
        original.dim(3) != second.dim(3)) {
      throw ShapeError(name_ + ": original and fused-slot sizes differ: " + original.shape_str() + " vs " +
                       second.shape_str());
    }
    Tensor<S> x = first_.forward(concat_channels(original, second));
    x = first_act_.forward(x);
    for (auto& m : mids_) x = m->forward(x);
    return out_act_.forward(head_->forward(x));
  }

  // Returns the gradient with respect to the fused-slot input.
  Tensor<S> backward(const Tensor<S>& dprobs) {
    Tensor<S> d = head_->backward(out_act_.backward(dprobs));
    for (auto it = mids_.rbegin(); it != mids_.rend(); ++it) d = (*it)->backward(d);
    d = first_.backward(first_act_.backward(d));
    Tensor<S> d_original, d_second;
    split_channels(d, cfg_.original_channels, d_original, d_second);
    return d_second;
  }

  std::vector<ParamGroup<S>*> params() {
    std::vector<ParamGroup<S>*> out;
    first_.collect(out);
    for (auto& m : mids_) m->collect(out);
    head_->collect(out);
    return out;
  }

 private:
  std::string name_;
  DiscriminatorConfig cfg_;
  Conv2d<S> first_;
  LeakyRectifier<S> first_act_;
  std::vector<std::unique_ptr<ConvBlock<S>>> mids_;
  std::unique_ptr<Conv2d<S>> head_;
  Sigmoid<S> out_act_;
};

// Mean patch probability per batch item.
template <typename S>
std::vector<double> mean_patch_probs(const Tensor<S>& probs) {
  const int n = probs.dim(0);
  const std::size_t per = probs.size() / static_cast<std::size_t>(n);
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    const S* p = probs.data() + static_cast<std::size_t>(i) * per;
    for (std::size_t e = 0; e < per; ++e) acc += static_cast<double>(p[e]);
    out[static_cast<std::size_t>(i)] = acc / static_cast<double>(per);
  }
  return out;
}

}  // namespace misfit
