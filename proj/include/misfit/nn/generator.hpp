// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "misfit/core/error.hpp"
#include "misfit/nn/attention.hpp"
#include "misfit/nn/layers.hpp"

namespace misfit {

// conv (bias-free) + instance norm + leaky relu
template <typename S>
struct ConvBlock {
  Conv2d<S> conv;
  InstanceNorm2d<S> norm;
  LeakyRectifier<S> act;

  ConvBlock(const std::string& name, int in_c, int out_c, int k, int stride, int pad)
      : conv(name + ".conv", in_c, out_c, k, stride, pad, false), norm(name + ".norm", out_c) {}

  Tensor<S> forward(const Tensor<S>& x) { return act.forward(norm.forward(conv.forward(x))); }
  Tensor<S> backward(const Tensor<S>& dy) { return conv.backward(norm.backward(act.backward(dy))); }
  void collect(std::vector<ParamGroup<S>*>& out) {
    conv.collect(out);
    norm.collect(out);
  }
};

template <typename S>
struct TconvBlock {
  ConvTranspose2d<S> conv;
  InstanceNorm2d<S> norm;
  LeakyRectifier<S> act;

  TconvBlock(const std::string& name, int in_c, int out_c, int k, int stride, int pad)
      : conv(name + ".tconv", in_c, out_c, k, stride, pad, false), norm(name + ".norm", out_c) {}

  Tensor<S> forward(const Tensor<S>& x) { return act.forward(norm.forward(conv.forward(x))); }
  Tensor<S> backward(const Tensor<S>& dy) { return conv.backward(norm.backward(act.backward(dy))); }
  void collect(std::vector<ParamGroup<S>*>& out) {
    conv.collect(out);
    norm.collect(out);
  }
};

// Encoder-decoder with skip concatenation and a sigmoid 3-channel head.
template <typename S>
class UNet {
 public:
  UNet(const std::string& name, int in_channels, int base_width, int depth) : in_channels_(in_channels) {
    if (depth < 1 || depth > 6) throw ConfigError("unet " + name + ": depth must be in [1, 6]");
    if (base_width < 1) throw ConfigError("unet " + name + ": base width must be >= 1");
    if (in_channels < 1) {
      throw ConfigError("unet " + name + ": input channel count " + std::to_string(in_channels) + " is invalid");
    }
    widths_.resize(static_cast<std::size_t>(depth));
    for (int l = 0; l < depth; ++l) {
      widths_[static_cast<std::size_t>(l)] = std::min(base_width << l, base_width * 8);
    }
    for (int l = 0; l < depth; ++l) {
      const int in_c = (l == 0) ? in_channels : widths_[static_cast<std::size_t>(l - 1)];
      encs_.push_back(
          std::make_unique<ConvBlock<S>>(name + ".enc" + std::to_string(l), in_c, widths_[static_cast<std::size_t>(l)], 4, 2, 1));
    }
    for (int l = depth - 1; l >= 1; --l) {
      ups_.push_back(std::make_unique<TconvBlock<S>>(name + ".up" + std::to_string(l),
                                                     widths_[static_cast<std::size_t>(l)],
                                                     widths_[static_cast<std::size_t>(l - 1)], 4, 2, 1));
      fuses_.push_back(std::make_unique<ConvBlock<S>>(name + ".fuse" + std::to_string(l),
                                                      2 * widths_[static_cast<std::size_t>(l - 1)],
                                                      widths_[static_cast<std::size_t>(l - 1)], 3, 1, 1));
    }
    final_up_ = std::make_unique<TconvBlock<S>>(name + ".topup", widths_[0], base_width, 4, 2, 1);
    head_ = std::make_unique<Conv2d<S>>(name + ".head", base_width, 3, 3, 1, 1, true);
  }

  Tensor<S> forward(const Tensor<S>& x) {
    if (x.dim(1) != in_channels_) {
      throw ConfigError("unet: input has " + std::to_string(x.dim(1)) + " channels, expected " +
                        std::to_string(in_channels_));
    }
    const int depth = static_cast<int>(encs_.size());
    enc_shapes_.clear();
    std::vector<Tensor<S>> e;
    Tensor<S> cur = x;
    for (int l = 0; l < depth; ++l) {
      cur = encs_[static_cast<std::size_t>(l)]->forward(cur);
      enc_shapes_.push_back(cur.shape());
      e.push_back(cur);
    }
    for (int l = depth - 1; l >= 1; --l) {
      const std::size_t di = static_cast<std::size_t>(depth - 1 - l);
      Tensor<S> up = ups_[di]->forward(cur);
      cur = fuses_[di]->forward(concat_channels(up, e[static_cast<std::size_t>(l - 1)]));
    }
    cur = final_up_->forward(cur);
    return out_act_.forward(head_->forward(cur));
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const int depth = static_cast<int>(encs_.size());
    Tensor<S> d = final_up_->backward(head_->backward(out_act_.backward(dy)));
    std::vector<Tensor<S>> d_skip(static_cast<std::size_t>(depth));
    for (int l = 1; l <= depth - 1; ++l) {
      const std::size_t di = static_cast<std::size_t>(depth - 1 - l);
      Tensor<S> dconcat = fuses_[di]->backward(d);
      Tensor<S> d_up, d_e;
      split_channels(dconcat, widths_[static_cast<std::size_t>(l - 1)], d_up, d_e);
      d_skip[static_cast<std::size_t>(l - 1)] = std::move(d_e);
      d = ups_[di]->backward(d_up);
    }
    // d now targets the deepest encoder output.
    for (int l = depth - 1; l >= 1; --l) {
      Tensor<S> din = encs_[static_cast<std::size_t>(l)]->backward(d);
      d = std::move(din);
      Tensor<S>& skip = d_skip[static_cast<std::size_t>(l - 1)];
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += skip[i];
    }
    return encs_[0]->backward(d);
  }

  void collect(std::vector<ParamGroup<S>*>& out) {
    for (auto& m : encs_) m->collect(out);
    for (auto& m : ups_) m->collect(out);
    for (auto& m : fuses_) m->collect(out);
    final_up_->collect(out);
    head_->collect(out);
  }

 private:
  int in_channels_;
  std::vector<int> widths_;
  std::vector<std::unique_ptr<ConvBlock<S>>> encs_;
  std::vector<std::unique_ptr<TconvBlock<S>>> ups_;
  std::vector<std::unique_ptr<ConvBlock<S>>> fuses_;
  std::unique_ptr<TconvBlock<S>> final_up_;
  std::unique_ptr<Conv2d<S>> head_;
  Sigmoid<S> out_act_;
  std::vector<std::vector<int>> enc_shapes_;
};

struct GeneratorConfig {
  int down_width = 32;
  int feat_dim = 64;  // branch output depth, equals the attention feature dim
  int d_model = 64;
  int n_heads = 4;
  bool positional_encoding = false;
  bool use_attention = true;
  int up_width = 32;
  int up_channels = 16;  // per-branch channels handed to the U-Net
  int unet_base = 32;
  int unet_depth = 4;

  void validate() const {
    if (down_width < 1 || feat_dim < 1 || d_model < 1 || up_width < 1 || up_channels < 1 || unet_base < 1) {
      throw ConfigError("generator config: widths must be >= 1");
    }
    if (n_heads < 1 || d_model % n_heads != 0) {
      throw ConfigError("generator config: d_model must be divisible by n_heads");
    }
    if (unet_depth < 1 || unet_depth > 6) throw ConfigError("generator config: unet_depth must be in [1, 6]");
  }

  // Input sizes must be divisible by this for all stages to line up.
  int downsample_factor() const { return std::max(4, 1 << unet_depth); }
};

// Full fusion generator: per-modality down branches, query-exchanged
// cross-attention, feature multiply, per-modality up branches, concatenation,
// U-Net with sigmoid output.
template <typename S>
class Generator {
 public:
  explicit Generator(const GeneratorConfig& cfg)
      : cfg_((cfg.validate(), cfg)),
        down_rgb1_("gen.down_rgb1", 3, cfg.down_width, 4, 2, 1, false),
        down_rgb2_("gen.down_rgb2", cfg.down_width, cfg.feat_dim, 4, 2, 1, false),
        down_ir1_("gen.down_ir1", 1, cfg.down_width, 4, 2, 1, false),
        down_ir2_("gen.down_ir2", cfg.down_width, cfg.feat_dim, 4, 2, 1, false),
        down_rgb_n1_("gen.down_rgb1.norm", cfg.down_width),
        down_rgb_n2_("gen.down_rgb2.norm", cfg.feat_dim),
        down_ir_n1_("gen.down_ir1.norm", cfg.down_width),
        down_ir_n2_("gen.down_ir2.norm", cfg.feat_dim),
        up_rgb1_("gen.up_rgb1", cfg.feat_dim, cfg.up_width, 4, 2, 1, false),
        up_rgb2_("gen.up_rgb2", cfg.up_width, cfg.up_channels, 4, 2, 1, false),
        up_ir1_("gen.up_ir1", cfg.feat_dim, cfg.up_width, 4, 2, 1, false),
        up_ir2_("gen.up_ir2", cfg.up_width, cfg.up_channels, 4, 2, 1, false),
        up_rgb_n1_("gen.up_rgb1.norm", cfg.up_width),
        up_rgb_n2_("gen.up_rgb2.norm", cfg.up_channels),
        up_ir_n1_("gen.up_ir1.norm", cfg.up_width),
        up_ir_n2_("gen.up_ir2.norm", cfg.up_channels),
        unet_("gen.unet", 2 * cfg.up_channels, cfg.unet_base, cfg.unet_depth) {
    if (cfg_.use_attention) {
      attention_.emplace("gen.attn", cfg_.feat_dim, cfg_.d_model, cfg_.n_heads, cfg_.positional_encoding);
    }
  }

  const GeneratorConfig& config() const { return cfg_; }

  struct ForwardResult {
    Tensor<S> fused;            // (N, 3, H, W), strictly inside (0, 1)
    Tensor<S> map_rgb_queries;  // empty when attention is disabled
    Tensor<S> map_ir_queries;
    int attn_h = 0;  // attention grid (input / 4)
    int attn_w = 0;
  };

  ForwardResult forward(const Tensor<S>& rgb, const Tensor<S>& ir) {
    if (rgb.rank() != 4 || ir.rank() != 4 || rgb.dim(1) != 3 || ir.dim(1) != 1) {
      throw ShapeError("generator: expected rgb (N,3,H,W) and ir (N,1,H,W)");
    }
    if (rgb.dim(0) != ir.dim(0) || rgb.dim(2) != ir.dim(2) || rgb.dim(3) != ir.dim(3)) {
      throw ShapeError("generator: pair not preprocessed to a common resolution: rgb " + rgb.shape_str() +
                       " vs ir " + ir.shape_str());
    }
    const int factor = cfg_.downsample_factor();
    if (rgb.dim(2) % factor != 0 || rgb.dim(3) % factor != 0) {
      throw ShapeError("generator: input size must be divisible by " + std::to_string(factor));
    }

    feat_rgb_ = down_rgb2_.forward(down_rgb_act1_.forward(down_rgb_n1_.forward(down_rgb1_.forward(rgb))));
    feat_rgb_ = down_rgb_act2_.forward(down_rgb_n2_.forward(feat_rgb_));
    feat_ir_ = down_ir2_.forward(down_ir_act1_.forward(down_ir_n1_.forward(down_ir1_.forward(ir))));
    feat_ir_ = down_ir_act2_.forward(down_ir_n2_.forward(feat_ir_));

    ForwardResult result;
    result.attn_h = feat_rgb_.dim(2);
    result.attn_w = feat_rgb_.dim(3);

    if (attention_.has_value()) {
      auto att = attention_->forward(feat_rgb_, feat_ir_);
      attended_rgb_ = std::move(att.attended_rgb);
      attended_ir_ = std::move(att.attended_ir);
      result.map_rgb_queries = std::move(att.map_rgb_queries);
      result.map_ir_queries = std::move(att.map_ir_queries);
    } else {
      // Ablation: identity pass-through in place of the attention module.
      attended_rgb_ = feat_rgb_;
      attended_ir_ = feat_ir_;
    }

    Tensor<S> m_rgb(feat_rgb_.shape());
    Tensor<S> m_ir(feat_ir_.shape());
    for (std::size_t i = 0; i < m_rgb.size(); ++i) m_rgb[i] = attended_rgb_[i] * feat_rgb_[i];
    for (std::size_t i = 0; i < m_ir.size(); ++i) m_ir[i] = attended_ir_[i] * feat_ir_[i];

    Tensor<S> u_rgb = up_rgb_act1_.forward(up_rgb_n1_.forward(up_rgb1_.forward(m_rgb)));
    u_rgb = up_rgb_act2_.forward(up_rgb_n2_.forward(up_rgb2_.forward(u_rgb)));
    Tensor<S> u_ir = up_ir_act1_.forward(up_ir_n1_.forward(up_ir1_.forward(m_ir)));
    u_ir = up_ir_act2_.forward(up_ir_n2_.forward(up_ir2_.forward(u_ir)));

    result.fused = unet_.forward(concat_channels(u_rgb, u_ir));
    return result;
  }

  void backward(const Tensor<S>& dfused) {
    Tensor<S> dcat = unet_.backward(dfused);
    Tensor<S> du_rgb, du_ir;
    split_channels(dcat, cfg_.up_channels, du_rgb, du_ir);

    Tensor<S> dm_rgb = up_rgb1_.backward(
        up_rgb_n1_.backward(up_rgb_act1_.backward(up_rgb2_.backward(up_rgb_n2_.backward(up_rgb_act2_.backward(du_rgb))))));
    Tensor<S> dm_ir = up_ir1_.backward(
        up_ir_n1_.backward(up_ir_act1_.backward(up_ir2_.backward(up_ir_n2_.backward(up_ir_act2_.backward(du_ir))))));

    Tensor<S> d_attended_rgb(feat_rgb_.shape());
    Tensor<S> d_attended_ir(feat_ir_.shape());
    Tensor<S> dfeat_rgb(feat_rgb_.shape());
    Tensor<S> dfeat_ir(feat_ir_.shape());
    for (std::size_t i = 0; i < dm_rgb.size(); ++i) {
      d_attended_rgb[i] = dm_rgb[i] * feat_rgb_[i];
      dfeat_rgb[i] = dm_rgb[i] * attended_rgb_[i];
    }
    for (std::size_t i = 0; i < dm_ir.size(); ++i) {
      d_attended_ir[i] = dm_ir[i] * feat_ir_[i];
      dfeat_ir[i] = dm_ir[i] * attended_ir_[i];
    }

    if (attention_.has_value()) {
      attention_->backward(d_attended_rgb, d_attended_ir, dfeat_rgb, dfeat_ir);
    } else {
      for (std::size_t i = 0; i < dfeat_rgb.size(); ++i) dfeat_rgb[i] += d_attended_rgb[i];
      for (std::size_t i = 0; i < dfeat_ir.size(); ++i) dfeat_ir[i] += d_attended_ir[i];
    }

    down_rgb1_.backward(down_rgb_n1_.backward(
        down_rgb_act1_.backward(down_rgb2_.backward(down_rgb_n2_.backward(down_rgb_act2_.backward(dfeat_rgb))))));
    down_ir1_.backward(down_ir_n1_.backward(
        down_ir_act1_.backward(down_ir2_.backward(down_ir_n2_.backward(down_ir_act2_.backward(dfeat_ir))))));
  }

  std::vector<ParamGroup<S>*> params() {
    std::vector<ParamGroup<S>*> out;
    down_rgb1_.collect(out);
    down_rgb_n1_.collect(out);
    down_rgb2_.collect(out);
    down_rgb_n2_.collect(out);
    down_ir1_.collect(out);
    down_ir_n1_.collect(out);
    down_ir2_.collect(out);
    down_ir_n2_.collect(out);
    if (attention_.has_value()) attention_->collect(out);
    up_rgb1_.collect(out);
    up_rgb_n1_.collect(out);
    up_rgb2_.collect(out);
    up_rgb_n2_.collect(out);
    up_ir1_.collect(out);
    up_ir_n1_.collect(out);
    up_ir2_.collect(out);
    up_ir_n2_.collect(out);
    unet_.collect(out);
    return out;
  }

 private:
  GeneratorConfig cfg_;

  Conv2d<S> down_rgb1_, down_rgb2_, down_ir1_, down_ir2_;
  InstanceNorm2d<S> down_rgb_n1_, down_rgb_n2_, down_ir_n1_, down_ir_n2_;
  LeakyRectifier<S> down_rgb_act1_, down_rgb_act2_, down_ir_act1_, down_ir_act2_;

  ConvTranspose2d<S> up_rgb1_, up_rgb2_, up_ir1_, up_ir2_;
  InstanceNorm2d<S> up_rgb_n1_, up_rgb_n2_, up_ir_n1_, up_ir_n2_;
  LeakyRectifier<S> up_rgb_act1_, up_rgb_act2_, up_ir_act1_, up_ir_act2_;

  std::optional<CrossAttention<S>> attention_;
  UNet<S> unet_;

  Tensor<S> feat_rgb_, feat_ir_, attended_rgb_, attended_ir_;
};

}  // namespace misfit
