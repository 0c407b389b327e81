// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "misfit/core/error.hpp"
#include "misfit/core/rng.hpp"
#include "misfit/core/tensor.hpp"

namespace misfit {

template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapRM = Eigen::Map<MatrixRM<S>>;
template <typename S>
using ConstMapRM = Eigen::Map<const MatrixRM<S>>;

// One named tensor of trainable values with its accumulated gradient.
template <typename S>
struct ParamGroup {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;

  ParamGroup() = default;
  ParamGroup(std::string n, std::vector<int> shape) : name(std::move(n)), value(shape), grad(shape) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { grad.zero(); }
};

template <typename S>
std::size_t count_parameters(const std::vector<ParamGroup<S>*>& groups) {
  std::size_t n = 0;
  for (const auto* g : groups) n += g->size();
  return n;
}

// Fills weight-style groups with N(0, 0.02), bias-style with 0, and norm
// gains with 1, in deterministic group order.
template <typename S>
void init_parameters(const std::vector<ParamGroup<S>*>& groups, Rng& rng) {
  for (auto* g : groups) {
    if (g->name.ends_with(".gain")) {
      g->value.fill(S(1));
    } else if (g->name.ends_with(".bias")) {
      g->value.fill(S(0));
    } else {
      for (std::size_t i = 0; i < g->value.size(); ++i) {
        g->value[i] = static_cast<S>(rng.normal(0.0, 0.02));
      }
    }
    g->zero_grad();
  }
}

namespace detail {

// Shared indexing for conv/transposed-conv: image coordinate = grid*stride -
// pad + kernel offset. gather reads image samples into a (C*k*k, Gh*Gw)
// column matrix; scatter adds them back.
template <typename S>
void gather_cols(const S* img, int c_img, int h_img, int w_img, int k, int stride, int pad, int gh, int gw,
                 S* col) {
  const int grid = gh * gw;
  for (int c = 0; c < c_img; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        S* row = col + (static_cast<std::size_t>(c) * k * k + static_cast<std::size_t>(ky) * k + kx) *
                           static_cast<std::size_t>(grid);
        for (int y = 0; y < gh; ++y) {
          const int yy = y * stride - pad + ky;
          const bool y_ok = yy >= 0 && yy < h_img;
          const S* src = img + (static_cast<std::size_t>(c) * h_img + yy) * w_img;
          for (int x = 0; x < gw; ++x) {
            const int xx = x * stride - pad + kx;
            row[static_cast<std::size_t>(y) * gw + x] = (y_ok && xx >= 0 && xx < w_img) ? src[xx] : S(0);
          }
        }
      }
    }
  }
}

template <typename S>
void scatter_cols_add(const S* col, int c_img, int h_img, int w_img, int k, int stride, int pad, int gh, int gw,
                      S* img) {
  const int grid = gh * gw;
  for (int c = 0; c < c_img; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const S* row = col + (static_cast<std::size_t>(c) * k * k + static_cast<std::size_t>(ky) * k + kx) *
                                 static_cast<std::size_t>(grid);
        for (int y = 0; y < gh; ++y) {
          const int yy = y * stride - pad + ky;
          if (yy < 0 || yy >= h_img) continue;
          S* dst = img + (static_cast<std::size_t>(c) * h_img + yy) * w_img;
          for (int x = 0; x < gw; ++x) {
            const int xx = x * stride - pad + kx;
            if (xx >= 0 && xx < w_img) dst[xx] += row[static_cast<std::size_t>(y) * gw + x];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Strided 2D convolution over (N, C, H, W), zero padding.
template <typename S>
class Conv2d {
 public:
  Conv2d(std::string name, int in_c, int out_c, int k, int stride, int pad, bool use_bias)
      : name_(std::move(name)),
        in_c_(in_c),
        out_c_(out_c),
        k_(k),
        stride_(stride),
        pad_(pad),
        use_bias_(use_bias),
        weight_(name_ + ".weight", {out_c, in_c * k * k}),
        bias_(name_ + ".bias", {use_bias ? out_c : 0}) {
    if (in_c < 1 || out_c < 1 || k < 1 || stride < 1 || pad < 0) {
      throw ConfigError("conv " + name_ + ": invalid geometry");
    }
  }

  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }
  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }

  Tensor<S> forward(const Tensor<S>& x) {
    if (x.rank() != 4 || x.dim(1) != in_c_) {
      throw ShapeError("conv " + name_ + ": expected (N," + std::to_string(in_c_) + ",H,W), got " + x.shape_str());
    }
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int ho = out_size(h), wo = out_size(w);
    if (ho < 1 || wo < 1) throw ShapeError("conv " + name_ + ": input too small " + x.shape_str());
    x_ = x;
    ho_ = ho;
    wo_ = wo;
    const int grid = ho * wo;
    Tensor<S> y({n, out_c_, ho, wo});
    col_.assign(static_cast<std::size_t>(n) * in_c_ * k_ * k_ * grid, S(0));
    ConstMapRM<S> wm(weight_.value.data(), out_c_, in_c_ * k_ * k_);
    for (int i = 0; i < n; ++i) {
      S* col = col_.data() + static_cast<std::size_t>(i) * in_c_ * k_ * k_ * grid;
      detail::gather_cols(x.data() + static_cast<std::size_t>(i) * in_c_ * h * w, in_c_, h, w, k_, stride_, pad_,
                          ho, wo, col);
      MapRM<S> ym(y.data() + static_cast<std::size_t>(i) * out_c_ * grid, out_c_, grid);
      ym.noalias() = wm * ConstMapRM<S>(col, in_c_ * k_ * k_, grid);
      if (use_bias_) {
        for (int c = 0; c < out_c_; ++c) ym.row(c).array() += bias_.value[static_cast<std::size_t>(c)];
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    const int grid = ho_ * wo_;
    Tensor<S> dx(x_.shape());
    MapRM<S> dwm(weight_.grad.data(), out_c_, in_c_ * k_ * k_);
    ConstMapRM<S> wm(weight_.value.data(), out_c_, in_c_ * k_ * k_);
    std::vector<S> dcol(static_cast<std::size_t>(in_c_) * k_ * k_ * grid);
    for (int i = 0; i < n; ++i) {
      ConstMapRM<S> dym(dy.data() + static_cast<std::size_t>(i) * out_c_ * grid, out_c_, grid);
      ConstMapRM<S> colm(col_.data() + static_cast<std::size_t>(i) * in_c_ * k_ * k_ * grid, in_c_ * k_ * k_,
                         grid);
      dwm.noalias() += dym * colm.transpose();
      if (use_bias_) {
        for (int c = 0; c < out_c_; ++c) bias_.grad[static_cast<std::size_t>(c)] += dym.row(c).sum();
      }
      MapRM<S> dcolm(dcol.data(), in_c_ * k_ * k_, grid);
      dcolm.noalias() = wm.transpose() * dym;
      detail::scatter_cols_add(dcol.data(), in_c_, h, w, k_, stride_, pad_, ho_, wo_,
                               dx.data() + static_cast<std::size_t>(i) * in_c_ * h * w);
    }
    return dx;
  }

  void collect(std::vector<ParamGroup<S>*>& out) {
    out.push_back(&weight_);
    if (use_bias_) out.push_back(&bias_);
  }

 private:
  std::string name_;
  int in_c_, out_c_, k_, stride_, pad_;
  bool use_bias_;
  ParamGroup<S> weight_;
  ParamGroup<S> bias_;
  Tensor<S> x_;
  std::vector<S> col_;
  int ho_ = 0, wo_ = 0;
};

// Transposed convolution; output = (in-1)*stride - 2*pad + k.
template <typename S>
class ConvTranspose2d {
 public:
  ConvTranspose2d(std::string name, int in_c, int out_c, int k, int stride, int pad, bool use_bias)
      : name_(std::move(name)),
        in_c_(in_c),
        out_c_(out_c),
        k_(k),
        stride_(stride),
        pad_(pad),
        use_bias_(use_bias),
        weight_(name_ + ".weight", {in_c, out_c * k * k}),
        bias_(name_ + ".bias", {use_bias ? out_c : 0}) {
    if (in_c < 1 || out_c < 1 || k < 1 || stride < 1 || pad < 0) {
      throw ConfigError("tconv " + name_ + ": invalid geometry");
    }
  }

  int out_size(int in) const { return (in - 1) * stride_ - 2 * pad_ + k_; }

  Tensor<S> forward(const Tensor<S>& x) {
    if (x.rank() != 4 || x.dim(1) != in_c_) {
      throw ShapeError("tconv " + name_ + ": expected (N," + std::to_string(in_c_) + ",H,W), got " +
                       x.shape_str());
    }
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int ho = out_size(h), wo = out_size(w);
    if (ho < 1 || wo < 1) throw ShapeError("tconv " + name_ + ": input too small " + x.shape_str());
    x_ = x;
    ho_ = ho;
    wo_ = wo;
    const int grid = h * w;
    Tensor<S> y({n, out_c_, ho, wo});
    ConstMapRM<S> wm(weight_.value.data(), in_c_, out_c_ * k_ * k_);
    std::vector<S> colt(static_cast<std::size_t>(out_c_) * k_ * k_ * grid);
    for (int i = 0; i < n; ++i) {
      ConstMapRM<S> xm(x.data() + static_cast<std::size_t>(i) * in_c_ * grid, in_c_, grid);
      MapRM<S> coltm(colt.data(), out_c_ * k_ * k_, grid);
      coltm.noalias() = wm.transpose() * xm;
      S* yp = y.data() + static_cast<std::size_t>(i) * out_c_ * ho * wo;
      detail::scatter_cols_add(colt.data(), out_c_, ho, wo, k_, stride_, pad_, h, w, yp);
      if (use_bias_) {
        for (int c = 0; c < out_c_; ++c) {
          S* plane = yp + static_cast<std::size_t>(c) * ho * wo;
          const S b = bias_.value[static_cast<std::size_t>(c)];
          for (int p = 0; p < ho * wo; ++p) plane[p] += b;
        }
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    const int grid = h * w;
    Tensor<S> dx(x_.shape());
    ConstMapRM<S> wm(weight_.value.data(), in_c_, out_c_ * k_ * k_);
    MapRM<S> dwm(weight_.grad.data(), in_c_, out_c_ * k_ * k_);
    std::vector<S> dcolt(static_cast<std::size_t>(out_c_) * k_ * k_ * grid);
    for (int i = 0; i < n; ++i) {
      const S* dyp = dy.data() + static_cast<std::size_t>(i) * out_c_ * ho_ * wo_;
      detail::gather_cols(dyp, out_c_, ho_, wo_, k_, stride_, pad_, h, w, dcolt.data());
      ConstMapRM<S> dcoltm(dcolt.data(), out_c_ * k_ * k_, grid);
      ConstMapRM<S> xm(x_.data() + static_cast<std::size_t>(i) * in_c_ * grid, in_c_, grid);
      MapRM<S> dxm(dx.data() + static_cast<std::size_t>(i) * in_c_ * grid, in_c_, grid);
      dxm.noalias() = wm * dcoltm;
      dwm.noalias() += xm * dcoltm.transpose();
      if (use_bias_) {
        for (int c = 0; c < out_c_; ++c) {
          const S* plane = dyp + static_cast<std::size_t>(c) * ho_ * wo_;
          S acc = S(0);
          for (int p = 0; p < ho_ * wo_; ++p) acc += plane[p];
          bias_.grad[static_cast<std::size_t>(c)] += acc;
        }
      }
    }
    return dx;
  }

  void collect(std::vector<ParamGroup<S>*>& out) {
    out.push_back(&weight_);
    if (use_bias_) out.push_back(&bias_);
  }

 private:
  std::string name_;
  int in_c_, out_c_, k_, stride_, pad_;
  bool use_bias_;
  ParamGroup<S> weight_;
  ParamGroup<S> bias_;
  Tensor<S> x_;
  int ho_ = 0, wo_ = 0;
};

// Per-sample, per-channel normalization over the spatial extent with an
// affine gain/bias. Convolutions feeding this layer run without bias, since
// the mean subtraction would cancel it.
template <typename S>
class InstanceNorm2d {
 public:
  InstanceNorm2d(std::string name, int channels, double eps = 1e-2)
      : name_(std::move(name)),
        channels_(channels),
        eps_(eps),
        gain_(name_ + ".gain", {channels}),
        bias_(name_ + ".bias", {channels}) {}

  Tensor<S> forward(const Tensor<S>& x) {
    if (x.rank() != 4 || x.dim(1) != channels_) {
      throw ShapeError("instance_norm " + name_ + ": bad input " + x.shape_str());
    }
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int hw = h * w;
    xhat_ = Tensor<S>(x.shape());
    inv_std_.assign(static_cast<std::size_t>(n) * channels_, S(0));
    Tensor<S> y(x.shape());
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < channels_; ++c) {
        const S* px = x.data() + (static_cast<std::size_t>(i) * channels_ + c) * hw;
        S* pxh = xhat_.data() + (static_cast<std::size_t>(i) * channels_ + c) * hw;
        S* py = y.data() + (static_cast<std::size_t>(i) * channels_ + c) * hw;
        S mean = S(0);
        for (int p = 0; p < hw; ++p) mean += px[p];
        mean /= static_cast<S>(hw);
        S var = S(0);
        for (int p = 0; p < hw; ++p) {
          const S d = px[p] - mean;
          var += d * d;
        }
        var /= static_cast<S>(hw);
        const S inv = S(1) / std::sqrt(var + static_cast<S>(eps_));
        inv_std_[static_cast<std::size_t>(i) * channels_ + c] = inv;
        const S g = gain_.value[static_cast<std::size_t>(c)];
        const S b = bias_.value[static_cast<std::size_t>(c)];
        for (int p = 0; p < hw; ++p) {
          pxh[p] = (px[p] - mean) * inv;
          py[p] = g * pxh[p] + b;
        }
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const int n = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    const int hw = h * w;
    Tensor<S> dx(dy.shape());
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < channels_; ++c) {
        const S* pdy = dy.data() + (static_cast<std::size_t>(i) * channels_ + c) * hw;
        const S* pxh = xhat_.data() + (static_cast<std::size_t>(i) * channels_ + c) * hw;
        S* pdx = dx.data() + (static_cast<std::size_t>(i) * channels_ + c) * hw;
        const S g = gain_.value[static_cast<std::size_t>(c)];
        const S inv = inv_std_[static_cast<std::size_t>(i) * channels_ + c];
        S sum_dy = S(0), sum_dy_xhat = S(0);
        for (int p = 0; p < hw; ++p) {
          sum_dy += pdy[p];
          sum_dy_xhat += pdy[p] * pxh[p];
        }
        gain_.grad[static_cast<std::size_t>(c)] += sum_dy_xhat;
        bias_.grad[static_cast<std::size_t>(c)] += sum_dy;
        const S inv_hw = S(1) / static_cast<S>(hw);
        for (int p = 0; p < hw; ++p) {
          pdx[p] = g * inv * (pdy[p] - sum_dy * inv_hw - pxh[p] * sum_dy_xhat * inv_hw);
        }
      }
    }
    return dx;
  }

  void collect(std::vector<ParamGroup<S>*>& out) {
    out.push_back(&gain_);
    out.push_back(&bias_);
  }

 private:
  std::string name_;
  int channels_;
  double eps_;
  ParamGroup<S> gain_;
  ParamGroup<S> bias_;
  Tensor<S> xhat_;
  std::vector<S> inv_std_;
};

// Leaky rectifier with a C1-smooth softplus blend:
//   f(x) = a x + (1 - a)/b softplus(b x),  f'(x) = a + (1 - a) sigmoid(b x).
// Slopes approach a below and 1 above; the smooth transition keeps central
// finite differences of the full objective accurate at step 1e-4, which a
// kinked rectifier cannot guarantee under parameter-space perturbations.
template <typename S>
class LeakyRectifier {
 public:
  explicit LeakyRectifier(double slope = 0.2, double sharpness = 4.0)
      : slope_(static_cast<S>(slope)), beta_(static_cast<S>(sharpness)) {}

  Tensor<S> forward(const Tensor<S>& x) {
    gate_ = Tensor<S>(x.shape());
    Tensor<S> y(x.shape());
    const S a = slope_;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const S z = beta_ * x[i];
      S softplus_over_beta;
      if (z > S(30)) {
        softplus_over_beta = x[i];
        gate_[i] = S(1);
      } else if (z < S(-30)) {
        softplus_over_beta = S(0);
        gate_[i] = S(0);
      } else {
        softplus_over_beta = std::log1p(std::exp(z)) / beta_;
        gate_[i] = S(1) / (S(1) + std::exp(-z));
      }
      y[i] = a * x[i] + (S(1) - a) * softplus_over_beta;
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> dx(dy.shape());
    const S a = slope_;
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * (a + (S(1) - a) * gate_[i]);
    return dx;
  }

 private:
  S slope_;
  S beta_;
  Tensor<S> gate_;
};

template <typename S>
class Sigmoid {
 public:
  Tensor<S> forward(const Tensor<S>& x) {
    y_ = Tensor<S>(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y_[i] = S(1) / (S(1) + std::exp(-x[i]));
    return y_;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * y_[i] * (S(1) - y_[i]);
    return dx;
  }

 private:
  Tensor<S> y_;
};

// Row-wise affine map: y = x W^T + b over (N, in) matrices.
template <typename S>
class Linear {
 public:
  Linear(std::string name, int in_dim, int out_dim, bool use_bias = true)
      : name_(std::move(name)),
        in_dim_(in_dim),
        out_dim_(out_dim),
        use_bias_(use_bias),
        weight_(name_ + ".weight", {out_dim, in_dim}),
        bias_(name_ + ".bias", {use_bias ? out_dim : 0}) {}

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }

  Tensor<S> forward(const Tensor<S>& x) {
    if (x.rank() != 2 || x.dim(1) != in_dim_) {
      throw ShapeError("linear " + name_ + ": expected (N," + std::to_string(in_dim_) + "), got " + x.shape_str());
    }
    x_ = x;
    Tensor<S> y({x.dim(0), out_dim_});
    ConstMapRM<S> xm(x.data(), x.dim(0), in_dim_);
    ConstMapRM<S> wm(weight_.value.data(), out_dim_, in_dim_);
    MapRM<S> ym(y.data(), x.dim(0), out_dim_);
    ym.noalias() = xm * wm.transpose();
    if (use_bias_) {
      for (int r = 0; r < x.dim(0); ++r) {
        for (int c = 0; c < out_dim_; ++c) ym(r, c) += bias_.value[static_cast<std::size_t>(c)];
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> dx(x_.shape());
    ConstMapRM<S> dym(dy.data(), dy.dim(0), out_dim_);
    ConstMapRM<S> xm(x_.data(), x_.dim(0), in_dim_);
    ConstMapRM<S> wm(weight_.value.data(), out_dim_, in_dim_);
    MapRM<S> dwm(weight_.grad.data(), out_dim_, in_dim_);
    MapRM<S> dxm(dx.data(), dx.dim(0), in_dim_);
    dwm.noalias() += dym.transpose() * xm;
    dxm.noalias() = dym * wm;
    if (use_bias_) {
      for (int r = 0; r < dy.dim(0); ++r) {
        for (int c = 0; c < out_dim_; ++c) bias_.grad[static_cast<std::size_t>(c)] += dym(r, c);
      }
    }
    return dx;
  }

  void collect(std::vector<ParamGroup<S>*>& out) {
    out.push_back(&weight_);
    if (use_bias_) out.push_back(&bias_);
  }

 private:
  std::string name_;
  int in_dim_, out_dim_;
  bool use_bias_;
  ParamGroup<S> weight_;
  ParamGroup<S> bias_;
  Tensor<S> x_;
};

// Channel concatenation of two (N, C, H, W) tensors and its adjoint.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: incompatible shapes " + a.shape_str() + " vs " + b.shape_str());
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  Tensor<S> y({n, ca + cb, h, w});
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.data() + static_cast<std::size_t>(i) * ca * hw, static_cast<std::size_t>(ca) * hw,
                y.data() + static_cast<std::size_t>(i) * (ca + cb) * hw);
    std::copy_n(b.data() + static_cast<std::size_t>(i) * cb * hw, static_cast<std::size_t>(cb) * hw,
                y.data() + (static_cast<std::size_t>(i) * (ca + cb) + ca) * hw);
  }
  return y;
}

template <typename S>
void split_channels(const Tensor<S>& dy, int ca, Tensor<S>& da, Tensor<S>& db) {
  const int n = dy.dim(0), c = dy.dim(1), h = dy.dim(2), w = dy.dim(3);
  const int cb = c - ca;
  da = Tensor<S>({n, ca, h, w});
  db = Tensor<S>({n, cb, h, w});
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    std::copy_n(dy.data() + static_cast<std::size_t>(i) * c * hw, static_cast<std::size_t>(ca) * hw,
                da.data() + static_cast<std::size_t>(i) * ca * hw);
    std::copy_n(dy.data() + (static_cast<std::size_t>(i) * c + ca) * hw, static_cast<std::size_t>(cb) * hw,
                db.data() + static_cast<std::size_t>(i) * cb * hw);
  }
}

}  // namespace misfit
