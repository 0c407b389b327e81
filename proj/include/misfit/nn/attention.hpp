// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "misfit/core/error.hpp"
#include "misfit/core/tensor.hpp"
#include "misfit/data/image.hpp"
#include "misfit/nn/layers.hpp"

namespace misfit {

namespace detail {

// In-place row softmax with max-shift; throws on non-finite logits so no
// NaN map can leave this module silently.
template <typename S>
void softmax_rows(Tensor<S>& logits) {
  const int rows = logits.dim(0), cols = logits.dim(1);
  for (int r = 0; r < rows; ++r) {
    S mx = logits(r, 0);
    for (int c = 1; c < cols; ++c) mx = std::max(mx, logits(r, c));
    if (!std::isfinite(static_cast<double>(mx))) {
      throw NumericError("attention: non-finite logits in row " + std::to_string(r));
    }
    S sum = S(0);
    for (int c = 0; c < cols; ++c) {
      logits(r, c) = std::exp(logits(r, c) - mx);
      sum += logits(r, c);
    }
    for (int c = 0; c < cols; ++c) logits(r, c) /= sum;
  }
}

// Fixed sinusoidal encoding over flattened positions; added to the Q/K
// projection inputs when enabled.
template <typename S>
Tensor<S> sinusoidal_encoding(int positions, int dim) {
  Tensor<S> pe({positions, dim});
  for (int p = 0; p < positions; ++p) {
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - (i % 2)) / dim);
      const double angle = p * rate;
      pe(p, i) = static_cast<S>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

}  // namespace detail

// Q/K/V/output projections owned by one modality.
template <typename S>
struct ModalityProjections {
  Linear<S> wq, wk, wv, wo;

  ModalityProjections(const std::string& name, int feat_dim, int d_model)
      : wq(name + ".wq", feat_dim, d_model),
        wk(name + ".wk", feat_dim, d_model),
        wv(name + ".wv", feat_dim, d_model),
        wo(name + ".wo", d_model, feat_dim) {}

  void collect(std::vector<ParamGroup<S>*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }
};

// Flattens a spatial feature grid (h, w, d) row-major into (h*w, d) and
// applies the modality's projections.
template <typename S>
struct QkvResult {
  Tensor<S> q, k, v;  // each (h*w, d_model)
};

template <typename S>
QkvResult<S> project_qkv(const Tensor<S>& features_hwd, ModalityProjections<S>& proj) {
  if (features_hwd.rank() != 3) {
    throw ShapeError("project_qkv: expected (h,w,d) features, got " + features_hwd.shape_str());
  }
  const int h = features_hwd.dim(0), w = features_hwd.dim(1), d = features_hwd.dim(2);
  if (d != proj.wq.in_dim()) {
    throw ShapeError("project_qkv: feature depth " + std::to_string(d) + " does not match projection input " +
                     std::to_string(proj.wq.in_dim()));
  }
  Tensor<S> flat({h * w, d});
  std::copy_n(features_hwd.data(), flat.size(), flat.data());
  QkvResult<S> out;
  out.q = proj.wq.forward(flat);
  out.k = proj.wk.forward(flat);
  out.v = proj.wv.forward(flat);
  return out;
}

template <typename S>
struct ScaledAttentionResult {
  Tensor<S> attended;  // (N, d_model), heads concatenated
  Tensor<S> map;       // (N, M), mean over heads, rows sum to 1
};

// softmax(Q K^T / sqrt(d_k)) V per head; the exported map is the head mean.
template <typename S>
ScaledAttentionResult<S> scaled_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                                          int n_heads = 1) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0) ||
      k.dim(1) != v.dim(1)) {
    throw ShapeError("scaled_attention: inconsistent Q/K/V shapes " + q.shape_str() + " " + k.shape_str() + " " +
                     v.shape_str());
  }
  const int n = q.dim(0), m = k.dim(0), dm = q.dim(1);
  if (n_heads < 1 || dm % n_heads != 0) {
    throw ConfigError("scaled_attention: d_model " + std::to_string(dm) + " not divisible by heads " +
                      std::to_string(n_heads));
  }
  const int dk = dm / n_heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dk)));
  ScaledAttentionResult<S> out;
  out.attended = Tensor<S>({n, dm});
  out.map = Tensor<S>({n, m});
  for (int head = 0; head < n_heads; ++head) {
    const int off = head * dk;
    Tensor<S> logits({n, m});
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < m; ++c) {
        S acc = S(0);
        for (int d = 0; d < dk; ++d) acc += q(r, off + d) * k(c, off + d);
        logits(r, c) = acc * scale;
      }
    }
    detail::softmax_rows(logits);
    for (int r = 0; r < n; ++r) {
      for (int d = 0; d < dk; ++d) {
        S acc = S(0);
        for (int c = 0; c < m; ++c) acc += logits(r, c) * v(c, off + d);
        out.attended(r, off + d) = acc;
      }
      for (int c = 0; c < m; ++c) out.map(r, c) += logits(r, c) / static_cast<S>(n_heads);
    }
  }
  return out;
}

// Renders one map row (or the mean over rows when focus_query < 0) on the
// key grid, min-max normalized; a constant map renders as all 0.5.
inline Image attention_heatmap(const Tensor<float>& map, int key_h, int key_w, int focus_query = -1) {
  if (map.rank() != 2 || map.dim(1) != key_h * key_w) {
    throw ShapeError("attention_heatmap: map columns must equal key grid size");
  }
  if (focus_query >= map.dim(0)) throw ValidationError("attention_heatmap: focus query out of range");
  std::vector<double> row(static_cast<std::size_t>(map.dim(1)), 0.0);
  if (focus_query >= 0) {
    for (int c = 0; c < map.dim(1); ++c) row[static_cast<std::size_t>(c)] = map(focus_query, c);
  } else {
    for (int r = 0; r < map.dim(0); ++r) {
      for (int c = 0; c < map.dim(1); ++c) row[static_cast<std::size_t>(c)] += map(r, c);
    }
    for (double& v : row) v /= map.dim(0);
  }
  double lo = row[0], hi = row[0];
  for (double v : row) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Image img(key_h, key_w, 1);
  if (hi - lo < 1e-12) {
    std::fill(img.px.begin(), img.px.end(), 0.5f);
    return img;
  }
  for (int y = 0; y < key_h; ++y) {
    for (int x = 0; x < key_w; ++x) {
      img.at(y, x, 0) = static_cast<float>((row[static_cast<std::size_t>(y) * key_w + x] - lo) / (hi - lo));
    }
  }
  return img;
}

// Bidirectional cross-attention with query exchange over batched feature
// grids (N, d, h, w). Visual queries attend over thermal keys/values to
// produce the thermal-content output and vice versa; both outputs are
// reshaped back to spatial grids.
template <typename S>
class CrossAttention {
 public:
  CrossAttention(std::string name, int feat_dim, int d_model, int n_heads, bool positional_encoding = false)
      : name_(std::move(name)),
        feat_dim_(feat_dim),
        d_model_(d_model),
        n_heads_(n_heads),
        positional_(positional_encoding),
        proj_rgb_(name_ + ".rgb", feat_dim, d_model),
        proj_ir_(name_ + ".ir", feat_dim, d_model) {
    if (n_heads < 1 || d_model % n_heads != 0) {
      throw ConfigError("cross_attention " + name_ + ": d_model " + std::to_string(d_model) +
                        " not divisible by n_heads " + std::to_string(n_heads));
    }
  }

  struct Output {
    Tensor<S> attended_rgb;      // visual content on the thermal query grid
    Tensor<S> attended_ir;       // thermal content on the visual query grid
    Tensor<S> map_rgb_queries;   // (N, n_rgb, n_ir): visual queries over thermal keys
    Tensor<S> map_ir_queries;    // (N, n_ir, n_rgb)
  };

  Output forward(const Tensor<S>& feat_rgb, const Tensor<S>& feat_ir) {
    if (feat_rgb.rank() != 4 || feat_ir.rank() != 4 || feat_rgb.dim(0) != feat_ir.dim(0) ||
        feat_rgb.dim(1) != feat_dim_ || feat_ir.dim(1) != feat_dim_) {
      throw ShapeError("cross_attention " + name_ + ": bad feature shapes " + feat_rgb.shape_str() + " / " +
                       feat_ir.shape_str());
    }
    batch_ = feat_rgb.dim(0);
    rgb_h_ = feat_rgb.dim(2);
    rgb_w_ = feat_rgb.dim(3);
    ir_h_ = feat_ir.dim(2);
    ir_w_ = feat_ir.dim(3);
    const int nq_rgb = rgb_h_ * rgb_w_;
    const int nq_ir = ir_h_ * ir_w_;

    flat_rgb_ = flatten_positions(feat_rgb);  // (N*nq_rgb, d)
    flat_ir_ = flatten_positions(feat_ir);

    Tensor<S> qk_in_rgb = flat_rgb_;
    Tensor<S> qk_in_ir = flat_ir_;
    if (positional_) {
      add_positional(qk_in_rgb, nq_rgb);
      add_positional(qk_in_ir, nq_ir);
    }

    // Exchanged queries: visual queries over thermal keys/values, and the
    // converse. Each projection runs once per forward.
    q_rgb_ = proj_rgb_.wq.forward(qk_in_rgb);
    k_ir_ = proj_ir_.wk.forward(qk_in_ir);
    v_ir_ = proj_ir_.wv.forward(flat_ir_);
    q_ir_ = proj_ir_.wq.forward(qk_in_ir);
    k_rgb_ = proj_rgb_.wk.forward(qk_in_rgb);
    v_rgb_ = proj_rgb_.wv.forward(flat_rgb_);

    Output out;
    attend(q_rgb_, k_ir_, v_ir_, nq_rgb, nq_ir, a_rgbq_, o_rgbq_, out.map_rgb_queries);
    attend(q_ir_, k_rgb_, v_rgb_, nq_ir, nq_rgb, a_irq_, o_irq_, out.map_ir_queries);

    // Thermal-content output is projected by the thermal modality's head.
    att_ir_flat_ = proj_ir_.wo.forward(o_rgbq_);
    att_rgb_flat_ = proj_rgb_.wo.forward(o_irq_);

    out.attended_ir = unflatten_positions(att_ir_flat_, rgb_h_, rgb_w_);
    out.attended_rgb = unflatten_positions(att_rgb_flat_, ir_h_, ir_w_);
    return out;
  }

  // Accumulates parameter gradients and adds feature gradients into
  // dfeat_rgb / dfeat_ir (both receive contributions from both directions).
  void backward(const Tensor<S>& d_att_rgb, const Tensor<S>& d_att_ir, Tensor<S>& dfeat_rgb,
                Tensor<S>& dfeat_ir) {
    const int nq_rgb = rgb_h_ * rgb_w_;
    const int nq_ir = ir_h_ * ir_w_;

    Tensor<S> d_o_rgbq = proj_ir_.wo.backward(flatten_positions(d_att_ir));
    Tensor<S> d_o_irq = proj_rgb_.wo.backward(flatten_positions(d_att_rgb));

    Tensor<S> dq_rgb({batch_ * nq_rgb, d_model_});
    Tensor<S> dk_ir({batch_ * nq_ir, d_model_});
    Tensor<S> dv_ir({batch_ * nq_ir, d_model_});
    attend_backward(d_o_rgbq, a_rgbq_, q_rgb_, k_ir_, v_ir_, nq_rgb, nq_ir, dq_rgb, dk_ir, dv_ir);

    Tensor<S> dq_ir({batch_ * nq_ir, d_model_});
    Tensor<S> dk_rgb({batch_ * nq_rgb, d_model_});
    Tensor<S> dv_rgb({batch_ * nq_rgb, d_model_});
    attend_backward(d_o_irq, a_irq_, q_ir_, k_rgb_, v_rgb_, nq_ir, nq_rgb, dq_ir, dk_rgb, dv_rgb);

    Tensor<S> dflat_rgb = proj_rgb_.wq.backward(dq_rgb);
    add_into(dflat_rgb, proj_rgb_.wk.backward(dk_rgb));
    add_into(dflat_rgb, proj_rgb_.wv.backward(dv_rgb));
    Tensor<S> dflat_ir = proj_ir_.wq.backward(dq_ir);
    add_into(dflat_ir, proj_ir_.wk.backward(dk_ir));
    add_into(dflat_ir, proj_ir_.wv.backward(dv_ir));

    add_unflattened(dflat_rgb, rgb_h_, rgb_w_, dfeat_rgb);
    add_unflattened(dflat_ir, ir_h_, ir_w_, dfeat_ir);
  }

  void collect(std::vector<ParamGroup<S>*>& out) {
    proj_rgb_.collect(out);
    proj_ir_.collect(out);
  }

 private:
  // (N, d, h, w) -> (N*h*w, d), positions row-major within each sample.
  Tensor<S> flatten_positions(const Tensor<S>& feat) const {
    const int n = feat.dim(0), d = feat.dim(1), h = feat.dim(2), w = feat.dim(3);
    Tensor<S> flat({n * h * w, d});
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < d; ++c) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            flat(i * h * w + y * w + x, c) = feat(i, c, y, x);
          }
        }
      }
    }
    return flat;
  }

  Tensor<S> unflatten_positions(const Tensor<S>& flat, int h, int w) const {
    Tensor<S> feat({batch_, feat_dim_, h, w});
    for (int i = 0; i < batch_; ++i) {
      for (int c = 0; c < feat_dim_; ++c) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            feat(i, c, y, x) = flat(i * h * w + y * w + x, c);
          }
        }
      }
    }
    return feat;
  }

  void add_unflattened(const Tensor<S>& flat, int h, int w, Tensor<S>& dfeat) const {
    for (int i = 0; i < batch_; ++i) {
      for (int c = 0; c < feat_dim_; ++c) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            dfeat(i, c, y, x) += flat(i * h * w + y * w + x, c);
          }
        }
      }
    }
  }

  void add_positional(Tensor<S>& flat, int positions) const {
    const Tensor<S> pe = detail::sinusoidal_encoding<S>(positions, feat_dim_);
    for (int i = 0; i < batch_; ++i) {
      for (int p = 0; p < positions; ++p) {
        for (int c = 0; c < feat_dim_; ++c) flat(i * positions + p, c) += pe(p, c);
      }
    }
  }

  static void add_into(Tensor<S>& into, const Tensor<S>& from) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
  }

  // Per-sample multi-head attention over stacked row blocks. Caches the
  // per-head softmax maps for the backward pass.
  void attend(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v, int nq, int nk, Tensor<S>& a_cache,
              Tensor<S>& o_out, Tensor<S>& map_out) {
    const int dk = d_model_ / n_heads_;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dk)));
    a_cache = Tensor<S>({batch_, n_heads_, nq, nk});
    o_out = Tensor<S>({batch_ * nq, d_model_});
    map_out = Tensor<S>({batch_, nq, nk});
    for (int i = 0; i < batch_; ++i) {
      ConstMapRM<S> qm(q.data() + static_cast<std::size_t>(i) * nq * d_model_, nq, d_model_);
      ConstMapRM<S> km(k.data() + static_cast<std::size_t>(i) * nk * d_model_, nk, d_model_);
      ConstMapRM<S> vm(v.data() + static_cast<std::size_t>(i) * nk * d_model_, nk, d_model_);
      MapRM<S> om(o_out.data() + static_cast<std::size_t>(i) * nq * d_model_, nq, d_model_);
      for (int head = 0; head < n_heads_; ++head) {
        const int off = head * dk;
        Tensor<S> logits({nq, nk});
        MapRM<S> lm(logits.data(), nq, nk);
        lm.noalias() = qm.middleCols(off, dk) * km.middleCols(off, dk).transpose() * scale;
        detail::softmax_rows(logits);
        om.middleCols(off, dk).noalias() = lm * vm.middleCols(off, dk);
        std::copy_n(logits.data(), logits.size(),
                    a_cache.data() + ((static_cast<std::size_t>(i) * n_heads_) + head) * nq * nk);
        S* mp = map_out.data() + static_cast<std::size_t>(i) * nq * nk;
        const S inv_heads = S(1) / static_cast<S>(n_heads_);
        for (std::size_t e = 0; e < logits.size(); ++e) mp[e] += logits[e] * inv_heads;
      }
    }
  }

  void attend_backward(const Tensor<S>& d_o, const Tensor<S>& a_cache, const Tensor<S>& q, const Tensor<S>& k,
                       const Tensor<S>& v, int nq, int nk, Tensor<S>& dq, Tensor<S>& dk_out, Tensor<S>& dv) {
    const int dkh = d_model_ / n_heads_;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dkh)));
    dq.zero();
    dk_out.zero();
    dv.zero();
    for (int i = 0; i < batch_; ++i) {
      ConstMapRM<S> qm(q.data() + static_cast<std::size_t>(i) * nq * d_model_, nq, d_model_);
      ConstMapRM<S> km(k.data() + static_cast<std::size_t>(i) * nk * d_model_, nk, d_model_);
      ConstMapRM<S> vm(v.data() + static_cast<std::size_t>(i) * nk * d_model_, nk, d_model_);
      ConstMapRM<S> dom(d_o.data() + static_cast<std::size_t>(i) * nq * d_model_, nq, d_model_);
      MapRM<S> dqm(dq.data() + static_cast<std::size_t>(i) * nq * d_model_, nq, d_model_);
      MapRM<S> dkm(dk_out.data() + static_cast<std::size_t>(i) * nk * d_model_, nk, d_model_);
      MapRM<S> dvm(dv.data() + static_cast<std::size_t>(i) * nk * d_model_, nk, d_model_);
      for (int head = 0; head < n_heads_; ++head) {
        const int off = head * dkh;
        ConstMapRM<S> am(a_cache.data() + ((static_cast<std::size_t>(i) * n_heads_) + head) * nq * nk, nq, nk);
        MatrixRM<S> da = dom.middleCols(off, dkh) * vm.middleCols(off, dkh).transpose();
        dvm.middleCols(off, dkh).noalias() += am.transpose() * dom.middleCols(off, dkh);
        // Softmax backward: dZ = A o (dA - rowsum(dA o A)).
        MatrixRM<S> dz = am.cwiseProduct(da);
        Eigen::Matrix<S, Eigen::Dynamic, 1> row_dot = dz.rowwise().sum();
        dz = am.cwiseProduct(da.colwise() - row_dot);
        dqm.middleCols(off, dkh).noalias() += dz * km.middleCols(off, dkh) * scale;
        dkm.middleCols(off, dkh).noalias() += dz.transpose() * qm.middleCols(off, dkh) * scale;
      }
    }
  }

  std::string name_;
  int feat_dim_, d_model_, n_heads_;
  bool positional_;
  ModalityProjections<S> proj_rgb_;
  ModalityProjections<S> proj_ir_;

  int batch_ = 0, rgb_h_ = 0, rgb_w_ = 0, ir_h_ = 0, ir_w_ = 0;
  Tensor<S> flat_rgb_, flat_ir_;
  Tensor<S> q_rgb_, k_ir_, v_ir_, q_ir_, k_rgb_, v_rgb_;
  Tensor<S> a_rgbq_, a_irq_;
  Tensor<S> o_rgbq_, o_irq_;
  Tensor<S> att_ir_flat_, att_rgb_flat_;
};

}  // namespace misfit
