// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "misfit/core/error.hpp"
#include "misfit/data/image.hpp"

namespace misfit {

inline constexpr double kPsnrCap = 120.0;  // dB returned when MSE < 1e-12

// Grayscale plane used by all pairwise metrics.
struct Plane {
  int h = 0;
  int w = 0;
  std::vector<double> v;

  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
};

inline Plane to_plane(const Image& img) {
  const Image lum = to_luminance(img);
  Plane p;
  p.h = lum.h;
  p.w = lum.w;
  p.v.assign(lum.px.begin(), lum.px.end());
  return p;
}

inline void require_same_plane(const Plane& a, const Plane& b, const char* what) {
  if (a.h != b.h || a.w != b.w) {
    throw ShapeError(std::string(what) + ": size mismatch " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                     " vs " + std::to_string(b.h) + "x" + std::to_string(b.w));
  }
}

inline double mse(const Plane& a, const Plane& b) {
  require_same_plane(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double d = a.v[i] - b.v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.v.size());
}

inline double psnr(const Plane& a, const Plane& b, double data_range = 1.0) {
  const double m = mse(a, b);
  if (m < 1e-12) return kPsnrCap;
  return 10.0 * std::log10(data_range * data_range / m);
}

// Universal quality index over stride-1 windows. Sample statistics use the
// n-1 normalization. Degenerate windows follow the 0/0 conventions: both
// denominator factors zero -> 1, exactly one zero -> 0.
inline double uqi(const Plane& a, const Plane& b, int window = 8) {
  require_same_plane(a, b, "uqi");
  if (window < 2 || window > std::min(a.h, a.w)) {
    throw ValidationError("uqi: window must be in [2, min(H, W)]");
  }
  const int n = window * window;
  double acc = 0.0;
  std::size_t count = 0;
  for (int y0 = 0; y0 + window <= a.h; ++y0) {
    for (int x0 = 0; x0 + window <= a.w; ++x0) {
      double sa = 0.0, sb = 0.0;
      for (int y = y0; y < y0 + window; ++y) {
        for (int x = x0; x < x0 + window; ++x) {
          sa += a.at(y, x);
          sb += b.at(y, x);
        }
      }
      const double ma = sa / n;
      const double mb = sb / n;
      double vaa = 0.0, vbb = 0.0, vab = 0.0;
      for (int y = y0; y < y0 + window; ++y) {
        for (int x = x0; x < x0 + window; ++x) {
          const double da = a.at(y, x) - ma;
          const double db = b.at(y, x) - mb;
          vaa += da * da;
          vbb += db * db;
          vab += da * db;
        }
      }
      vaa /= n - 1;
      vbb /= n - 1;
      vab /= n - 1;
      const double var_term = vaa + vbb;
      const double mean_term = ma * ma + mb * mb;
      double q;
      if (var_term == 0.0 && mean_term == 0.0) {
        q = 1.0;
      } else if (var_term == 0.0 || mean_term == 0.0) {
        q = 0.0;
      } else {
        q = (4.0 * vab) * (ma * mb) / (var_term * mean_term);
      }
      acc += q;
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

namespace detail {

inline std::vector<double> gaussian_kernel(int window, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(window));
  const double c = (window - 1) * 0.5;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    k[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable Gaussian filter, valid region only.
inline Plane gaussian_filter_valid(const Plane& p, const std::vector<double>& k) {
  const int window = static_cast<int>(k.size());
  Plane tmp;  // horizontal pass
  tmp.h = p.h;
  tmp.w = p.w - window + 1;
  tmp.v.assign(static_cast<std::size_t>(tmp.h) * tmp.w, 0.0);
  for (int y = 0; y < p.h; ++y) {
    for (int x = 0; x < tmp.w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < window; ++i) acc += k[static_cast<std::size_t>(i)] * p.at(y, x + i);
      tmp.at(y, x) = acc;
    }
  }
  Plane out;  // vertical pass
  out.h = p.h - window + 1;
  out.w = tmp.w;
  out.v.assign(static_cast<std::size_t>(out.h) * out.w, 0.0);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < window; ++i) acc += k[static_cast<std::size_t>(i)] * tmp.at(y + i, x);
      out.at(y, x) = acc;
    }
  }
  return out;
}

inline Plane mean_pool2(const Plane& p) {
  Plane out;
  out.h = p.h / 2;
  out.w = p.w / 2;
  out.v.assign(static_cast<std::size_t>(out.h) * out.w, 0.0);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      out.at(y, x) = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) +
                             p.at(2 * y + 1, 2 * x + 1));
    }
  }
  return out;
}

struct SsimTerms {
  double luminance_cs = 0.0;  // mean over windows of l * cs
  double cs = 0.0;            // mean over windows of cs
};

inline SsimTerms ssim_terms(const Plane& a, const Plane& b, int window, double sigma, double data_range) {
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  const std::vector<double> k = gaussian_kernel(window, sigma);

  Plane a2 = a, b2 = b, ab = a;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    a2.v[i] = a.v[i] * a.v[i];
    b2.v[i] = b.v[i] * b.v[i];
    ab.v[i] = a.v[i] * b.v[i];
  }
  const Plane mu_a = gaussian_filter_valid(a, k);
  const Plane mu_b = gaussian_filter_valid(b, k);
  const Plane m_a2 = gaussian_filter_valid(a2, k);
  const Plane m_b2 = gaussian_filter_valid(b2, k);
  const Plane m_ab = gaussian_filter_valid(ab, k);

  double acc_lcs = 0.0;
  double acc_cs = 0.0;
  for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i];
    const double mb = mu_b.v[i];
    const double va = m_a2.v[i] - ma * ma;
    const double vb = m_b2.v[i] - mb * mb;
    const double vab = m_ab.v[i] - ma * mb;
    const double l = (2.0 * (ma * mb) + c1) / ((ma * ma + mb * mb) + c1);
    const double cs = (2.0 * vab + c2) / ((va + vb) + c2);
    acc_lcs += l * cs;
    acc_cs += cs;
  }
  SsimTerms t;
  t.luminance_cs = acc_lcs / static_cast<double>(mu_a.v.size());
  t.cs = acc_cs / static_cast<double>(mu_a.v.size());
  return t;
}

}  // namespace detail

inline constexpr std::array<double, 5> kMsssimWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

// Multi-scale SSIM: contrast-structure terms at every scale, the combined
// luminance term at the coarsest, 2x2 mean-pool between scales. When the
// image is too small for the requested scales they are reduced and the
// exponents renormalized; negative per-scale means are clamped at zero.
inline double msssim(const Plane& a, const Plane& b, int scales = 5, int window = 11, double data_range = 1.0,
                     double sigma = 1.5, bool* reduced = nullptr) {
  require_same_plane(a, b, "msssim");
  if (scales < 1 || scales > 5) throw ValidationError("msssim: scales must be in [1, 5]");

  int usable = scales;
  while (usable > 1 && std::min(a.h, a.w) < window * (1 << (usable - 1))) --usable;
  if (std::min(a.h, a.w) < window) throw ValidationError("msssim: image smaller than the filter window");
  if (reduced != nullptr) *reduced = usable != scales;

  double weight_sum = 0.0;
  for (int s = 0; s < usable; ++s) weight_sum += kMsssimWeights[static_cast<std::size_t>(s)];

  Plane ca = a;
  Plane cb = b;
  double result = 1.0;
  for (int s = 0; s < usable; ++s) {
    const detail::SsimTerms t = detail::ssim_terms(ca, cb, window, sigma, data_range);
    const double expo = kMsssimWeights[static_cast<std::size_t>(s)] / weight_sum;
    const double term = (s == usable - 1) ? t.luminance_cs : t.cs;
    result *= std::pow(std::max(0.0, term), expo);
    if (s + 1 < usable) {
      ca = detail::mean_pool2(ca);
      cb = detail::mean_pool2(cb);
    }
  }
  return result;
}

// Normalized mutual information 2 I(A;B) / (H(A) + H(B)), natural log, with
// I computed as H(A) + H(B) - H(A,B). Both images constant -> 1.
inline double nmi(const Plane& a, const Plane& b, int bins = 64) {
  require_same_plane(a, b, "nmi");
  if (bins < 2) throw ValidationError("nmi: bins must be >= 2");
  const std::size_t n = a.v.size();
  std::vector<double> joint(static_cast<std::size_t>(bins) * bins, 0.0);
  std::vector<double> pa(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> pb(static_cast<std::size_t>(bins), 0.0);
  auto bin_of = [bins](double v) {
    int idx = static_cast<int>(v * bins);
    return static_cast<std::size_t>(std::min(bins - 1, std::max(0, idx)));
  };
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ia = bin_of(a.v[i]);
    const std::size_t ib = bin_of(b.v[i]);
    joint[ia * static_cast<std::size_t>(bins) + ib] += 1.0;
    pa[ia] += 1.0;
    pb[ib] += 1.0;
  }
  auto entropy = [n](const std::vector<double>& counts) {
    double h = 0.0;
    for (double c : counts) {
      if (c > 0.0) {
        const double p = c / static_cast<double>(n);
        h -= p * std::log(p);
      }
    }
    return h;
  };
  const double ha = entropy(pa);
  const double hb = entropy(pb);
  if (ha + hb == 0.0) return 1.0;
  const double hab = entropy(joint);
  const double mi = std::max(0.0, ha + hb - hab);
  return 2.0 * mi / (ha + hb);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline const std::array<std::string, 5>& metric_names() {
  static const std::array<std::string, 5> names = {"mse", "uqi", "msssim", "nmi", "psnr"};
  return names;
}

inline bool metric_higher_is_better(const std::string& name) { return name != "mse"; }

// Five metrics, each computed fused-vs-thermal and fused-vs-visual.
struct MetricReport {
  std::map<std::string, double> vs_thermal;
  std::map<std::string, double> vs_visual;
  std::string run_id;
  std::int64_t checkpoint_step = 0;
  std::string dataset_id;
  int uqi_window = 8;
  int msssim_scales = 5;
  int msssim_window = 11;
  int nmi_bins = 64;
};

inline MetricReport evaluate_fusion(const Image& fused, const ImagePair& pair, int uqi_window = 8,
                                    int msssim_scales = 5, int msssim_window = 11, int nmi_bins = 64) {
  const Plane f = to_plane(fused);
  const Plane t = to_plane(pair.thermal);
  const Plane v = to_plane(pair.visual);
  require_same_plane(f, t, "evaluate_fusion");
  require_same_plane(f, v, "evaluate_fusion");
  MetricReport r;
  r.uqi_window = uqi_window;
  r.msssim_scales = msssim_scales;
  r.msssim_window = msssim_window;
  r.nmi_bins = nmi_bins;
  auto fill = [&](const Plane& ref, std::map<std::string, double>& out) {
    out["mse"] = mse(f, ref);
    out["uqi"] = uqi(f, ref, uqi_window);
    out["msssim"] = msssim(f, ref, msssim_scales, msssim_window);
    out["nmi"] = nmi(f, ref, nmi_bins);
    out["psnr"] = psnr(f, ref);
  };
  fill(t, r.vs_thermal);
  fill(v, r.vs_visual);
  return r;
}

inline MetricReport mean_report(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw ValidationError("mean_report: no reports");
  MetricReport out = reports.front();
  for (const std::string& m : metric_names()) {
    double st = 0.0, sv = 0.0;
    for (const MetricReport& r : reports) {
      st += r.vs_thermal.at(m);
      sv += r.vs_visual.at(m);
    }
    out.vs_thermal[m] = st / static_cast<double>(reports.size());
    out.vs_visual[m] = sv / static_cast<double>(reports.size());
  }
  return out;
}

// Rows = runs, columns = (metric, modality) pairs in a fixed order.
struct ComparisonTable {
  std::vector<std::string> row_labels;
  std::vector<std::string> column_labels;   // "<metric>_vs_<thermal|visual>"
  std::vector<std::string> column_better;   // "higher" / "lower"
  std::vector<std::vector<double>> values;  // rows x columns
  bool normalized = false;
};

// One row per report; normalization divides each column by its maximum
// absolute value so the best-magnitude entry maps to 1.
inline ComparisonTable build_comparison(const std::vector<MetricReport>& reports, bool normalize) {
  if (reports.empty()) throw ValidationError("build_comparison: need at least one report");
  ComparisonTable t;
  t.normalized = normalize;
  for (const std::string& m : metric_names()) {
    for (const char* mod : {"thermal", "visual"}) {
      t.column_labels.push_back(m + "_vs_" + mod);
      t.column_better.push_back(metric_higher_is_better(m) ? "higher" : "lower");
    }
  }
  for (const MetricReport& r : reports) {
    t.row_labels.push_back(r.run_id.empty() ? ("run" + std::to_string(t.row_labels.size())) : r.run_id);
    std::vector<double> row;
    for (const std::string& m : metric_names()) {
      row.push_back(r.vs_thermal.at(m));
      row.push_back(r.vs_visual.at(m));
    }
    t.values.push_back(std::move(row));
  }
  if (normalize) {
    for (std::size_t col = 0; col < t.column_labels.size(); ++col) {
      double max_abs = 0.0;
      for (const auto& row : t.values) max_abs = std::max(max_abs, std::abs(row[col]));
      if (max_abs > 0.0) {
        for (auto& row : t.values) row[col] /= max_abs;
      }
    }
  }
  return t;
}

}  // namespace misfit
