#pragma once

// Full-reference image fidelity metrics. Inputs are [0,1] images; every metric
// quantizes them to 8-bit and works on the [0,255] scale.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hairbench/detail/gaussian.hpp"
#include "hairbench/error.hpp"
#include "hairbench/image.hpp"
#include "hairbench/parallel.hpp"

namespace hairbench {

enum class Metric { MSE, RMSE, PSNR, SSIM, MSSSIM, UQI, VIF, PSNR_HVS, PSNR_HVS_M };

inline constexpr std::size_t kMetricCount = 9;
inline constexpr std::array<Metric, kMetricCount> kAllMetrics = {
    Metric::MSE,  Metric::RMSE, Metric::PSNR,     Metric::SSIM,      Metric::MSSSIM,
    Metric::UQI,  Metric::VIF,  Metric::PSNR_HVS, Metric::PSNR_HVS_M};
inline constexpr std::array<const char*, kMetricCount> kMetricNames = {
    "MSE", "RMSE", "PSNR", "SSIM", "MSSSIM", "UQI", "VIF", "PSNR_HVS", "PSNR_HVS_M"};

inline const char* metric_name(Metric m) { return kMetricNames[static_cast<std::size_t>(m)]; }

inline bool lower_is_better(Metric m) { return m == Metric::MSE || m == Metric::RMSE; }

inline constexpr double kPeak = 255.0;
inline constexpr double kPsnrCap = 100.0;

/// Single-channel float image, row-major.
struct Plane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(std::size_t w, std::size_t h) : width(w), height(h), v(w * h, 0.0) {}
  double& operator()(std::size_t y, std::size_t x) { return v[y * width + x]; }
  double operator()(std::size_t y, std::size_t x) const { return v[y * width + x]; }
};

/// Channel c of img scaled to [0,255] after 8-bit quantization.
inline Plane plane8(const Image& img, std::size_t c) {
  Plane p(img.width, img.height);
  const std::size_t n = img.plane();
  for (std::size_t i = 0; i < n; ++i) p.v[i] = std::round(std::clamp(img.pixels[c * n + i], 0.0, 1.0) * kPeak);
  return p;
}

/// Rec.601 luma of the quantized image on the [0,255] scale.
inline Plane luma8(const Image& img) {
  if (img.channels == 1) return plane8(img, 0);
  const Plane r = plane8(img, 0), g = plane8(img, 1), b = plane8(img, 2);
  Plane y(img.width, img.height);
  for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] = 0.299 * r.v[i] + 0.587 * g.v[i] + 0.114 * b.v[i];
  return y;
}

namespace metrics_detail {

inline void check_pair(const Image& ref, const Image& test) {
  if (!ref.same_size(test)) {
    throw ContractViolation("metric: image shapes differ (" + std::to_string(ref.width) + "x" +
                            std::to_string(ref.height) + "x" + std::to_string(ref.channels) + " vs " +
                            std::to_string(test.width) + "x" + std::to_string(test.height) + "x" +
                            std::to_string(test.channels) + ")");
  }
}

/// 2-D correlation with the separable window w (outer product), valid extent.
inline Plane filter_valid(const Plane& p, const std::vector<double>& w) {
  const std::size_t k = w.size();
  if (p.width < k || p.height < k) return Plane(0, 0);
  const std::size_t ow = p.width - k + 1, oh = p.height - k + 1;
  Plane rows(ow, p.height);
  for (std::size_t y = 0; y < p.height; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += w[i] * p(y, x + i);
      rows(y, x) = s;
    }
  }
  Plane out(ow, oh);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += w[i] * rows(y + i, x);
      out(y, x) = s;
    }
  }
  return out;
}

inline Plane product(const Plane& a, const Plane& b) {
  Plane out(a.width, a.height);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

struct SsimMeans {
  double ssim;
  double cs;  // contrast-structure term only
};

inline SsimMeans ssim_plane(const Plane& x, const Plane& y) {
  const auto w = detail::gaussian_window(detail::kSsimWindow, detail::kSsimSigma);
  const double c1 = std::pow(detail::kSsimK1 * kPeak, 2), c2 = std::pow(detail::kSsimK2 * kPeak, 2);
  const Plane mx = filter_valid(x, w), my = filter_valid(y, w);
  const Plane sxx = filter_valid(product(x, x), w), syy = filter_valid(product(y, y), w),
              sxy = filter_valid(product(x, y), w);
  double ssim = 0.0, cs = 0.0;
  for (std::size_t i = 0; i < mx.v.size(); ++i) {
    const double ux = mx.v[i], uy = my.v[i];
    const double vx = sxx.v[i] - ux * ux, vy = syy.v[i] - uy * uy, cov = sxy.v[i] - ux * uy;
    const double contrast = (2 * cov + c2) / (vx + vy + c2);
    cs += contrast;
    ssim += (2 * ux * uy + c1) / (ux * ux + uy * uy + c1) * contrast;
  }
  const double n = static_cast<double>(mx.v.size());
  return {ssim / n, cs / n};
}

inline Plane mean_pool2(const Plane& p) {
  Plane out(p.width / 2, p.height / 2);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      out(y, x) = 0.25 * (p(2 * y, 2 * x) + p(2 * y, 2 * x + 1) + p(2 * y + 1, 2 * x) + p(2 * y + 1, 2 * x + 1));
    }
  }
  return out;
}

inline double signed_pow(double base, double e) {
  return base < 0 ? -std::pow(-base, e) : std::pow(base, e);
}

inline void require_window(const Image& img, std::size_t k, const char* what) {
  if (img.width < k || img.height < k) {
    throw ConfigError(std::string(what) + ": image " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + " is smaller than the " + std::to_string(k) + "x" +
                      std::to_string(k) + " window");
  }
}

}  // namespace metrics_detail

inline double mse(const Image& ref, const Image& test) {
  metrics_detail::check_pair(ref, test);
  double s = 0.0;
  for (std::size_t i = 0; i < ref.pixels.size(); ++i) {
    const double d = std::round(std::clamp(ref.pixels[i], 0.0, 1.0) * kPeak) -
                     std::round(std::clamp(test.pixels[i], 0.0, 1.0) * kPeak);
    s += d * d;
  }
  return ref.pixels.empty() ? 0.0 : s / static_cast<double>(ref.pixels.size());
}

inline double rmse(const Image& ref, const Image& test) { return std::sqrt(mse(ref, test)); }

/// 10 log10(peak^2 / mse), capped at 100 dB.
inline double psnr_from_mse(double m, double peak = kPeak) {
  if (m < peak * peak * 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

inline double psnr(const Image& ref, const Image& test) { return psnr_from_mse(mse(ref, test)); }

/// Gaussian-window SSIM averaged over windows and channels.
inline double ssim(const Image& ref, const Image& test) {
  metrics_detail::check_pair(ref, test);
  metrics_detail::require_window(ref, detail::kSsimWindow, "ssim");
  double total = 0.0;
  for (std::size_t c = 0; c < ref.channels; ++c) {
    total += metrics_detail::ssim_plane(plane8(ref, c), plane8(test, c)).ssim;
  }
  return total / static_cast<double>(ref.channels);
}

inline constexpr std::array<double, 5> kMsssimWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Number of dyadic scales (at most 5) whose smallest side still fits the SSIM window.
inline std::size_t msssim_scales(std::size_t width, std::size_t height) {
  std::size_t scales = 0, s = std::min(width, height);
  while (scales < kMsssimWeights.size() && s >= detail::kSsimWindow) {
    ++scales;
    s /= 2;
  }
  return scales;
}

/// Multi-scale SSIM. With fewer than five scales the leading exponents are
/// renormalized to sum to one, so a single scale reduces to SSIM. Negative
/// per-scale terms keep their sign under the fractional power.
inline double msssim(const Image& ref, const Image& test, std::size_t max_scales = kMsssimWeights.size()) {
  metrics_detail::check_pair(ref, test);
  metrics_detail::require_window(ref, detail::kSsimWindow, "msssim");
  const std::size_t scales =
      std::max<std::size_t>(1, std::min(max_scales, msssim_scales(ref.width, ref.height)));
  double wsum = 0.0;
  for (std::size_t s = 0; s < scales; ++s) wsum += kMsssimWeights[s];
  double total = 0.0;
  for (std::size_t c = 0; c < ref.channels; ++c) {
    Plane x = plane8(ref, c), y = plane8(test, c);
    double value = 1.0;
    for (std::size_t s = 0; s < scales; ++s) {
      const auto m = metrics_detail::ssim_plane(x, y);
      const double e = kMsssimWeights[s] / wsum;
      value *= metrics_detail::signed_pow(s + 1 == scales ? m.ssim : m.cs, e);
      if (s + 1 < scales) {
        x = metrics_detail::mean_pool2(x);
        y = metrics_detail::mean_pool2(y);
      }
    }
    total += value;
  }
  return total / static_cast<double>(ref.channels);
}

/// Universal quality index over sliding 8x8 windows, averaged over channels.
/// Window sums are exact in the 8-bit domain, so zero-variance and zero-mean
/// windows are detected exactly and follow the reference code's conventions.
inline double uqi(const Image& ref, const Image& test, std::size_t block = 8) {
  metrics_detail::check_pair(ref, test);
  metrics_detail::require_window(ref, block, "uqi");
  const std::vector<double> box(block, 1.0);
  const double n = static_cast<double>(block * block);
  double total = 0.0;
  for (std::size_t c = 0; c < ref.channels; ++c) {
    const Plane x = plane8(ref, c), y = plane8(test, c);
    using metrics_detail::filter_valid, metrics_detail::product;
    const Plane sx = filter_valid(x, box), sy = filter_valid(y, box);
    const Plane sxx = filter_valid(product(x, x), box), syy = filter_valid(product(y, y), box),
                sxy = filter_valid(product(x, y), box);
    double acc = 0.0;
    for (std::size_t i = 0; i < sx.v.size(); ++i) {
      const double var_sum = n * (sxx.v[i] + syy.v[i]) - sx.v[i] * sx.v[i] - sy.v[i] * sy.v[i];
      const double mean_sq = sx.v[i] * sx.v[i] + sy.v[i] * sy.v[i];
      const double cov = n * sxy.v[i] - sx.v[i] * sy.v[i];
      double q = 1.0;
      if (var_sum * mean_sq != 0.0) {
        q = 4.0 * cov * sx.v[i] * sy.v[i] / (var_sum * mean_sq);
      } else if (var_sum == 0.0 && mean_sq != 0.0) {
        q = 2.0 * sx.v[i] * sy.v[i] / mean_sq;
      }
      acc += q;
    }
    total += acc / static_cast<double>(sx.v.size());
  }
  return total / static_cast<double>(ref.channels);
}

struct VifResult {
  double value = 1.0;
  bool constant_reference = false;
  std::size_t scales_used = 0;
};

/// Pixel-domain VIF on luma: four scales with Gaussian windows of size
/// 17, 9, 5, 3 (sigma = size / 5), noise variance 2. Scales whose filtered
/// extent vanishes are skipped.
inline VifResult vif_detail(const Image& ref, const Image& test) {
  metrics_detail::check_pair(ref, test);
  using metrics_detail::filter_valid, metrics_detail::product;
  constexpr double sigma_nsq = 2.0, eps = 1e-10;
  Plane r = luma8(ref), d = luma8(test);
  double num = 0.0, den = 0.0;
  VifResult out;
  for (int scale = 1; scale <= 4; ++scale) {
    const std::size_t n = (std::size_t{1} << (4 - scale + 1)) + 1;
    const auto w = detail::gaussian_window(n, static_cast<double>(n) / 5.0);
    if (scale > 1) {
      const Plane rf = filter_valid(r, w), df = filter_valid(d, w);
      Plane rs((rf.width + 1) / 2, (rf.height + 1) / 2), ds(rs.width, rs.height);
      for (std::size_t y = 0; y < rs.height; ++y) {
        for (std::size_t x = 0; x < rs.width; ++x) {
          rs(y, x) = rf(2 * y, 2 * x);
          ds(y, x) = df(2 * y, 2 * x);
        }
      }
      r = std::move(rs);
      d = std::move(ds);
    }
    const Plane mu1 = filter_valid(r, w), mu2 = filter_valid(d, w);
    if (mu1.v.empty()) break;
    const Plane s11 = filter_valid(product(r, r), w), s22 = filter_valid(product(d, d), w),
                s12 = filter_valid(product(r, d), w);
    ++out.scales_used;
    for (std::size_t i = 0; i < mu1.v.size(); ++i) {
      double sigma1_sq = std::max(0.0, s11.v[i] - mu1.v[i] * mu1.v[i]);
      const double sigma2_sq = std::max(0.0, s22.v[i] - mu2.v[i] * mu2.v[i]);
      const double sigma12 = s12.v[i] - mu1.v[i] * mu2.v[i];
      double g = sigma12 / (sigma1_sq + eps);
      double sv_sq = sigma2_sq - g * sigma12;
      if (sigma1_sq < eps) {
        g = 0.0;
        sv_sq = sigma2_sq;
        sigma1_sq = 0.0;
      }
      if (sigma2_sq < eps) {
        g = 0.0;
        sv_sq = 0.0;
      }
      if (g < 0.0) {
        sv_sq = sigma2_sq;
        g = 0.0;
      }
      sv_sq = std::max(sv_sq, eps);
      num += std::log10(1.0 + g * g * sigma1_sq / (sv_sq + sigma_nsq));
      den += std::log10(1.0 + sigma1_sq / sigma_nsq);
    }
  }
  if (den <= 0.0) {
    out.constant_reference = true;
    out.value = 1.0;
  } else {
    out.value = num / den;
  }
  return out;
}

inline double vif(const Image& ref, const Image& test) { return vif_detail(ref, test).value; }

// Contrast sensitivity weights and masking coefficients for 8x8 DCT blocks.
inline constexpr std::array<double, 64> kHvsCsf = {
    1.608443, 2.339554, 2.573509, 1.608443, 1.072295, 0.643377, 0.504610, 0.421887,
    2.144591, 2.144591, 1.838221, 1.354478, 0.989811, 0.443708, 0.428918, 0.467911,
    1.838221, 1.979622, 1.608443, 1.072295, 0.643377, 0.451493, 0.372972, 0.459555,
    1.838221, 1.513829, 1.169777, 0.887417, 0.504610, 0.295806, 0.321689, 0.415082,
    1.429727, 1.169777, 0.695543, 0.459555, 0.378457, 0.236102, 0.249855, 0.334222,
    1.072295, 0.735288, 0.467911, 0.402111, 0.317717, 0.247453, 0.227744, 0.279729,
    0.525206, 0.402111, 0.329937, 0.295806, 0.249855, 0.212687, 0.214459, 0.254803,
    0.357432, 0.279729, 0.270896, 0.262603, 0.229778, 0.257351, 0.249855, 0.259950};
inline constexpr std::array<double, 64> kHvsMask = {
    0.390625, 0.826446, 1.000000, 0.390625, 0.173611, 0.062500, 0.038447, 0.026874,
    0.694444, 0.694444, 0.510204, 0.277008, 0.147929, 0.029727, 0.027778, 0.033058,
    0.510204, 0.591716, 0.390625, 0.173611, 0.062500, 0.030779, 0.021004, 0.031888,
    0.510204, 0.346021, 0.206612, 0.118906, 0.038447, 0.013212, 0.015625, 0.026015,
    0.308642, 0.206612, 0.073046, 0.031888, 0.021626, 0.008417, 0.009426, 0.016866,
    0.173611, 0.081633, 0.033058, 0.024414, 0.015242, 0.009246, 0.007831, 0.011815,
    0.041649, 0.024414, 0.016437, 0.013212, 0.009426, 0.006830, 0.006944, 0.009803,
    0.019290, 0.011815, 0.011080, 0.010412, 0.007972, 0.010000, 0.009426, 0.010203};

struct HvsResult {
  double psnr_hvs = kPsnrCap;
  double psnr_hvs_m = kPsnrCap;
  bool cropped = false;
};

namespace metrics_detail {

using Block = std::array<double, 64>;

/// Orthonormal 2-D DCT-II of an 8x8 block (separable matrix form).
inline Block dct8x8(const Block& in) {
  static const auto basis = [] {
    std::array<double, 64> b{};
    for (std::size_t k = 0; k < 8; ++k) {
      const double a = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (std::size_t n = 0; n < 8; ++n) {
        b[k * 8 + n] = a * std::cos(std::numbers::pi * (2.0 * static_cast<double>(n) + 1.0) *
                                    static_cast<double>(k) / 16.0);
      }
    }
    return b;
  }();
  Block tmp{}, out{};
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t k = 0; k < 8; ++k) {
      double s = 0.0;
      for (std::size_t n = 0; n < 8; ++n) s += basis[k * 8 + n] * in[y * 8 + n];
      tmp[y * 8 + k] = s;
    }
  }
  for (std::size_t k = 0; k < 8; ++k) {
    for (std::size_t x = 0; x < 8; ++x) {
      double s = 0.0;
      for (std::size_t n = 0; n < 8; ++n) s += basis[k * 8 + n] * tmp[n * 8 + x];
      out[k * 8 + x] = s;
    }
  }
  return out;
}

/// Sum of squared deviations from the mean over a sub-rectangle of the block.
inline double block_vari(const Block& b, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  double mean = 0.0;
  for (std::size_t y = y0; y < y0 + h; ++y)
    for (std::size_t x = x0; x < x0 + w; ++x) mean += b[y * 8 + x];
  mean /= static_cast<double>(h * w);
  double s = 0.0;
  for (std::size_t y = y0; y < y0 + h; ++y)
    for (std::size_t x = x0; x < x0 + w; ++x) s += (b[y * 8 + x] - mean) * (b[y * 8 + x] - mean);
  // var(ddof=1) * count
  return s * static_cast<double>(h * w) / static_cast<double>(h * w - 1);
}

/// Contrast-masking energy of a block.
inline double block_mask(const Block& pixels, const Block& dct) {
  double m = 0.0;
  for (std::size_t k = 1; k < 64; ++k) m += dct[k] * dct[k] * kHvsMask[k];
  const double whole = block_vari(pixels, 0, 0, 8, 8);
  double pop = 0.0;
  if (whole != 0.0) {
    pop = (block_vari(pixels, 0, 0, 4, 4) + block_vari(pixels, 0, 4, 4, 4) + block_vari(pixels, 4, 0, 4, 4) +
           block_vari(pixels, 4, 4, 4, 4)) /
          whole;
  }
  return std::sqrt(m * pop) / 32.0;
}

}  // namespace metrics_detail

/// PSNR-HVS and PSNR-HVS-M on luma, non-overlapping 8x8 blocks. Images whose
/// sides are not multiples of 8 are cropped to the top-left multiple.
inline HvsResult psnr_hvs_both(const Image& ref, const Image& test) {
  metrics_detail::check_pair(ref, test);
  metrics_detail::require_window(ref, 8, "psnr_hvs");
  const Plane a = luma8(ref), b = luma8(test);
  const std::size_t bw = ref.width / 8, bh = ref.height / 8;
  HvsResult out;
  out.cropped = bw * 8 != ref.width || bh * 8 != ref.height;
  double s_hvs = 0.0, s_hvsm = 0.0;
  for (std::size_t by = 0; by < bh; ++by) {
    for (std::size_t bx = 0; bx < bw; ++bx) {
      metrics_detail::Block pa{}, pb{};
      for (std::size_t y = 0; y < 8; ++y) {
        for (std::size_t x = 0; x < 8; ++x) {
          pa[y * 8 + x] = a(by * 8 + y, bx * 8 + x);
          pb[y * 8 + x] = b(by * 8 + y, bx * 8 + x);
        }
      }
      const auto da = metrics_detail::dct8x8(pa), db = metrics_detail::dct8x8(pb);
      const double mask = std::max(metrics_detail::block_mask(pa, da), metrics_detail::block_mask(pb, db));
      for (std::size_t k = 0; k < 64; ++k) {
        double u = std::abs(da[k] - db[k]);
        s_hvs += (u * kHvsCsf[k]) * (u * kHvsCsf[k]);
        if (k != 0) {
          const double t = mask / kHvsMask[k];
          u = u < t ? 0.0 : u - t;
        }
        s_hvsm += (u * kHvsCsf[k]) * (u * kHvsCsf[k]);
      }
    }
  }
  const double count = static_cast<double>(bw * bh * 64);
  auto to_psnr = [](double s) { return s == 0.0 ? kPsnrCap : psnr_from_mse(s); };
  out.psnr_hvs = to_psnr(s_hvs / count);
  out.psnr_hvs_m = to_psnr(s_hvsm / count);
  return out;
}

inline double psnr_hvs(const Image& ref, const Image& test) { return psnr_hvs_both(ref, test).psnr_hvs; }
inline double psnr_hvs_m(const Image& ref, const Image& test) { return psnr_hvs_both(ref, test).psnr_hvs_m; }

using MetricValues = std::array<double, kMetricCount>;

/// Per-image conditions worth surfacing alongside the numbers.
struct MetricFlags {
  std::size_t msssim_scales = 0;
  bool vif_constant_reference = false;
  bool hvs_cropped = false;
};

struct PairEvaluation {
  MetricValues values{};
  MetricFlags flags;
};

inline PairEvaluation evaluate_pair(const Image& ref, const Image& test) {
  metrics_detail::check_pair(ref, test);
  PairEvaluation e;
  const double m = mse(ref, test);
  e.values[0] = m;
  e.values[1] = std::sqrt(m);
  e.values[2] = psnr_from_mse(m);
  e.values[3] = ssim(ref, test);
  e.values[4] = msssim(ref, test);
  e.values[5] = uqi(ref, test);
  const auto v = vif_detail(ref, test);
  e.values[6] = v.value;
  const auto h = psnr_hvs_both(ref, test);
  e.values[7] = h.psnr_hvs;
  e.values[8] = h.psnr_hvs_m;
  e.flags = {msssim_scales(ref.width, ref.height), v.constant_reference, h.cropped};
  return e;
}

struct MetricRow {
  std::string name;
  MetricValues values{};
  MetricFlags flags;
};

struct Omission {
  std::string name;
  std::string reason;
};

struct MetricReport {
  std::vector<MetricRow> rows;  // sorted by name
  std::vector<Omission> omissions;
  MetricValues mean{};
  MetricValues stddev{};  // sample standard deviation, 0 for a single row

  bool has_aggregate() const { return !rows.empty(); }

  /// Column of one metric, in row order.
  std::vector<double> column(Metric m) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.values[static_cast<std::size_t>(m)]);
    return out;
  }

  void aggregate() {
    mean.fill(0.0);
    stddev.fill(0.0);
    if (rows.empty()) return;
    const double n = static_cast<double>(rows.size());
    for (std::size_t k = 0; k < kMetricCount; ++k) {
      double s = 0.0;
      for (const auto& r : rows) s += r.values[k];
      mean[k] = s / n;
      if (rows.size() > 1) {
        double ss = 0.0;
        for (const auto& r : rows) ss += (r.values[k] - mean[k]) * (r.values[k] - mean[k]);
        stddev[k] = std::sqrt(ss / (n - 1.0));
      }
    }
  }
};

/// Compares every PNG in test_dir against the same-named PNG in ref_dir.
/// Files present on only one side, unreadable, or of mismatched size are
/// recorded as omissions; the rest are evaluated (in parallel) and aggregated
/// in filename order.
inline MetricReport evaluate_directory(const std::filesystem::path& ref_dir, const std::filesystem::path& test_dir,
                                       std::size_t threads = default_thread_count()) {
  namespace fs = std::filesystem;
  for (const auto& d : {ref_dir, test_dir}) {
    if (!fs::is_directory(d)) throw DataError("not a directory: " + d.string());
  }
  std::map<std::string, fs::path> refs, tests;
  for (const auto& p : list_png(ref_dir)) refs[p.filename().string()] = p;
  for (const auto& p : list_png(test_dir)) tests[p.filename().string()] = p;
  MetricReport report;
  std::vector<std::string> names;
  for (const auto& [name, path] : refs) {
    if (tests.count(name)) {
      names.push_back(name);
    } else {
      report.omissions.push_back({name, "missing in " + test_dir.string()});
    }
  }
  for (const auto& [name, path] : tests) {
    if (!refs.count(name)) report.omissions.push_back({name, "missing in " + ref_dir.string()});
  }
  std::vector<std::optional<MetricRow>> rows(names.size());
  std::vector<std::string> errors(names.size());
  parallel_for(names.size(), threads, [&](std::size_t i) {
    try {
      const Image ref = read_png(refs[names[i]]);
      const Image test = read_png(tests[names[i]]);
      const auto e = evaluate_pair(ref, test);
      rows[i] = MetricRow{names[i], e.values, e.flags};
    } catch (const Error& ex) {
      errors[i] = ex.what();
    }
  });
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (rows[i]) {
      report.rows.push_back(std::move(*rows[i]));
    } else {
      report.omissions.push_back({names[i], errors[i]});
    }
  }
  std::sort(report.omissions.begin(), report.omissions.end(),
            [](const Omission& a, const Omission& b) { return a.name < b.name; });
  report.aggregate();
  return report;
}

inline std::string format_number(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << std::fixed << v;
  return os.str();
}

/// CSV: header, one row per image, then mean and std rows. Omissions follow
/// as comment lines.
inline void write_report_csv(std::ostream& os, const MetricReport& r) {
  os << "image";
  for (const char* n : kMetricNames) os << ',' << n;
  os << '\n';
  for (const auto& row : r.rows) {
    os << row.name;
    for (double v : row.values) os << ',' << format_number(v);
    os << '\n';
  }
  if (r.has_aggregate()) {
    os << "mean";
    for (double v : r.mean) os << ',' << format_number(v);
    os << "\nstd";
    for (double v : r.stddev) os << ',' << format_number(v);
    os << '\n';
  }
  for (const auto& o : r.omissions) os << "# omitted " << o.name << ": " << o.reason << '\n';
}

inline nlohmann::json report_json(const MetricReport& r) {
  nlohmann::json j;
  j["metrics"] = kMetricNames;
  j["metadata"] = {
      {"domain", "8-bit quantized, [0,255]"},
      {"rgb_metrics", {"MSE", "RMSE", "PSNR", "SSIM", "MSSSIM", "UQI"}},
      {"luma_metrics", {"VIF", "PSNR_HVS", "PSNR_HVS_M"}},
      {"luma_weights", {0.299, 0.587, 0.114}},
      {"psnr_cap_db", kPsnrCap},
      {"std", "sample (n-1)"},
  };
  auto rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json jr;
    jr["image"] = row.name;
    for (std::size_t k = 0; k < kMetricCount; ++k) jr[kMetricNames[k]] = row.values[k];
    jr["msssim_scales"] = row.flags.msssim_scales;
    if (row.flags.vif_constant_reference) jr["vif_constant_reference"] = true;
    if (row.flags.hvs_cropped) jr["hvs_cropped"] = true;
    rows.push_back(jr);
  }
  j["rows"] = rows;
  if (r.has_aggregate()) {
    nlohmann::json mean, sd;
    for (std::size_t k = 0; k < kMetricCount; ++k) {
      mean[kMetricNames[k]] = r.mean[k];
      sd[kMetricNames[k]] = r.stddev[k];
    }
    j["mean"] = mean;
    j["std"] = sd;
  }
  auto om = nlohmann::json::array();
  for (const auto& o : r.omissions) om.push_back({{"image", o.name}, {"reason", o.reason}});
  j["omissions"] = om;
  return j;
}

inline void write_report(const MetricReport& r, const std::filesystem::path& csv_path,
                         const std::filesystem::path& json_path) {
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw DataError("cannot write " + csv_path.string());
  write_report_csv(csv, r);
  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw DataError("cannot write " + json_path.string());
  js << report_json(r).dump(2) << '\n';
}

}  // namespace hairbench
