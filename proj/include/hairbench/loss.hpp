#pragma once

// Reconstruction loss for hair inpainting:
//
//   L = alpha*L1_fg + beta*L1_bg + gamma*L2_composed + delta*L_ssim + lambda*L_tv
//
// L1_fg / L1_bg are mean absolute errors over hair / background pixel-channels,
// L2_composed is the squared error on hair pixels normalized by all pixels,
// L_ssim is 1 - SSIM over the whole image, and L_tv is anisotropic total
// variation of the prediction restricted to the 1-pixel-dilated hair mask.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "hairbench/autograd.hpp"
#include "hairbench/detail/gaussian.hpp"
#include "hairbench/error.hpp"
#include "hairbench/tensor.hpp"

namespace hairbench {

struct LossWeights {
  double alpha = 2.626;   // L1 foreground
  double beta = 3.892;    // L1 background
  double gamma = 0.309;   // L2 composed
  double delta = 0.398;   // SSIM
  double lambda = 0.597;  // total variation

  static LossWeights zero() { return {0, 0, 0, 0, 0}; }

  void validate() const {
    for (double w : {alpha, beta, gamma, delta, lambda}) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
    }
  }

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

inline void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"alpha", w.alpha}, {"beta", w.beta}, {"gamma", w.gamma},
                     {"delta", w.delta}, {"lambda", w.lambda}};
}

inline void from_json(const nlohmann::json& j, LossWeights& w) {
  w = LossWeights{};
  w.alpha = j.value("alpha", w.alpha);
  w.beta = j.value("beta", w.beta);
  w.gamma = j.value("gamma", w.gamma);
  w.delta = j.value("delta", w.delta);
  w.lambda = j.value("lambda", w.lambda);
}

/// prediction:[B,C,H,W], ground_truth: same shape, hair_mask:[B,1,H,W] with values in {0,1}.
template <typename T>
struct MaskedPair {
  Var<T> prediction;
  Tensor<T> ground_truth;
  Tensor<T> hair_mask;

  void validate() const {
    const auto& ps = prediction.shape();
    if (ps.size() != 4) throw ContractViolation("MaskedPair: prediction must be [B,C,H,W]");
    if (ground_truth.shape() != ps) {
      throw ContractViolation("MaskedPair: ground truth shape " + to_string(ground_truth.shape()) +
                              " != prediction shape " + to_string(ps));
    }
    if (hair_mask.shape() != Shape{ps[0], 1, ps[2], ps[3]}) {
      throw ContractViolation("MaskedPair: mask shape " + to_string(hair_mask.shape()) +
                              " must be [B,1,H,W] matching " + to_string(ps));
    }
    for (T m : hair_mask.data()) {
      if (m != T{0} && m != T{1}) throw ContractViolation("MaskedPair: mask values must be 0 or 1");
    }
  }
};

namespace loss_detail {

template <typename T>
T sign(T v) {
  return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0});
}

/// Masked mean absolute error; `complement` selects background pixels.
template <typename T>
Var<T> masked_l1(const MaskedPair<T>& p, bool complement) {
  p.validate();
  const auto& s = p.prediction.shape();
  const std::size_t batch = s[0], ch = s[1], plane = s[2] * s[3];
  const auto& pred = p.prediction.value();
  auto mask_at = [&](std::size_t b, std::size_t i) {
    const T m = p.hair_mask[b * plane + i];
    return complement ? T{1} - m : m;
  };
  double count = 0.0, total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < plane; ++i) count += mask_at(b, i);
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t k = (b * ch + c) * plane + i;
        total += mask_at(b, i) * std::abs(static_cast<double>(pred[k]) - p.ground_truth[k]);
      }
    }
  }
  const double denom = std::max(1.0, static_cast<double>(ch) * count);
  return make_result<T>(
      OpKind::MaskedL1, Tensor<T>::scalar(static_cast<T>(total / denom)), {p.prediction},
      [=, gt = p.ground_truth, mask = p.hair_mask](Node<T>& n) {
        Node<T>* g = ops_detail::grad_target(n, 0);
        if (!g) return;
        const T up = static_cast<T>(n.grad[0] / denom);
        const auto& pv = n.inputs[0]->value;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < ch; ++c) {
            for (std::size_t i = 0; i < plane; ++i) {
              const T m = complement ? T{1} - mask[b * plane + i] : mask[b * plane + i];
              const std::size_t k = (b * ch + c) * plane + i;
              g->grad[k] += up * m * sign(pv[k] - gt[k]);
            }
          }
        }
      });
}

/// 3x3 binary dilation of a [B,1,H,W] mask.
template <typename T>
Tensor<T> dilate(const Tensor<T>& mask) {
  const auto& s = mask.shape();
  const std::size_t h = s[2], w = s[3];
  Tensor<T> out(s);
  for (std::size_t b = 0; b < s[0]; ++b) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        T v = T{0};
        for (long di = -1; di <= 1 && v == T{0}; ++di) {
          for (long dj = -1; dj <= 1; ++dj) {
            const long y = static_cast<long>(i) + di, x = static_cast<long>(j) + dj;
            if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) continue;
            if (mask[(b * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)] != T{0}) {
              v = T{1};
              break;
            }
          }
        }
        out[(b * h + i) * w + j] = v;
      }
    }
  }
  return out;
}

}  // namespace loss_detail

template <typename T>
Var<T> l1_foreground(const MaskedPair<T>& p) {
  return loss_detail::masked_l1(p, false);
}

template <typename T>
Var<T> l1_background(const MaskedPair<T>& p) {
  return loss_detail::masked_l1(p, true);
}

/// Squared error on hair pixels, normalized by the number of all pixel-channels.
template <typename T>
Var<T> l2_composed(const MaskedPair<T>& p) {
  p.validate();
  const auto& s = p.prediction.shape();
  const std::size_t batch = s[0], ch = s[1], plane = s[2] * s[3];
  const double denom = static_cast<double>(batch * ch * plane);
  const auto& pred = p.prediction.value();
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t k = (b * ch + c) * plane + i;
        const double d = static_cast<double>(pred[k]) - p.ground_truth[k];
        total += p.hair_mask[b * plane + i] * d * d;
      }
    }
  }
  return make_result<T>(
      OpKind::MaskedSquaredComposed, Tensor<T>::scalar(static_cast<T>(total / denom)),
      {p.prediction}, [=, gt = p.ground_truth, mask = p.hair_mask](Node<T>& n) {
        Node<T>* g = ops_detail::grad_target(n, 0);
        if (!g) return;
        const double up = n.grad[0] * 2.0 / denom;
        const auto& pv = n.inputs[0]->value;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < ch; ++c) {
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t k = (b * ch + c) * plane + i;
              g->grad[k] += static_cast<T>(up * mask[b * plane + i] * (pv[k] - gt[k]));
            }
          }
        }
      });
}

/// 1 - SSIM(prediction, ground truth), Gaussian 11x11 window (sigma 1.5), valid
/// extent, K1 = 0.01, K2 = 0.03, dynamic range 1; averaged over windows and channels.
template <typename T>
Var<T> ssim_loss(const MaskedPair<T>& p) {
  p.validate();
  const auto& s = p.prediction.shape();
  if (s[2] < detail::kSsimWindow || s[3] < detail::kSsimWindow) {
    throw ConfigError("ssim_loss: image " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                      " smaller than the 11x11 window");
  }
  const auto window = detail::gaussian_window(detail::kSsimWindow, detail::kSsimSigma);
  const double c1 = detail::kSsimK1 * detail::kSsimK1;
  const double c2 = detail::kSsimK2 * detail::kSsimK2;
  const Var<T>& x = p.prediction;
  const Var<T> y = Var<T>::constant(p.ground_truth);
  auto blur = [&](const Var<T>& v) { return gaussian_blur_valid(v, window); };

  const Var<T> mu_x = blur(x);
  const Var<T> mu_y = blur(y);
  const Var<T> mu_xx = mul(mu_x, mu_x);
  const Var<T> mu_yy = mul(mu_y, mu_y);
  const Var<T> mu_xy = mul(mu_x, mu_y);
  const Var<T> var_x = sub(blur(mul(x, x)), mu_xx);
  const Var<T> var_y = sub(blur(mul(y, y)), mu_yy);
  const Var<T> cov = sub(blur(mul(x, y)), mu_xy);

  const Var<T> num = mul(add_scalar(scale(mu_xy, 2.0), c1), add_scalar(scale(cov, 2.0), c2));
  const Var<T> den = mul(add_scalar(add(mu_xx, mu_yy), c1), add_scalar(add(var_x, var_y), c2));
  return add_scalar(scale(mean(div(num, den)), -1.0), 1.0);
}

/// Anisotropic TV of the prediction (forward differences), summed at positions
/// inside the dilated hair mask and normalized by the number of pixel-channels.
template <typename T>
Var<T> tv_loss(const MaskedPair<T>& p) {
  p.validate();
  const auto& s = p.prediction.shape();
  const std::size_t batch = s[0], ch = s[1], h = s[2], w = s[3], plane = h * w;
  const double denom = static_cast<double>(batch * ch * plane);
  const Tensor<T> region = loss_detail::dilate(p.hair_mask);
  const auto& x = p.prediction.value();
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (b * ch + c) * plane;
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          if (region[b * plane + i * w + j] == T{0}) continue;
          const double v = x[base + i * w + j];
          if (j + 1 < w) total += std::abs(x[base + i * w + j + 1] - v);
          if (i + 1 < h) total += std::abs(x[base + (i + 1) * w + j] - v);
        }
      }
    }
  }
  return make_result<T>(
      OpKind::MaskedTotalVariation, Tensor<T>::scalar(static_cast<T>(total / denom)),
      {p.prediction}, [=](Node<T>& n) {
        Node<T>* g = ops_detail::grad_target(n, 0);
        if (!g) return;
        const T up = static_cast<T>(n.grad[0] / denom);
        const auto& xv = n.inputs[0]->value;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t base = (b * ch + c) * plane;
            for (std::size_t i = 0; i < h; ++i) {
              for (std::size_t j = 0; j < w; ++j) {
                if (region[b * plane + i * w + j] == T{0}) continue;
                const std::size_t k = base + i * w + j;
                if (j + 1 < w) {
                  const T sg = up * loss_detail::sign(xv[k + 1] - xv[k]);
                  g->grad[k + 1] += sg;
                  g->grad[k] -= sg;
                }
                if (i + 1 < h) {
                  const T sg = up * loss_detail::sign(xv[k + w] - xv[k]);
                  g->grad[k + w] += sg;
                  g->grad[k] -= sg;
                }
              }
            }
          }
        }
      });
}

inline constexpr std::array<const char*, 5> kLossTermNames = {"l1_foreground", "l1_background",
                                                              "l2_composed", "ssim", "tv"};

template <typename T>
struct LossBreakdown {
  Var<T> total;
  /// Weighted contribution of each term, in kLossTermNames order; 0 for dropped terms.
  std::array<double, 5> weighted{};
};

/// Weighted sum of the five terms. Terms with zero weight are not evaluated,
/// so they contribute exactly nothing to value or gradient.
template <typename T>
LossBreakdown<T> reconstruction_loss(const MaskedPair<T>& p, const LossWeights& w) {
  w.validate();
  p.validate();
  using TermFn = Var<T> (*)(const MaskedPair<T>&);
  const std::array<std::pair<double, TermFn>, 5> terms = {{{w.alpha, &l1_foreground<T>},
                                                           {w.beta, &l1_background<T>},
                                                           {w.gamma, &l2_composed<T>},
                                                           {w.delta, &ssim_loss<T>},
                                                           {w.lambda, &tv_loss<T>}}};
  LossBreakdown<T> out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const auto& [weight, fn] = terms[i];
    if (weight == 0.0) continue;
    Var<T> term = scale(fn(p), weight);
    out.weighted[i] = term.value().item();
    out.total = out.total.defined() ? add(out.total, term) : term;
  }
  if (!out.total.defined()) {
    // All weights zero: a constant zero that still depends on the prediction.
    out.total = scale(sum(p.prediction), 0.0);
  }
  return out;
}

}  // namespace hairbench
