#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uwsplat/common.hpp"
#include "uwsplat/image.hpp"

namespace uwsplat {

enum class FrameKind { Keyframe, Interpolated };

inline const char* frame_kind_name(FrameKind k) {
  return k == FrameKind::Keyframe ? "keyframe" : "interpolated";
}

// Term weights of the composite objective. The l1/l2 reconstruction weights
// are stage-dependent and live in StageConfig; everything else sits here.
struct LossWeights {
  double lambda_s = 0.1;       // semantic alignment
  double lambda_ssim = 0.2;    // D-SSIM share inside L_Rec
  double lambda_depth = 0.05;
  double lambda_g = 0.01;      // grey-world
  double lambda_smooth = 0.01;
  double alpha_reg = 1.0;           // uncertainty regularizer
  double interp_fixed_weight = 0.1; // fixed interpolated-frame weight
};

struct LossBreakdown {
  double l_rec = 0.0;
  double l_depth = 0.0;
  double l_g = 0.0;
  double l_smooth = 0.0;
  double l_s = 0.0;
  double l_2 = 0.0;
  double l_final = 0.0;  // composite objective for this view
  double l_step = 0.0;   // what the optimizer sees (interp frames reweighted)
  FrameKind frame_kind = FrameKind::Keyframe;
};

// ---------------------------------------------------------------------------
// Photometric terms

inline std::pair<double, double> photometric_terms(const Image& rendered,
                                                   const Image& target) {
  require_same_shape(rendered, target, "photometric_terms");
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const double r = rendered.data[i] - target.data[i];
    l1 += std::abs(r);
    l2 += r * r;
  }
  const double inv = 1.0 / static_cast<double>(rendered.size());
  return {l1 * inv, l2 * inv};
}

// d(mean abs)/d(rendered) and d(mean squared)/d(rendered), scaled by the
// given weights and accumulated into grad. Sign convention: d|r|/dr = 0 at
// exactly zero residual.
inline void photometric_backward(const Image& rendered, const Image& target,
                                 double l1_weight, double l2_weight,
                                 Image& grad) {
  const double inv = 1.0 / static_cast<double>(rendered.size());
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const double r = rendered.data[i] - target.data[i];
    double g = l2_weight * 2.0 * r * inv;
    if (r > 0.0)
      g += l1_weight * inv;
    else if (r < 0.0)
      g -= l1_weight * inv;
    grad.data[i] += g;
  }
}

// ---------------------------------------------------------------------------
// SSIM (11x11 Gaussian window, sigma 1.5, valid-region convolution)

namespace detail {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

inline const std::array<double, kSsimWindow>& ssim_window_1d() {
  static const std::array<double, kSsimWindow> w = [] {
    std::array<double, kSsimWindow> v{};
    const int half = kSsimWindow / 2;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double d = i - half;
      v[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
      sum += v[i];
    }
    for (double& x : v) x /= sum;
    return v;
  }();
  return w;
}

// Valid-region separable filtering of one channel; out is (H-10) x (W-10).
inline void ssim_filter(const Image& img, int channel, std::vector<double>& out,
                        int& vh, int& vw) {
  const auto& w1 = ssim_window_1d();
  const int h = img.height, w = img.width;
  vh = h - kSsimWindow + 1;
  vw = w - kSsimWindow + 1;
  std::vector<double> horiz(static_cast<std::size_t>(h) * vw);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += w1[k] * img.at(y, x + k, channel);
      horiz[static_cast<std::size_t>(y) * vw + x] = acc;
    }
  out.assign(static_cast<std::size_t>(vh) * vw, 0.0);
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k)
        acc += w1[k] * horiz[static_cast<std::size_t>(y + k) * vw + x];
      out[static_cast<std::size_t>(y) * vw + x] = acc;
    }
}

struct SsimChannelMaps {
  int vh = 0, vw = 0;
  std::vector<double> mu_a, mu_b, e_aa, e_bb, e_ab;
};

inline SsimChannelMaps ssim_maps(const Image& a, const Image& b, int channel) {
  SsimChannelMaps m;
  ssim_filter(a, channel, m.mu_a, m.vh, m.vw);
  ssim_filter(b, channel, m.mu_b, m.vh, m.vw);
  Image aa(a.height, a.width, 1), bb(a.height, a.width, 1), ab(a.height, a.width, 1);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      const double va = a.at(y, x, channel), vb = b.at(y, x, channel);
      aa.at(y, x, 0) = va * va;
      bb.at(y, x, 0) = vb * vb;
      ab.at(y, x, 0) = va * vb;
    }
  int vh = 0, vw = 0;
  ssim_filter(aa, 0, m.e_aa, vh, vw);
  ssim_filter(bb, 0, m.e_bb, vh, vw);
  ssim_filter(ab, 0, m.e_ab, vh, vw);
  return m;
}

}  // namespace detail

// Mean SSIM over channels and valid window positions.
inline double ssim_index(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim_index");
  require(a.height >= detail::kSsimWindow && a.width >= detail::kSsimWindow,
          "ssim_index: image smaller than the 11x11 window");
  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < a.channels; ++c) {
    const auto m = detail::ssim_maps(a, b, c);
    for (std::size_t i = 0; i < m.mu_a.size(); ++i) {
      const double mu_a = m.mu_a[i], mu_b = m.mu_b[i];
      const double var_a = m.e_aa[i] - mu_a * mu_a;
      const double var_b = m.e_bb[i] - mu_b * mu_b;
      const double cov = m.e_ab[i] - mu_a * mu_b;
      const double s = ((2.0 * mu_a * mu_b + detail::kSsimC1) *
                        (2.0 * cov + detail::kSsimC2)) /
                       ((mu_a * mu_a + mu_b * mu_b + detail::kSsimC1) *
                        (var_a + var_b + detail::kSsimC2));
      total += s;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// d(ssim_index)/d(a), accumulated into grad scaled by `scale`.
inline void ssim_backward(const Image& a, const Image& b, double scale,
                          Image& grad) {
  require_same_shape(a, b, "ssim_backward");
  const auto& w1 = detail::ssim_window_1d();
  const int win = detail::kSsimWindow;
  for (int c = 0; c < a.channels; ++c) {
    const auto m = detail::ssim_maps(a, b, c);
    const double norm =
        scale / (static_cast<double>(m.mu_a.size()) * a.channels);
    for (int py = 0; py < m.vh; ++py) {
      for (int px = 0; px < m.vw; ++px) {
        const std::size_t pi = static_cast<std::size_t>(py) * m.vw + px;
        const double mu_a = m.mu_a[pi], mu_b = m.mu_b[pi];
        const double var_a = m.e_aa[pi] - mu_a * mu_a;
        const double var_b = m.e_bb[pi] - mu_b * mu_b;
        const double cov = m.e_ab[pi] - mu_a * mu_b;
        const double a1 = 2.0 * mu_a * mu_b + detail::kSsimC1;
        const double a2 = 2.0 * cov + detail::kSsimC2;
        const double b1 = mu_a * mu_a + mu_b * mu_b + detail::kSsimC1;
        const double b2 = var_a + var_b + detail::kSsimC2;
        const double s = (a1 * a2) / (b1 * b2);
        // d s / d a(q) = w * (g1 + g2 (b_q - mu_b) - g3 - g4 (a_q - mu_a))
        const double g1 = 2.0 * mu_b * a2 / (b1 * b2);
        const double g2 = 2.0 * a1 / (b1 * b2);
        const double g3 = 2.0 * s * mu_a / b1;
        const double g4 = 2.0 * s / b2;
        for (int ky = 0; ky < win; ++ky) {
          for (int kx = 0; kx < win; ++kx) {
            const int qy = py + ky, qx = px + kx;
            const double wq = w1[ky] * w1[kx];
            const double aq = a.at(qy, qx, c), bq = b.at(qy, qx, c);
            grad.at(qy, qx, c) +=
                norm * wq * (g1 + g2 * (bq - mu_b) - g3 - g4 * (aq - mu_a));
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Remaining terms

// L_Rec = l1_weight * l1 + lambda_ssim * (1 - SSIM) / 2.
inline double reconstruction_loss(const Image& rendered, const Image& target,
                                  double l1_weight, double lambda_ssim) {
  const auto [l1, l2] = photometric_terms(rendered, target);
  (void)l2;
  double loss = l1_weight * l1;
  if (lambda_ssim != 0.0)
    loss += lambda_ssim * (1.0 - ssim_index(rendered, target)) * 0.5;
  return loss;
}

// Mean absolute depth error over the valid mask; zero when the mask is empty.
// A null mask means every pixel is valid.
inline double depth_loss(const Image& rendered_depth, const Image& prior_depth,
                         const std::vector<std::uint8_t>* valid_mask) {
  require_same_shape(rendered_depth, prior_depth, "depth_loss");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < rendered_depth.size(); ++i) {
    if (valid_mask && !(*valid_mask)[i]) continue;
    total += std::abs(rendered_depth.data[i] - prior_depth.data[i]);
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

inline void depth_loss_backward(const Image& rendered_depth,
                                const Image& prior_depth,
                                const std::vector<std::uint8_t>* valid_mask,
                                double scale, Image& grad) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < rendered_depth.size(); ++i)
    if (!valid_mask || (*valid_mask)[i]) ++count;
  if (count == 0) return;
  const double s = scale / static_cast<double>(count);
  for (std::size_t i = 0; i < rendered_depth.size(); ++i) {
    if (valid_mask && !(*valid_mask)[i]) continue;
    const double r = rendered_depth.data[i] - prior_depth.data[i];
    if (r > 0.0)
      grad.data[i] += s;
    else if (r < 0.0)
      grad.data[i] -= s;
  }
}

// Grey-world prior on the restored radiance: sum_c (mean_c - 0.5)^2.
inline double grey_world_loss(const Image& restored) {
  require(restored.channels == 3, "grey_world_loss: expected 3 channels");
  const double inv = 1.0 / static_cast<double>(restored.height * restored.width);
  double loss = 0.0;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int y = 0; y < restored.height; ++y)
      for (int x = 0; x < restored.width; ++x) mean += restored.at(y, x, c);
    mean *= inv;
    loss += (mean - 0.5) * (mean - 0.5);
  }
  return loss;
}

inline void grey_world_backward(const Image& restored, double scale, Image& grad) {
  const double inv = 1.0 / static_cast<double>(restored.height * restored.width);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int y = 0; y < restored.height; ++y)
      for (int x = 0; x < restored.width; ++x) mean += restored.at(y, x, c);
    mean *= inv;
    const double g = scale * 2.0 * (mean - 0.5) * inv;
    for (int y = 0; y < restored.height; ++y)
      for (int x = 0; x < restored.width; ++x) grad.at(y, x, c) += g;
  }
}

// Edge-aware depth smoothness: mean over H x W of
// |dx D| e^{-|dx I|} + |dy D| e^{-|dy I|}, forward differences with the last
// column/row padded to zero, image gradients averaged over channels.
inline double edge_smooth_loss(const Image& rendered_depth,
                               const Image& target_image) {
  require(rendered_depth.channels == 1, "edge_smooth_loss: depth must be 1-channel");
  require(rendered_depth.height == target_image.height &&
              rendered_depth.width == target_image.width,
          "edge_smooth_loss: shape mismatch");
  require(rendered_depth.height >= 2 && rendered_depth.width >= 2,
          "edge_smooth_loss: image must be at least 2x2");
  const int h = rendered_depth.height, w = rendered_depth.width;
  const int ch = target_image.channels;
  double total = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) {
        double gi = 0.0;
        for (int c = 0; c < ch; ++c)
          gi += std::abs(target_image.at(y, x + 1, c) - target_image.at(y, x, c));
        gi /= ch;
        total += std::abs(rendered_depth.at(y, x + 1, 0) -
                          rendered_depth.at(y, x, 0)) *
                 std::exp(-gi);
      }
      if (y + 1 < h) {
        double gi = 0.0;
        for (int c = 0; c < ch; ++c)
          gi += std::abs(target_image.at(y + 1, x, c) - target_image.at(y, x, c));
        gi /= ch;
        total += std::abs(rendered_depth.at(y + 1, x, 0) -
                          rendered_depth.at(y, x, 0)) *
                 std::exp(-gi);
      }
    }
  }
  return total / static_cast<double>(h * w);
}

inline void edge_smooth_backward(const Image& rendered_depth,
                                 const Image& target_image, double scale,
                                 Image& grad) {
  const int h = rendered_depth.height, w = rendered_depth.width;
  const int ch = target_image.channels;
  const double s = scale / static_cast<double>(h * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) {
        double gi = 0.0;
        for (int c = 0; c < ch; ++c)
          gi += std::abs(target_image.at(y, x + 1, c) - target_image.at(y, x, c));
        const double e = std::exp(-gi / ch);
        const double d = rendered_depth.at(y, x + 1, 0) - rendered_depth.at(y, x, 0);
        const double g = d > 0.0 ? s * e : (d < 0.0 ? -s * e : 0.0);
        grad.at(y, x + 1, 0) += g;
        grad.at(y, x, 0) -= g;
      }
      if (y + 1 < h) {
        double gi = 0.0;
        for (int c = 0; c < ch; ++c)
          gi += std::abs(target_image.at(y + 1, x, c) - target_image.at(y, x, c));
        const double e = std::exp(-gi / ch);
        const double d = rendered_depth.at(y + 1, x, 0) - rendered_depth.at(y, x, 0);
        const double g = d > 0.0 ? s * e : (d < 0.0 ? -s * e : 0.0);
        grad.at(y + 1, x, 0) += g;
        grad.at(y, x, 0) -= g;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Composition

struct LossParts {
  double l_rec = 0.0;     // already holds the stage l1 weight internally
  double l_depth = 0.0;
  double l_g = 0.0;
  double l_smooth = 0.0;
  double l_s = 0.0;
  double l_2 = 0.0;       // raw mean-squared error
};

// L_final = L_Rec + ld*L_Depth + lg*L_g + lsm*L_Smooth + ls*L_s + l2w*L_2,
// with the l2 weight supplied by the active stage.
inline LossBreakdown compose_final(const LossParts& parts,
                                   const LossWeights& weights, double l2_weight,
                                   FrameKind kind = FrameKind::Keyframe) {
  LossBreakdown out;
  out.l_rec = parts.l_rec;
  out.l_depth = parts.l_depth;
  out.l_g = parts.l_g;
  out.l_smooth = parts.l_smooth;
  out.l_s = parts.l_s;
  out.l_2 = parts.l_2;
  out.frame_kind = kind;
  out.l_final = parts.l_rec + weights.lambda_depth * parts.l_depth +
                weights.lambda_g * parts.l_g +
                weights.lambda_smooth * parts.l_smooth +
                weights.lambda_s * parts.l_s + l2_weight * parts.l_2;
  out.l_step = out.l_final;
  return out;
}

// Learned-uncertainty weighting for interpolated frames:
// L' = gamma/2 * L_total - alpha/2 * log(gamma).
inline double interp_frame_loss(double l_total, double gamma, double alpha_reg) {
  require(gamma > 0.0, "interp_frame_loss: gamma must be positive");
  return 0.5 * gamma * l_total - 0.5 * alpha_reg * std::log(gamma);
}

// Fixed-weight mode: the interpolated frame contributes weight * L_total.
inline double interp_frame_loss_fixed(double l_total, double weight = 0.1) {
  return weight * l_total;
}

}  // namespace uwsplat
