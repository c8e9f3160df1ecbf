#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "uwsplat/common.hpp"
#include "uwsplat/image.hpp"

namespace uwsplat {

// Per-channel water parameters: direct attenuation beta_d, backscatter
// coefficient beta_b (both log-parameterized, so strictly positive) and
// background light b_inf (logit-parameterized, so in (0,1)). Nine learnable
// scalars packed in the order log_beta_d, log_beta_b, b_inf_logit.
struct MediumParams {
  Vec3 log_beta_d = Vec3::Constant(std::log(0.05));
  Vec3 log_beta_b = Vec3::Constant(std::log(0.05));
  Vec3 b_inf_logit = Vec3::Zero();

  Vec3 beta_d() const { return log_beta_d.array().exp(); }
  Vec3 beta_b() const { return log_beta_b.array().exp(); }
  Vec3 b_inf() const {
    return Vec3(sigmoid(b_inf_logit[0]), sigmoid(b_inf_logit[1]),
                sigmoid(b_inf_logit[2]));
  }

  static MediumParams from_coefficients(const Vec3& beta_d, const Vec3& beta_b,
                                        const Vec3& b_inf) {
    MediumParams m;
    m.log_beta_d = beta_d.array().log();
    m.log_beta_b = beta_b.array().log();
    for (int c = 0; c < 3; ++c) m.b_inf_logit[c] = logit(b_inf[c]);
    return m;
  }

  std::array<double, 9> pack() const {
    return {log_beta_d[0], log_beta_d[1], log_beta_d[2],
            log_beta_b[0], log_beta_b[1], log_beta_b[2],
            b_inf_logit[0], b_inf_logit[1], b_inf_logit[2]};
  }
  static MediumParams unpack(const std::array<double, 9>& v) {
    MediumParams m;
    m.log_beta_d = Vec3(v[0], v[1], v[2]);
    m.log_beta_b = Vec3(v[3], v[4], v[5]);
    m.b_inf_logit = Vec3(v[6], v[7], v[8]);
    return m;
  }
};

// T_c = exp(-beta_c * z) per channel.
inline Image transmission(const Vec3& beta, const Image& depth) {
  require(depth.channels == 1, "transmission: depth must be single channel");
  Image out(depth.height, depth.width, 3);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const double z = depth.at(y, x, 0);
      require(z >= 0.0, "transmission: negative depth at (" + std::to_string(y) +
                            ", " + std::to_string(x) + ")");
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = std::exp(-beta[c] * z);
    }
  }
  return out;
}

// I_c = J exp(-beta_d z) + B_inf (1 - exp(-beta_b z)), per channel.
inline Image apply_medium(const Image& clean, const Image& depth,
                          const MediumParams& medium) {
  require(clean.channels == 3, "apply_medium: clean image must have 3 channels");
  require(depth.channels == 1 && depth.height == clean.height &&
              depth.width == clean.width,
          "apply_medium: depth map shape mismatch");
  const Vec3 beta_d = medium.beta_d(), beta_b = medium.beta_b(),
             b_inf = medium.b_inf();
  Image out(clean.height, clean.width, 3);
  for (int y = 0; y < clean.height; ++y) {
    for (int x = 0; x < clean.width; ++x) {
      const double z = depth.at(y, x, 0);
      for (int c = 0; c < 3; ++c) {
        out.at(y, x, c) = clean.at(y, x, c) * std::exp(-beta_d[c] * z) +
                          b_inf[c] * (1.0 - std::exp(-beta_b[c] * z));
      }
    }
  }
  return out;
}

struct RestoreResult {
  Image image;                       // J clamped to [0,1]
  std::vector<std::uint8_t> valid;   // H*W, 0 where transmission collapsed
};

// Algebraic inverse of apply_medium: J = (I - B_inf (1 - T^B)) / T^D.
// Pixels whose direct transmission underflows eps in any channel are
// unrecoverable: value 0, mask cleared.
inline RestoreResult restore_true_color(const Image& observed, const Image& depth,
                                        const MediumParams& medium,
                                        double eps = 1e-6) {
  require(observed.channels == 3, "restore_true_color: observed must have 3 channels");
  require(depth.channels == 1 && depth.height == observed.height &&
              depth.width == observed.width,
          "restore_true_color: depth map shape mismatch");
  const Vec3 beta_d = medium.beta_d(), beta_b = medium.beta_b(),
             b_inf = medium.b_inf();
  RestoreResult res;
  res.image = Image(observed.height, observed.width, 3);
  res.valid.assign(static_cast<std::size_t>(observed.height) * observed.width, 1);
  for (int y = 0; y < observed.height; ++y) {
    for (int x = 0; x < observed.width; ++x) {
      const double z = depth.at(y, x, 0);
      double td[3];
      bool ok = true;
      for (int c = 0; c < 3; ++c) {
        td[c] = std::exp(-beta_d[c] * z);
        if (!(td[c] > eps)) ok = false;
      }
      if (!ok) {
        res.valid[static_cast<std::size_t>(y) * observed.width + x] = 0;
        continue;  // image stays 0
      }
      for (int c = 0; c < 3; ++c) {
        const double tb = std::exp(-beta_b[c] * z);
        const double j = (observed.at(y, x, c) - b_inf[c] * (1.0 - tb)) / td[c];
        res.image.at(y, x, c) = std::clamp(j, 0.0, 1.0);
      }
    }
  }
  return res;
}

// Gradients of apply_medium. Given dL/d(observed), accumulates dL/d(clean),
// dL/d(depth) and dL/d(packed medium params), all in the stored
// log/logit parameterization.
struct MediumBackward {
  Image d_clean;              // H x W x 3
  Image d_depth;              // H x W x 1
  std::array<double, 9> d_params{};
};

inline MediumBackward medium_backward(const Image& clean, const Image& depth,
                                      const MediumParams& medium,
                                      const Image& d_observed) {
  require_same_shape(clean, d_observed, "medium_backward");
  const Vec3 beta_d = medium.beta_d(), beta_b = medium.beta_b(),
             b_inf = medium.b_inf();
  MediumBackward out;
  out.d_clean = Image(clean.height, clean.width, 3);
  out.d_depth = Image(clean.height, clean.width, 1);
  for (int y = 0; y < clean.height; ++y) {
    for (int x = 0; x < clean.width; ++x) {
      const double z = depth.at(y, x, 0);
      double dz = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double g = d_observed.at(y, x, c);
        const double td = std::exp(-beta_d[c] * z);
        const double tb = std::exp(-beta_b[c] * z);
        const double j = clean.at(y, x, c);
        out.d_clean.at(y, x, c) = g * td;
        dz += g * (-beta_d[c] * j * td + b_inf[c] * beta_b[c] * tb);
        // d/d log_beta_d = d/d beta_d * beta_d, etc.
        out.d_params[c] += g * (-z * j * td) * beta_d[c];
        out.d_params[3 + c] += g * (z * b_inf[c] * tb) * beta_b[c];
        out.d_params[6 + c] += g * (1.0 - tb) * b_inf[c] * (1.0 - b_inf[c]);
      }
      out.d_depth.at(y, x, 0) = dz;
    }
  }
  return out;
}

}  // namespace uwsplat
