#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "uwsplat/common.hpp"
#include "uwsplat/sh.hpp"

namespace uwsplat {

// Rotation matrix from a unit quaternion (w, x, y, z).
inline Mat3 quat_to_rotation(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

// dR/dq_k for a unit quaternion, k in {w,x,y,z}.
inline std::array<Mat3, 4> quat_rotation_jacobian(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> d;
  d[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return d;
}

// Structure-of-arrays store for the optimizable primitive parameters.
// Rotations are kept unit length; scales and opacities live in log/logit
// space so the optimizer stays unconstrained.
struct GaussianCloud {
  int sh_degree = 2;
  std::vector<double> positions;          // N * 3
  std::vector<double> log_scales;         // N * 3
  std::vector<double> rotations;          // N * 4, (w, x, y, z)
  std::vector<double> sh_coeffs;          // N * K * 3, K = (sh_degree+1)^2
  std::vector<double> opacity_logits;     // N
  std::vector<double> semantic_features;  // N * kSemanticDim

  std::size_t size() const { return opacity_logits.size(); }
  int sh_count() const { return sh::basis_count(sh_degree); }

  void resize(std::size_t n) {
    positions.resize(n * 3, 0.0);
    log_scales.resize(n * 3, 0.0);
    rotations.resize(n * 4, 0.0);
    sh_coeffs.resize(n * static_cast<std::size_t>(sh_count()) * 3, 0.0);
    opacity_logits.resize(n, 0.0);
    semantic_features.resize(n * kSemanticDim, 0.0);
  }

  Vec3 position(std::size_t i) const {
    return Vec3(positions[i * 3], positions[i * 3 + 1], positions[i * 3 + 2]);
  }
  Vec3 log_scale(std::size_t i) const {
    return Vec3(log_scales[i * 3], log_scales[i * 3 + 1], log_scales[i * 3 + 2]);
  }
  Vec4 rotation(std::size_t i) const {
    return Vec4(rotations[i * 4], rotations[i * 4 + 1], rotations[i * 4 + 2],
                rotations[i * 4 + 3]);
  }
  const double* sh(std::size_t i) const {
    return sh_coeffs.data() + i * static_cast<std::size_t>(sh_count()) * 3;
  }
  double opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }

  void set_position(std::size_t i, const Vec3& v) {
    for (int k = 0; k < 3; ++k) positions[i * 3 + k] = v[k];
  }
  void set_log_scale(std::size_t i, const Vec3& v) {
    for (int k = 0; k < 3; ++k) log_scales[i * 3 + k] = v[k];
  }
  void set_rotation(std::size_t i, const Vec4& q) {
    for (int k = 0; k < 4; ++k) rotations[i * 4 + k] = q[k];
  }

  void normalize_rotation(std::size_t i) {
    const Vec4 q = rotation(i);
    const double n = q.norm();
    if (n > 0.0) set_rotation(i, q / n);
  }
  void normalize_rotations() {
    for (std::size_t i = 0; i < size(); ++i) normalize_rotation(i);
  }

  void validate() const {
    const std::size_t n = size();
    require(positions.size() == n * 3 && log_scales.size() == n * 3 &&
                rotations.size() == n * 4 &&
                sh_coeffs.size() == n * static_cast<std::size_t>(sh_count()) * 3 &&
                semantic_features.size() == n * kSemanticDim,
            "GaussianCloud: parameter arrays disagree on primitive count");
    require(sh::degree_for_count(sh_count()) == sh_degree,
            "GaussianCloud: invalid SH degree");
    for (std::size_t i = 0; i < n; ++i) {
      require(std::abs(rotation(i).norm() - 1.0) < 1e-6,
              "GaussianCloud: rotation " + std::to_string(i) + " not unit norm");
    }
    for (double v : positions)
      require(std::isfinite(v), "GaussianCloud: non-finite position");
    for (double v : log_scales)
      require(std::isfinite(v), "GaussianCloud: non-finite log scale");
  }
};

// Sigma = R diag(exp(ls))^2 R^T. The quaternion is normalized internally, so
// gradients w.r.t. the raw 4-vector go through the unit-sphere projection.
inline Mat3 build_covariance(const Vec3& log_scale, const Vec4& rotation) {
  for (int k = 0; k < 3; ++k)
    require(std::isfinite(log_scale[k]), "build_covariance: non-finite log scale");
  for (int k = 0; k < 4; ++k)
    require(std::isfinite(rotation[k]), "build_covariance: non-finite rotation");
  const double n = rotation.norm();
  require(n > 0.0, "build_covariance: zero quaternion");
  const Mat3 r = quat_to_rotation(rotation / n);
  const Vec3 s2 = (2.0 * log_scale).array().exp();
  return r * s2.asDiagonal() * r.transpose();
}

// c(v) = max(0, sum_k coeff_k Y_k(v) + 0.5), one value per channel.
// coeffs is laid out K x 3.
inline Vec3 eval_sh_color(const double* coeffs, int count, const Vec3& view_dir) {
  const int degree = sh::degree_for_count(count);
  require(degree >= 0, "eval_sh_color: basis count " + std::to_string(count) +
                           " is not (L+1)^2 with L <= 3");
  double basis[16];
  sh::eval_basis(degree, view_dir, basis);
  Vec3 rgb = Vec3::Constant(0.5);
  for (int k = 0; k < count; ++k)
    for (int c = 0; c < 3; ++c) rgb[c] += coeffs[k * 3 + c] * basis[k];
  return rgb.cwiseMax(0.0);
}

}  // namespace uwsplat
