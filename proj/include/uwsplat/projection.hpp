#pragma once

#include <cmath>

#include "uwsplat/camera.hpp"
#include "uwsplat/common.hpp"

namespace uwsplat {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kCovDilation = 0.3;
inline constexpr double kRadiusSigmas = 3.0;

// Screen-space footprint of one Gaussian. cov2d/conic store (xx, xy, yy).
struct ProjectedGaussian {
  bool culled = true;
  Vec2 mean2d = Vec2::Zero();
  double cov2d[3] = {0.0, 0.0, 0.0};
  double conic[3] = {0.0, 0.0, 0.0};
  double radius = 0.0;  // kRadiusSigmas * sqrt(max eigenvalue)
  double z = 0.0;       // camera-space depth
};

// First-order (EWA) projection: cov2d = J W Sigma W^T J^T + dilation * I.
// Culled when behind the near plane, when the dilated covariance is singular,
// or when the center lies more than one footprint radius outside the image.
inline ProjectedGaussian project_gaussian(const Vec3& mean, const Mat3& cov3d,
                                          const Camera& camera,
                                          double near_plane = kNearPlane) {
  ProjectedGaussian out;
  const Vec3 p = camera.to_camera(mean);
  if (!(p.z() > near_plane)) return out;
  out.z = p.z();

  const double inv_z = 1.0 / p.z();
  out.mean2d = Vec2(camera.fx * p.x() * inv_z + camera.cx,
                    camera.fy * p.y() * inv_z + camera.cy);

  Eigen::Matrix<double, 2, 3> jac;
  jac << camera.fx * inv_z, 0.0, -camera.fx * p.x() * inv_z * inv_z,
      0.0, camera.fy * inv_z, -camera.fy * p.y() * inv_z * inv_z;
  const Eigen::Matrix<double, 2, 3> m = jac * camera.rotation;
  const Mat2 cov = m * cov3d * m.transpose();

  const double a = cov(0, 0) + kCovDilation;
  const double b = 0.5 * (cov(0, 1) + cov(1, 0));
  const double c = cov(1, 1) + kCovDilation;
  const double det = a * c - b * b;
  if (!(det > 0.0) || !std::isfinite(det)) return out;

  const double inv_det = 1.0 / det;
  out.cov2d[0] = a;
  out.cov2d[1] = b;
  out.cov2d[2] = c;
  out.conic[0] = c * inv_det;
  out.conic[1] = -b * inv_det;
  out.conic[2] = a * inv_det;

  const double mid = 0.5 * (a + c);
  const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
  out.radius = kRadiusSigmas * std::sqrt(lambda_max);

  const double r = out.radius;
  if (out.mean2d.x() + r < 0.0 || out.mean2d.x() - r > camera.width ||
      out.mean2d.y() + r < 0.0 || out.mean2d.y() - r > camera.height)
    return out;

  out.culled = false;
  return out;
}

// exp(-1/2 (x-mu)^T cov^{-1} (x-mu)); zero when cov is not invertible.
inline double eval_gaussian_2d(const Vec2& x, const Vec2& mean2d,
                               const Mat2& cov2d) {
  const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(1, 0);
  if (!(det > 0.0) || !std::isfinite(det)) return 0.0;
  const double inv_det = 1.0 / det;
  const double dx = x.x() - mean2d.x();
  const double dy = x.y() - mean2d.y();
  const double m = inv_det * (cov2d(1, 1) * dx * dx - (cov2d(0, 1) + cov2d(1, 0)) * dx * dy +
                              cov2d(0, 0) * dy * dy);
  return std::exp(-0.5 * m);
}

// Same kernel on any footprint carrying mean2d/conic; used per pixel.
template <class Footprint>
inline double gaussian_weight_at(const Footprint& g, double px, double py) {
  const double dx = px - g.mean2d.x();
  const double dy = py - g.mean2d.y();
  const double m =
      g.conic[0] * dx * dx + 2.0 * g.conic[1] * dx * dy + g.conic[2] * dy * dy;
  return std::exp(-0.5 * m);
}

template <class Footprint>
inline bool inside_radius(const Footprint& g, double px, double py) {
  const double dx = px - g.mean2d.x();
  const double dy = py - g.mean2d.y();
  return dx * dx + dy * dy <= g.radius * g.radius;
}

}  // namespace uwsplat
