#pragma once

#include <cmath>

#include "uwsplat/common.hpp"

namespace uwsplat::sh {

// Real spherical harmonics in the 3DGS convention (Condon-Shortley phases
// folded into the constants). Basis index k runs band-major:
// [ (0,0), (1,-1), (1,0), (1,1), (2,-2), ... ].
inline constexpr int kMaxDegree = 3;
inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792,
                                  0.31539156525252005, -1.0925484305920792,
                                  0.5462742152960396};
inline constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,
                                  -0.4570457994644658, 0.3731763325901154,
                                  -0.4570457994644658, 1.445305721320277,
                                  -0.5900435899266435};

inline constexpr int basis_count(int degree) {
  return (degree + 1) * (degree + 1);
}

// -1 when count is not a valid (L+1)^2 with L <= kMaxDegree.
inline int degree_for_count(int count) {
  for (int deg = 0; deg <= kMaxDegree; ++deg)
    if (basis_count(deg) == count) return deg;
  return -1;
}

// Evaluates Y_k(dir) for all k of the given degree. dir must be unit length.
inline void eval_basis(int degree, const Vec3& dir, double* out) {
  const double x = dir.x(), y = dir.y(), z = dir.z();
  out[0] = kC0;
  if (degree < 1) return;
  out[1] = -kC1 * y;
  out[2] = kC1 * z;
  out[3] = -kC1 * x;
  if (degree < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  const double xy = x * y, yz = y * z, xz = x * z;
  out[4] = kC2[0] * xy;
  out[5] = kC2[1] * yz;
  out[6] = kC2[2] * (2.0 * zz - xx - yy);
  out[7] = kC2[3] * xz;
  out[8] = kC2[4] * (xx - yy);
  if (degree < 3) return;
  out[9] = kC3[0] * y * (3.0 * xx - yy);
  out[10] = kC3[1] * xy * z;
  out[11] = kC3[2] * y * (4.0 * zz - xx - yy);
  out[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  out[13] = kC3[4] * x * (4.0 * zz - xx - yy);
  out[14] = kC3[5] * z * (xx - yy);
  out[15] = kC3[6] * x * (xx - 3.0 * yy);
}

// Basis values plus dY_k/d(dir) as polynomial derivatives in the components.
// Callers chain through the unit-normalization Jacobian themselves.
inline void eval_basis_grad(int degree, const Vec3& dir, double* out,
                            Vec3* dout) {
  const double x = dir.x(), y = dir.y(), z = dir.z();
  eval_basis(degree, dir, out);
  dout[0] = Vec3::Zero();
  if (degree < 1) return;
  dout[1] = Vec3(0.0, -kC1, 0.0);
  dout[2] = Vec3(0.0, 0.0, kC1);
  dout[3] = Vec3(-kC1, 0.0, 0.0);
  if (degree < 2) return;
  dout[4] = kC2[0] * Vec3(y, x, 0.0);
  dout[5] = kC2[1] * Vec3(0.0, z, y);
  dout[6] = kC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
  dout[7] = kC2[3] * Vec3(z, 0.0, x);
  dout[8] = kC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
  if (degree < 3) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  dout[9] = kC3[0] * Vec3(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
  dout[10] = kC3[1] * Vec3(y * z, x * z, x * y);
  dout[11] = kC3[2] * Vec3(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
  dout[12] = kC3[3] * Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
  dout[13] = kC3[4] * Vec3(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
  dout[14] = kC3[5] * Vec3(2.0 * x * z, -2.0 * y * z, xx - yy);
  dout[15] = kC3[6] * Vec3(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
}

}  // namespace uwsplat::sh
