#pragma once

#include "uwsplat/common.hpp"

namespace uwsplat {

// Pinhole camera. world_to_camera maps world points into a frame whose +z
// axis is the viewing direction; pixel sample points sit at (ix+0.5, iy+0.5).
struct Camera {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 center() const { return -(rotation.transpose() * translation); }

  void validate() const {
    require(width > 0 && height > 0, "Camera: non-positive resolution");
    require(fx > 0.0 && fy > 0.0, "Camera: non-positive focal length");
    const Mat3 err = rotation * rotation.transpose() - Mat3::Identity();
    require(err.cwiseAbs().maxCoeff() < 1e-6,
            "Camera: rotation is not orthonormal");
  }
};

// Camera on a ring of the given radius, looking at `target` with +y-ish up.
inline Camera make_lookat_camera(const Vec3& eye, const Vec3& target, double fx,
                                 double fy, int width, int height) {
  Vec3 forward = (target - eye).normalized();
  Vec3 up(0.0, 1.0, 0.0);
  if (std::abs(forward.dot(up)) > 0.99) up = Vec3(1.0, 0.0, 0.0);
  const Vec3 right = up.cross(forward).normalized();
  const Vec3 down = forward.cross(right);  // completes right-handed x,y,z=fwd
  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = width * 0.5;
  cam.cy = height * 0.5;
  cam.width = width;
  cam.height = height;
  cam.rotation.row(0) = right;
  cam.rotation.row(1) = down;
  cam.rotation.row(2) = forward;
  cam.translation = -(cam.rotation * eye);
  return cam;
}

}  // namespace uwsplat
