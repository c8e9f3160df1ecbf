#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "uwsplat/camera.hpp"
#include "uwsplat/common.hpp"
#include "uwsplat/gaussian_cloud.hpp"
#include "uwsplat/image.hpp"
#include "uwsplat/projection.hpp"

namespace uwsplat {

struct RasterOptions {
  double near_plane = kNearPlane;
  int tile_size = 16;
  double alpha_clamp = 0.99;
  double transmittance_min = 1e-4;
  bool early_termination = true;
  int threads = 0;  // 0 = default_thread_count()
};

struct RenderOutput {
  int height = 0, width = 0;
  Image color;                    // H x W x 3, clean radiance (pre-medium)
  Image depth;                    // H x W x 1, alpha-normalized camera z
  Image alpha;                    // H x W x 1, accumulated opacity
  std::vector<int> contrib_count; // H x W blended contributions per pixel
};

struct PreparedGaussian {
  std::uint32_t index = 0;  // original cloud index
  Vec2 mean2d = Vec2::Zero();
  double conic[3] = {0, 0, 0};
  double cov2d[3] = {0, 0, 0};
  double radius = 0.0;
  double z = 0.0;
  double opacity = 0.0;  // sigmoid(opacity_logit)
  Vec3 color = Vec3::Zero();
  Vec3 p_cam = Vec3::Zero();
  std::array<bool, 3> color_clamped = {false, false, false};
};

// Projection results plus the per-tile work lists the compositor consumes.
// prepared is in canonical blend order: ascending z, ties by original index.
struct RasterWorkspace {
  int width = 0, height = 0;
  int tile_size = 16;
  int tiles_x = 0, tiles_y = 0;
  std::vector<PreparedGaussian> prepared;
  std::vector<std::vector<std::uint32_t>> tile_bins;  // indices into prepared
};

inline RasterWorkspace prepare_raster(const GaussianCloud& cloud,
                                      const Camera& camera,
                                      const RasterOptions& opts = {}) {
  camera.validate();
  RasterWorkspace ws;
  ws.width = camera.width;
  ws.height = camera.height;
  ws.tile_size = opts.tile_size;
  ws.tiles_x = (camera.width + opts.tile_size - 1) / opts.tile_size;
  ws.tiles_y = (camera.height + opts.tile_size - 1) / opts.tile_size;

  const std::size_t n = cloud.size();
  const Vec3 cam_center = camera.center();
  std::vector<PreparedGaussian> all(n);
  std::vector<std::uint8_t> keep(n, 0);
  parallel_for(
      n,
      [&](std::size_t i) {
        const Mat3 cov3d = build_covariance(cloud.log_scale(i), cloud.rotation(i));
        const ProjectedGaussian proj =
            project_gaussian(cloud.position(i), cov3d, camera, opts.near_plane);
        if (proj.culled) return;
        PreparedGaussian& g = all[i];
        g.index = static_cast<std::uint32_t>(i);
        g.mean2d = proj.mean2d;
        for (int k = 0; k < 3; ++k) g.conic[k] = proj.conic[k];
        for (int k = 0; k < 3; ++k) g.cov2d[k] = proj.cov2d[k];
        g.radius = proj.radius;
        g.z = proj.z;
        g.opacity = cloud.opacity(i);
        g.p_cam = camera.to_camera(cloud.position(i));
        const Vec3 dir = (cloud.position(i) - cam_center).normalized();
        Vec3 raw = Vec3::Constant(0.5);
        double basis[16];
        sh::eval_basis(cloud.sh_degree, dir, basis);
        const double* coeffs = cloud.sh(i);
        for (int k = 0; k < cloud.sh_count(); ++k)
          for (int c = 0; c < 3; ++c) raw[c] += coeffs[k * 3 + c] * basis[k];
        for (int c = 0; c < 3; ++c) g.color_clamped[c] = raw[c] < 0.0;
        g.color = raw.cwiseMax(0.0);
        keep[i] = 1;
      },
      opts.threads);

  ws.prepared.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) ws.prepared.push_back(all[i]);
  std::sort(ws.prepared.begin(), ws.prepared.end(),
            [](const PreparedGaussian& a, const PreparedGaussian& b) {
              if (a.z != b.z) return a.z < b.z;
              return a.index < b.index;
            });

  ws.tile_bins.assign(static_cast<std::size_t>(ws.tiles_x) * ws.tiles_y, {});
  for (std::uint32_t pi = 0; pi < ws.prepared.size(); ++pi) {
    const PreparedGaussian& g = ws.prepared[pi];
    const double r = g.radius;
    const int tx0 = std::max(0, static_cast<int>(std::floor((g.mean2d.x() - r) / opts.tile_size)));
    const int tx1 = std::min(ws.tiles_x - 1, static_cast<int>(std::floor((g.mean2d.x() + r) / opts.tile_size)));
    const int ty0 = std::max(0, static_cast<int>(std::floor((g.mean2d.y() - r) / opts.tile_size)));
    const int ty1 = std::min(ws.tiles_y - 1, static_cast<int>(std::floor((g.mean2d.y() + r) / opts.tile_size)));
    for (int ty = ty0; ty <= ty1; ++ty) {
      for (int tx = tx0; tx <= tx1; ++tx) {
        // circle-rectangle overlap in continuous pixel coordinates
        const double x0 = tx * opts.tile_size;
        const double x1 = std::min<double>(ws.width, x0 + opts.tile_size);
        const double y0 = ty * opts.tile_size;
        const double y1 = std::min<double>(ws.height, y0 + opts.tile_size);
        const double dx = g.mean2d.x() - std::clamp(g.mean2d.x(), x0, x1);
        const double dy = g.mean2d.y() - std::clamp(g.mean2d.y(), y0, y1);
        if (dx * dx + dy * dy <= r * r)
          ws.tile_bins[static_cast<std::size_t>(ty) * ws.tiles_x + tx].push_back(pi);
      }
    }
  }
  return ws;
}

// Front-to-back alpha blend over the prepared workspace. Per pixel, a
// Gaussian contributes iff the sample point lies within its footprint
// radius; blending stops once transmittance drops below the cutoff (when
// early termination is on). Empty pixels keep color 0, depth 0, alpha 0.
inline RenderOutput rasterize_workspace(const RasterWorkspace& ws,
                                        const RasterOptions& opts = {}) {
  RenderOutput out;
  out.height = ws.height;
  out.width = ws.width;
  out.color = Image(ws.height, ws.width, 3);
  out.depth = Image(ws.height, ws.width, 1);
  out.alpha = Image(ws.height, ws.width, 1);
  out.contrib_count.assign(static_cast<std::size_t>(ws.height) * ws.width, 0);

  parallel_for(
      ws.tile_bins.size(),
      [&](std::size_t tile) {
        const auto& bin = ws.tile_bins[tile];
        if (bin.empty()) return;
        const int tx = static_cast<int>(tile) % ws.tiles_x;
        const int ty = static_cast<int>(tile) / ws.tiles_x;
        const int x_end = std::min(ws.width, (tx + 1) * ws.tile_size);
        const int y_end = std::min(ws.height, (ty + 1) * ws.tile_size);
        for (int y = ty * ws.tile_size; y < y_end; ++y) {
          for (int x = tx * ws.tile_size; x < x_end; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            double transmittance = 1.0, alpha_accum = 0.0, depth_accum = 0.0;
            Vec3 color_accum = Vec3::Zero();
            int count = 0;
            for (const std::uint32_t pi : bin) {
              const PreparedGaussian& g = ws.prepared[pi];
              if (!inside_radius(g, px, py)) continue;
              const double w = gaussian_weight_at(g, px, py);
              const double a = std::min(opts.alpha_clamp, g.opacity * w);
              const double ta = transmittance * a;
              color_accum += ta * g.color;
              depth_accum += ta * g.z;
              alpha_accum += ta;
              ++count;
              transmittance *= 1.0 - a;
              if (opts.early_termination &&
                  transmittance < opts.transmittance_min)
                break;
            }
            for (int c = 0; c < 3; ++c) out.color.at(y, x, c) = color_accum[c];
            out.depth.at(y, x, 0) = depth_accum / std::max(alpha_accum, 1e-6);
            out.alpha.at(y, x, 0) = alpha_accum;
            out.contrib_count[static_cast<std::size_t>(y) * ws.width + x] = count;
          }
        }
      },
      opts.threads);
  return out;
}

inline RenderOutput rasterize(const GaussianCloud& cloud, const Camera& camera,
                              const RasterOptions& opts = {}) {
  return rasterize_workspace(prepare_raster(cloud, camera, opts), opts);
}

}  // namespace uwsplat
