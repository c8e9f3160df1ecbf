#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "uwsplat/gaussian_cloud.hpp"

namespace uwsplat {

// Gradient arrays congruent with a GaussianCloud plus the nine medium
// coefficients. screen_grads / visibility carry the per-view screen-space
// statistics consumed by adaptive density control.
struct ParamGrads {
  std::vector<double> d_positions;       // N * 3
  std::vector<double> d_log_scales;      // N * 3
  std::vector<double> d_rotations;       // N * 4
  std::vector<double> d_sh;              // N * K * 3
  std::vector<double> d_opacity_logits;  // N
  std::vector<double> d_semantic;        // N * kSemanticDim
  std::array<double, 9> d_medium{};
  std::vector<double> screen_grads;      // N * 2, d(loss)/d(pixel mean)
  std::vector<std::uint8_t> visibility;  // N, 1 if the view rendered it

  void resize(std::size_t n, std::size_t sh_count) {
    d_positions.assign(n * 3, 0.0);
    d_log_scales.assign(n * 3, 0.0);
    d_rotations.assign(n * 4, 0.0);
    d_sh.assign(n * sh_count * 3, 0.0);
    d_opacity_logits.assign(n, 0.0);
    d_semantic.assign(n * kSemanticDim, 0.0);
    d_medium.fill(0.0);
    screen_grads.assign(n * 2, 0.0);
    visibility.assign(n, 0);
  }

  void match(const GaussianCloud& cloud) { resize(cloud.size(), cloud.sh_count()); }

  void scale_all(double s) {
    for (double& g : d_positions) g *= s;
    for (double& g : d_log_scales) g *= s;
    for (double& g : d_rotations) g *= s;
    for (double& g : d_sh) g *= s;
    for (double& g : d_opacity_logits) g *= s;
    for (double& g : d_semantic) g *= s;
    for (double& g : d_medium) g *= s;
    for (double& g : screen_grads) g *= s;
  }

  void add(const ParamGrads& other) {
    for (std::size_t i = 0; i < d_positions.size(); ++i) d_positions[i] += other.d_positions[i];
    for (std::size_t i = 0; i < d_log_scales.size(); ++i) d_log_scales[i] += other.d_log_scales[i];
    for (std::size_t i = 0; i < d_rotations.size(); ++i) d_rotations[i] += other.d_rotations[i];
    for (std::size_t i = 0; i < d_sh.size(); ++i) d_sh[i] += other.d_sh[i];
    for (std::size_t i = 0; i < d_opacity_logits.size(); ++i) d_opacity_logits[i] += other.d_opacity_logits[i];
    for (std::size_t i = 0; i < d_semantic.size(); ++i) d_semantic[i] += other.d_semantic[i];
    for (std::size_t i = 0; i < 9; ++i) d_medium[i] += other.d_medium[i];
    for (std::size_t i = 0; i < screen_grads.size(); ++i) screen_grads[i] += other.screen_grads[i];
    for (std::size_t i = 0; i < visibility.size(); ++i)
      visibility[i] = visibility[i] | other.visibility[i];
  }
};

}  // namespace uwsplat
