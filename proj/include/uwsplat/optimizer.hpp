#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uwsplat/common.hpp"
#include "uwsplat/gaussian_cloud.hpp"
#include "uwsplat/grads.hpp"
#include "uwsplat/medium.hpp"

namespace uwsplat {

enum class ParamGroup : int {
  Position = 0,
  Scale,
  Rotation,
  Sh,
  Opacity,
  Semantic,
  Medium,
};

inline constexpr int kNumParamGroups = 7;

inline const char* param_group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Position: return "position";
    case ParamGroup::Scale: return "scale";
    case ParamGroup::Rotation: return "rotation";
    case ParamGroup::Sh: return "sh";
    case ParamGroup::Opacity: return "opacity";
    case ParamGroup::Semantic: return "semantic";
    case ParamGroup::Medium: return "medium";
  }
  throw Error("param_group_name: invalid group");
}

inline ParamGroup param_group_from_name(const std::string& name) {
  for (int i = 0; i < kNumParamGroups; ++i) {
    const auto g = static_cast<ParamGroup>(i);
    if (name == param_group_name(g)) return g;
  }
  throw Error("unknown parameter group '" + name + "'");
}

struct FreezeMask {
  std::array<bool, kNumParamGroups> frozen{};

  bool is_frozen(ParamGroup g) const { return frozen[static_cast<int>(g)]; }
  void freeze(ParamGroup g) { frozen[static_cast<int>(g)] = true; }
  bool any() const {
    for (bool b : frozen)
      if (b) return true;
    return false;
  }

  static FreezeMask none() { return FreezeMask{}; }

  // Geometry and semantics held fixed while appearance keeps training.
  static FreezeMask geometry_and_semantic() {
    FreezeMask m;
    m.freeze(ParamGroup::Position);
    m.freeze(ParamGroup::Rotation);
    m.freeze(ParamGroup::Scale);
    m.freeze(ParamGroup::Semantic);
    return m;
  }
};

// Zeroes gradient entries of frozen groups in place (mask contract: frozen
// groups report exactly zero even where the loss is sensitive).
inline void apply_freeze_mask(ParamGrads& grads, const FreezeMask& mask) {
  auto zero = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
  if (mask.is_frozen(ParamGroup::Position)) zero(grads.d_positions);
  if (mask.is_frozen(ParamGroup::Scale)) zero(grads.d_log_scales);
  if (mask.is_frozen(ParamGroup::Rotation)) zero(grads.d_rotations);
  if (mask.is_frozen(ParamGroup::Sh)) zero(grads.d_sh);
  if (mask.is_frozen(ParamGroup::Opacity)) zero(grads.d_opacity_logits);
  if (mask.is_frozen(ParamGroup::Semantic)) zero(grads.d_semantic);
  if (mask.is_frozen(ParamGroup::Medium)) grads.d_medium.fill(0.0);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-15;
  double lr_position_init = 1.6e-4;
  double lr_position_final = 1.6e-6;
  double lr_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_sh = 2.5e-3;
  double lr_opacity = 5e-2;
  double lr_semantic = 2.5e-3;
  double lr_medium = 1e-3;
};

// Exponential interpolation from the initial to the final position rate over
// the full training budget.
inline double position_learning_rate(const AdamConfig& cfg, int iteration,
                                     int total_iterations) {
  if (total_iterations <= 1) return cfg.lr_position_init;
  const double t = std::clamp(
      static_cast<double>(iteration) / static_cast<double>(total_iterations), 0.0, 1.0);
  return cfg.lr_position_init *
         std::pow(cfg.lr_position_final / cfg.lr_position_init, t);
}

struct OptimizerState {
  std::int64_t step_count = 0;
  std::vector<double> m_positions, v_positions;
  std::vector<double> m_log_scales, v_log_scales;
  std::vector<double> m_rotations, v_rotations;
  std::vector<double> m_sh, v_sh;
  std::vector<double> m_opacity, v_opacity;
  std::vector<double> m_semantic, v_semantic;
  std::array<double, 9> m_medium{}, v_medium{};

  void init(std::size_t n, std::size_t sh_count) {
    step_count = 0;
    m_positions.assign(n * 3, 0.0);
    v_positions.assign(n * 3, 0.0);
    m_log_scales.assign(n * 3, 0.0);
    v_log_scales.assign(n * 3, 0.0);
    m_rotations.assign(n * 4, 0.0);
    v_rotations.assign(n * 4, 0.0);
    m_sh.assign(n * sh_count * 3, 0.0);
    v_sh.assign(n * sh_count * 3, 0.0);
    m_opacity.assign(n, 0.0);
    v_opacity.assign(n, 0.0);
    m_semantic.assign(n * kSemanticDim, 0.0);
    v_semantic.assign(n * kSemanticDim, 0.0);
    m_medium.fill(0.0);
    v_medium.fill(0.0);
  }

  void init(const GaussianCloud& cloud) { init(cloud.size(), cloud.sh_count()); }
};

namespace detail {

inline void adam_update_span(double* params, const double* grads, double* m,
                             double* v, std::size_t count, double lr,
                             const AdamConfig& cfg, double bias1, double bias2,
                             const char* group) {
  for (std::size_t i = 0; i < count; ++i) {
    const double g = grads[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    const double update = lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    params[i] -= update;
    if (!std::isfinite(params[i]))
      throw Error(std::string("adam_step: non-finite update in group '") + group +
                  "' at index " + std::to_string(i));
  }
}

}  // namespace detail

// One bias-corrected adaptive-moment step over every unfrozen group. Frozen
// groups are untouched, moments included; rotation re-normalization is also
// skipped when rotation is frozen so its bytes stay fixed.
inline void adam_step(GaussianCloud& cloud, MediumParams& medium,
                      const ParamGrads& grads, OptimizerState& state,
                      const AdamConfig& cfg, const FreezeMask& freeze,
                      double position_lr) {
  require(state.m_positions.size() == cloud.size() * 3,
          "adam_step: optimizer state incongruent with cloud");
  require(grads.d_positions.size() == cloud.size() * 3,
          "adam_step: gradients incongruent with cloud");
  ++state.step_count;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));

  if (!freeze.is_frozen(ParamGroup::Position))
    detail::adam_update_span(cloud.positions.data(), grads.d_positions.data(),
                             state.m_positions.data(), state.v_positions.data(),
                             cloud.positions.size(), position_lr, cfg, bias1, bias2,
                             "position");
  if (!freeze.is_frozen(ParamGroup::Scale))
    detail::adam_update_span(cloud.log_scales.data(), grads.d_log_scales.data(),
                             state.m_log_scales.data(), state.v_log_scales.data(),
                             cloud.log_scales.size(), cfg.lr_scale, cfg, bias1, bias2,
                             "scale");
  if (!freeze.is_frozen(ParamGroup::Rotation)) {
    detail::adam_update_span(cloud.rotations.data(), grads.d_rotations.data(),
                             state.m_rotations.data(), state.v_rotations.data(),
                             cloud.rotations.size(), cfg.lr_rotation, cfg, bias1,
                             bias2, "rotation");
    cloud.normalize_rotations();
  }
  if (!freeze.is_frozen(ParamGroup::Sh))
    detail::adam_update_span(cloud.sh_coeffs.data(), grads.d_sh.data(),
                             state.m_sh.data(), state.v_sh.data(),
                             cloud.sh_coeffs.size(), cfg.lr_sh, cfg, bias1, bias2,
                             "sh");
  if (!freeze.is_frozen(ParamGroup::Opacity))
    detail::adam_update_span(cloud.opacity_logits.data(),
                             grads.d_opacity_logits.data(), state.m_opacity.data(),
                             state.v_opacity.data(), cloud.opacity_logits.size(),
                             cfg.lr_opacity, cfg, bias1, bias2, "opacity");
  if (!freeze.is_frozen(ParamGroup::Semantic))
    detail::adam_update_span(cloud.semantic_features.data(), grads.d_semantic.data(),
                             state.m_semantic.data(), state.v_semantic.data(),
                             cloud.semantic_features.size(), cfg.lr_semantic, cfg,
                             bias1, bias2, "semantic");
  if (!freeze.is_frozen(ParamGroup::Medium)) {
    std::array<double, 9> packed = medium.pack();
    detail::adam_update_span(packed.data(), grads.d_medium.data(),
                             state.m_medium.data(), state.v_medium.data(), 9,
                             cfg.lr_medium, cfg, bias1, bias2, "medium");
    medium = MediumParams::unpack(packed);
  }
}

// ---------------------------------------------------------------------------
// Two-stage schedule

struct StageConfig {
  int total_iterations = 20000;
  double stage2_fraction = 0.6;
  double stage1_l1_weight = 0.8;
  double stage1_l2_weight = 0.0;
  double stage2_l1_weight = 0.4;
  double stage2_l2_weight = 0.5;
};

struct StageState {
  int stage = 1;
  double l1_weight = 0.8;
  double l2_weight = 0.0;
  FreezeMask freeze;
  bool densify_allowed = true;
};

inline int stage_boundary_iteration(const StageConfig& cfg) {
  return static_cast<int>(
      std::floor(cfg.stage2_fraction * static_cast<double>(cfg.total_iterations)));
}

inline StageState stage_schedule(const StageConfig& cfg, int iteration) {
  require(iteration >= 0 && iteration < cfg.total_iterations,
          "stage_schedule: iteration out of range");
  StageState st;
  if (iteration < stage_boundary_iteration(cfg)) {
    st.stage = 1;
    st.l1_weight = cfg.stage1_l1_weight;
    st.l2_weight = cfg.stage1_l2_weight;
    st.freeze = FreezeMask::none();
    st.densify_allowed = true;
  } else {
    st.stage = 2;
    st.l1_weight = cfg.stage2_l1_weight;
    st.l2_weight = cfg.stage2_l2_weight;
    st.freeze = FreezeMask::geometry_and_semantic();
    st.densify_allowed = false;
  }
  return st;
}

// ---------------------------------------------------------------------------
// Adaptive density control

struct DensifyConfig {
  double grad_threshold = 2e-4;   // mean screen-space gradient, NDC half-extent units
  double percent_dense = 0.01;    // clone/split size boundary as share of extent
  double min_opacity = 5e-3;
  int interval = 100;
  int start_iteration = 500;
  double split_scale_divisor = 1.6;
  std::size_t max_primitives = 500000;
};

// Per-primitive accumulators between densification rounds.
struct DensifyStats {
  std::vector<double> grad_accum;  // sum of screen-gradient norms
  std::vector<int> view_count;     // number of views that rendered it

  void reset(std::size_t n) {
    grad_accum.assign(n, 0.0);
    view_count.assign(n, 0);
  }

  // Screen gradients arrive in pixel units; convert to NDC half-extent units
  // (multiply by W/2, H/2) before taking the norm.
  void accumulate(const ParamGrads& grads, int width, int height) {
    require(grads.visibility.size() == grad_accum.size(),
            "DensifyStats: gradient size mismatch");
    for (std::size_t i = 0; i < grad_accum.size(); ++i) {
      if (!grads.visibility[i]) continue;
      const double gx = grads.screen_grads[i * 2 + 0] * 0.5 * width;
      const double gy = grads.screen_grads[i * 2 + 1] * 0.5 * height;
      grad_accum[i] += std::sqrt(gx * gx + gy * gy);
      view_count[i] += 1;
    }
  }
};

struct DensifyReport {
  std::size_t cloned = 0;
  std::size_t split = 0;
  std::size_t pruned = 0;
  std::size_t size_after = 0;
  // remap[j] = source index in the old cloud for surviving entry j, or -1 for
  // freshly created primitives (clones and split children).
  std::vector<std::int64_t> remap;
};

namespace detail {

inline void copy_primitive(const GaussianCloud& src, std::size_t i,
                           GaussianCloud& dst) {
  const std::size_t k = src.sh_count();
  for (int d = 0; d < 3; ++d) {
    dst.positions.push_back(src.positions[i * 3 + d]);
    dst.log_scales.push_back(src.log_scales[i * 3 + d]);
  }
  for (int d = 0; d < 4; ++d) dst.rotations.push_back(src.rotations[i * 4 + d]);
  for (std::size_t d = 0; d < k * 3; ++d)
    dst.sh_coeffs.push_back(src.sh_coeffs[i * k * 3 + d]);
  dst.opacity_logits.push_back(src.opacity_logits[i]);
  for (int d = 0; d < kSemanticDim; ++d)
    dst.semantic_features.push_back(src.semantic_features[i * kSemanticDim + d]);
}

}  // namespace detail

// Clone small high-gradient primitives, split large ones into two children
// sampled from the parent distribution (scales divided), prune transparent
// ones. Children inherit the parent's semantic feature. Above max_primitives
// only pruning runs.
inline DensifyReport densify_and_prune(GaussianCloud& cloud, DensifyStats& stats,
                                       const DensifyConfig& cfg,
                                       double scene_extent, Rng& rng) {
  const std::size_t n = cloud.size();
  require(stats.grad_accum.size() == n, "densify_and_prune: stats size mismatch");
  const bool grow = n < cfg.max_primitives;

  GaussianCloud next;
  next.sh_degree = cloud.sh_degree;
  DensifyReport report;

  const std::size_t k = cloud.sh_count();
  next.positions.reserve(n * 3);
  next.log_scales.reserve(n * 3);
  next.rotations.reserve(n * 4);
  next.sh_coeffs.reserve(n * k * 3);
  next.opacity_logits.reserve(n);
  next.semantic_features.reserve(n * kSemanticDim);

  for (std::size_t i = 0; i < n; ++i) {
    const double opacity = sigmoid(cloud.opacity_logits[i]);
    if (opacity < cfg.min_opacity) {
      ++report.pruned;
      continue;
    }
    const double mean_grad =
        stats.view_count[i] > 0 ? stats.grad_accum[i] / stats.view_count[i] : 0.0;
    const bool selected = grow && mean_grad > cfg.grad_threshold;
    const Vec3 ls = cloud.log_scale(i);
    const double max_scale =
        std::exp(std::max(ls[0], std::max(ls[1], ls[2])));

    if (selected && max_scale > cfg.percent_dense * scene_extent) {
      // Split: two children sampled from the parent, scales divided.
      const Mat3 rot = quat_to_rotation(cloud.rotation(i));
      const Vec3 mu = cloud.position(i);
      const Vec3 child_ls = ls.array() - std::log(cfg.split_scale_divisor);
      for (int child = 0; child < 2; ++child) {
        Vec3 local(rng.normal() * std::exp(ls[0]), rng.normal() * std::exp(ls[1]),
                   rng.normal() * std::exp(ls[2]));
        const Vec3 pos = mu + rot * local;
        detail::copy_primitive(cloud, i, next);
        const std::size_t j = next.size() - 1;
        for (int d = 0; d < 3; ++d) {
          next.positions[j * 3 + d] = pos[d];
          next.log_scales[j * 3 + d] = child_ls[d];
        }
        report.remap.push_back(-1);
      }
      ++report.split;
      continue;
    }

    detail::copy_primitive(cloud, i, next);
    report.remap.push_back(static_cast<std::int64_t>(i));

    if (selected) {
      // Clone: verbatim copy alongside the original.
      detail::copy_primitive(cloud, i, next);
      report.remap.push_back(-1);
      ++report.cloned;
    }
  }

  next.validate();
  cloud = std::move(next);
  report.size_after = cloud.size();
  stats.reset(cloud.size());
  return report;
}

// Rebuilds moment arrays after densification: surviving primitives carry
// their moments, fresh ones start at zero. step_count is preserved.
inline void remap_optimizer_state(OptimizerState& state,
                                  const std::vector<std::int64_t>& remap,
                                  std::size_t sh_count) {
  OptimizerState next;
  next.init(remap.size(), sh_count);
  next.step_count = state.step_count;
  next.m_medium = state.m_medium;
  next.v_medium = state.v_medium;
  auto carry = [&](const std::vector<double>& src_m, const std::vector<double>& src_v,
                   std::vector<double>& dst_m, std::vector<double>& dst_v,
                   std::size_t stride) {
    for (std::size_t j = 0; j < remap.size(); ++j) {
      if (remap[j] < 0) continue;
      const std::size_t i = static_cast<std::size_t>(remap[j]);
      for (std::size_t d = 0; d < stride; ++d) {
        dst_m[j * stride + d] = src_m[i * stride + d];
        dst_v[j * stride + d] = src_v[i * stride + d];
      }
    }
  };
  carry(state.m_positions, state.v_positions, next.m_positions, next.v_positions, 3);
  carry(state.m_log_scales, state.v_log_scales, next.m_log_scales, next.v_log_scales, 3);
  carry(state.m_rotations, state.v_rotations, next.m_rotations, next.v_rotations, 4);
  carry(state.m_sh, state.v_sh, next.m_sh, next.v_sh, sh_count * 3);
  carry(state.m_opacity, state.v_opacity, next.m_opacity, next.v_opacity, 1);
  carry(state.m_semantic, state.v_semantic, next.m_semantic, next.v_semantic,
        kSemanticDim);
  state = std::move(next);
}

}  // namespace uwsplat
