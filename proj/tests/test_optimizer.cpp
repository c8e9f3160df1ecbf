#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "uwsplat/grads.hpp"
#include "uwsplat/optimizer.hpp"

using namespace uwsplat;

namespace {

GaussianCloud unit_cloud(std::size_t n, int sh_degree = 0) {
  GaussianCloud cloud;
  cloud.sh_degree = sh_degree;
  cloud.resize(n);
  for (std::size_t i = 0; i < n; ++i) cloud.set_rotation(i, Vec4(1, 0, 0, 0));
  return cloud;
}

}  // namespace

TEST(ParamGroups, NamesRoundTrip) {
  for (int g = 0; g < kNumParamGroups; ++g) {
    const ParamGroup group = static_cast<ParamGroup>(g);
    EXPECT_EQ(param_group_from_name(param_group_name(group)), group);
  }
  EXPECT_THROW(param_group_from_name("bogus"), Error);
}

TEST(Adam, ZeroGradientLeavesParamsUntouched) {
  GaussianCloud cloud = unit_cloud(3);
  cloud.set_position(1, Vec3(0.5, -0.25, 2.0));
  const GaussianCloud before = cloud;
  MediumParams medium;
  const MediumParams medium_before = medium;
  OptimizerState state;
  state.init(cloud);
  ParamGrads grads;
  grads.match(cloud);

  AdamConfig cfg;
  adam_step(cloud, medium, grads, state, cfg, FreezeMask::none(), 1e-3);

  EXPECT_EQ(state.step_count, 1);
  EXPECT_EQ(cloud.positions, before.positions);
  EXPECT_EQ(cloud.log_scales, before.log_scales);
  EXPECT_EQ(cloud.rotations, before.rotations);
  EXPECT_EQ(cloud.sh_coeffs, before.sh_coeffs);
  EXPECT_EQ(cloud.opacity_logits, before.opacity_logits);
  EXPECT_EQ(medium.pack(), medium_before.pack());
}

TEST(Adam, FirstStepMovesByLearningRate) {
  GaussianCloud cloud = unit_cloud(1);
  MediumParams medium;
  OptimizerState state;
  state.init(cloud);
  ParamGrads grads;
  grads.match(cloud);
  grads.d_opacity_logits[0] = 1.0;

  AdamConfig cfg;
  cfg.lr_opacity = 0.1;
  adam_step(cloud, medium, grads, state, cfg, FreezeMask::none(), 1e-3);
  EXPECT_NEAR(cloud.opacity_logits[0], -0.1, 1e-12);
}

TEST(Adam, MatchesHandRolledTraceOnQuadratic) {
  // Minimize f(x) = x^2 / 2 (gradient x) through the opacity slot and mirror
  // the textbook update rule step by step.
  GaussianCloud cloud = unit_cloud(1);
  cloud.opacity_logits[0] = 0.7;
  MediumParams medium;
  OptimizerState state;
  state.init(cloud);
  AdamConfig cfg;
  cfg.lr_opacity = 0.05;

  double x = 0.7, m = 0.0, v = 0.0;
  for (int step = 1; step <= 5; ++step) {
    ParamGrads grads;
    grads.match(cloud);
    grads.d_opacity_logits[0] = cloud.opacity_logits[0];
    adam_step(cloud, medium, grads, state, cfg, FreezeMask::none(), 1e-3);

    const double g = x;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double m_hat = m / (1.0 - std::pow(0.9, step));
    const double v_hat = v / (1.0 - std::pow(0.999, step));
    x -= 0.05 * m_hat / (std::sqrt(v_hat) + 1e-15);
    ASSERT_NEAR(cloud.opacity_logits[0], x, 1e-15) << "step " << step;
  }
  EXPECT_LT(std::abs(cloud.opacity_logits[0]), 0.7);
}

TEST(Adam, PositionRateDecaysExponentially) {
  AdamConfig cfg;
  EXPECT_NEAR(position_learning_rate(cfg, 0, 1000), 1.6e-4, 1e-18);
  EXPECT_NEAR(position_learning_rate(cfg, 1000, 1000), 1.6e-6, 1e-18);
  EXPECT_NEAR(position_learning_rate(cfg, 500, 1000),
              1.6e-4 * std::sqrt(1.6e-6 / 1.6e-4), 1e-15);
  EXPECT_GT(position_learning_rate(cfg, 250, 1000),
            position_learning_rate(cfg, 750, 1000));
}

TEST(Adam, FrozenGroupsKeepBytesAndMoments) {
  GaussianCloud cloud = unit_cloud(2);
  cloud.set_position(0, Vec3(0.1, 0.2, 0.3));
  cloud.set_log_scale(1, Vec3(-0.5, -0.1, -0.9));
  MediumParams medium;
  OptimizerState state;
  state.init(cloud);
  // Seed nonzero moments to catch any unwanted moment decay of frozen groups.
  for (double& v : state.m_positions) v = 0.25;
  for (double& v : state.v_rotations) v = 0.5;

  ParamGrads grads;
  grads.match(cloud);
  for (double& v : grads.d_positions) v = 1.0;
  for (double& v : grads.d_log_scales) v = 1.0;
  for (double& v : grads.d_rotations) v = 1.0;
  for (double& v : grads.d_semantic) v = 1.0;
  for (double& v : grads.d_sh) v = 1.0;
  for (double& v : grads.d_opacity_logits) v = 1.0;
  grads.d_medium.fill(1.0);

  const GaussianCloud before = cloud;
  const OptimizerState state_before = state;
  AdamConfig cfg;
  adam_step(cloud, medium, grads, state, cfg, FreezeMask::geometry_and_semantic(),
            1e-3);

  EXPECT_EQ(cloud.positions, before.positions);
  EXPECT_EQ(cloud.log_scales, before.log_scales);
  EXPECT_EQ(cloud.rotations, before.rotations);
  EXPECT_EQ(cloud.semantic_features, before.semantic_features);
  EXPECT_EQ(state.m_positions, state_before.m_positions);
  EXPECT_EQ(state.v_positions, state_before.v_positions);
  EXPECT_EQ(state.m_rotations, state_before.m_rotations);
  EXPECT_EQ(state.v_rotations, state_before.v_rotations);
  EXPECT_EQ(state.m_semantic, state_before.m_semantic);

  EXPECT_NE(cloud.sh_coeffs, before.sh_coeffs);
  EXPECT_NE(cloud.opacity_logits, before.opacity_logits);
  EXPECT_NE(medium.pack(), MediumParams().pack());
  EXPECT_EQ(state.step_count, 1);
}

TEST(Adam, RejectsNonFiniteUpdates) {
  GaussianCloud cloud = unit_cloud(1);
  MediumParams medium;
  OptimizerState state;
  state.init(cloud);
  ParamGrads grads;
  grads.match(cloud);
  grads.d_positions[0] = std::numeric_limits<double>::quiet_NaN();
  AdamConfig cfg;
  try {
    adam_step(cloud, medium, grads, state, cfg, FreezeMask::none(), 1e-3);
    FAIL() << "NaN gradient must be rejected";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("position"), std::string::npos);
  }
}

TEST(Stage, ScheduleBoundaries) {
  StageConfig cfg;
  cfg.total_iterations = 20000;
  cfg.stage2_fraction = 0.6;
  EXPECT_EQ(stage_boundary_iteration(cfg), 12000);

  const StageState s1 = stage_schedule(cfg, 11999);
  EXPECT_EQ(s1.stage, 1);
  EXPECT_EQ(s1.l1_weight, 0.8);
  EXPECT_EQ(s1.l2_weight, 0.0);
  EXPECT_FALSE(s1.freeze.any());
  EXPECT_TRUE(s1.densify_allowed);

  const StageState s2 = stage_schedule(cfg, 12000);
  EXPECT_EQ(s2.stage, 2);
  EXPECT_EQ(s2.l1_weight, 0.4);
  EXPECT_EQ(s2.l2_weight, 0.5);
  EXPECT_TRUE(s2.freeze.is_frozen(ParamGroup::Position));
  EXPECT_TRUE(s2.freeze.is_frozen(ParamGroup::Scale));
  EXPECT_TRUE(s2.freeze.is_frozen(ParamGroup::Rotation));
  EXPECT_TRUE(s2.freeze.is_frozen(ParamGroup::Semantic));
  EXPECT_FALSE(s2.freeze.is_frozen(ParamGroup::Sh));
  EXPECT_FALSE(s2.freeze.is_frozen(ParamGroup::Opacity));
  EXPECT_FALSE(s2.freeze.is_frozen(ParamGroup::Medium));
  EXPECT_FALSE(s2.densify_allowed);

  StageConfig never;
  never.total_iterations = 20000;
  never.stage2_fraction = 1.0;
  EXPECT_EQ(stage_schedule(never, 19999).stage, 1);

  EXPECT_THROW(stage_schedule(cfg, -1), Error);
  EXPECT_THROW(stage_schedule(cfg, 20000), Error);
}

TEST(Densify, AccumulateUsesNdcScaling) {
  DensifyStats stats;
  stats.reset(2);
  ParamGrads grads;
  grads.resize(2, 1);
  grads.visibility = {1, 0};
  grads.screen_grads = {3e-4, 4e-4, 9.0, 9.0};
  stats.accumulate(grads, 100, 50);
  // gx = 3e-4 * 50 = 0.015, gy = 4e-4 * 25 = 0.01, norm = 0.018027...
  EXPECT_NEAR(stats.grad_accum[0], std::sqrt(0.015 * 0.015 + 0.01 * 0.01), 1e-15);
  EXPECT_EQ(stats.view_count[0], 1);
  EXPECT_EQ(stats.grad_accum[1], 0.0);  // invisible: untouched
  EXPECT_EQ(stats.view_count[1], 0);
}

TEST(Densify, CloneSplitPruneRules) {
  // Primitive 0: high gradient, small -> cloned.
  // Primitive 1: high gradient, large -> split into two children.
  // Primitive 2: transparent -> pruned.
  // Primitive 3: quiet -> kept as-is.
  GaussianCloud cloud = unit_cloud(4, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    cloud.set_position(i, Vec3(0.1 * static_cast<double>(i), 0, 0));
    cloud.opacity_logits[i] = 1.0;
    for (int d = 0; d < kSemanticDim; ++d)
      cloud.semantic_features[i * kSemanticDim + d] = static_cast<double>(i) + 0.5;
  }
  cloud.set_log_scale(0, Vec3::Constant(std::log(0.005)));
  cloud.set_log_scale(1, Vec3(std::log(0.5), std::log(0.3), std::log(0.2)));
  cloud.set_log_scale(2, Vec3::Constant(std::log(0.01)));
  cloud.set_log_scale(3, Vec3::Constant(std::log(0.01)));
  cloud.opacity_logits[2] = logit(0.004);  // below the 5e-3 floor

  DensifyStats stats;
  stats.reset(4);
  stats.grad_accum = {1e-3, 1e-3, 0.0, 1e-5};
  stats.view_count = {2, 2, 0, 2};

  DensifyConfig cfg;  // threshold 2e-4, percent_dense 0.01
  Rng rng(77);
  const double extent = 2.0;  // split when max scale > 0.02
  const GaussianCloud before = cloud;
  const DensifyReport report = densify_and_prune(cloud, stats, cfg, extent, rng);

  EXPECT_EQ(report.cloned, 1u);
  EXPECT_EQ(report.split, 1u);
  EXPECT_EQ(report.pruned, 1u);
  EXPECT_EQ(report.size_after, 5u);  // 4 - split(1) - prune(1) + 2 children + clone
  ASSERT_EQ(report.remap.size(), 5u);
  EXPECT_EQ(report.remap[0], 0);    // original 0 kept
  EXPECT_EQ(report.remap[1], -1);   // its clone
  EXPECT_EQ(report.remap[2], -1);   // split child a
  EXPECT_EQ(report.remap[3], -1);   // split child b
  EXPECT_EQ(report.remap[4], 3);    // quiet survivor

  // Clone is byte-identical to its source.
  for (int d = 0; d < 3; ++d) {
    EXPECT_EQ(cloud.positions[1 * 3 + d], before.positions[0 * 3 + d]);
    EXPECT_EQ(cloud.log_scales[1 * 3 + d], before.log_scales[0 * 3 + d]);
  }
  // Split children carry reduced scales and the parent's semantic feature.
  for (const std::size_t child : {2u, 3u}) {
    for (int d = 0; d < 3; ++d)
      EXPECT_NEAR(cloud.log_scales[child * 3 + d],
                  before.log_scales[1 * 3 + d] - std::log(1.6), 1e-14);
    for (int d = 0; d < kSemanticDim; ++d)
      EXPECT_EQ(cloud.semantic_features[child * kSemanticDim + d], 1.5);
    EXPECT_EQ(cloud.opacity_logits[child], before.opacity_logits[1]);
  }
  // Children differ from each other in position (sampled).
  EXPECT_NE(cloud.positions[2 * 3], cloud.positions[3 * 3]);
  // Stats reset to the new size.
  EXPECT_EQ(stats.grad_accum.size(), 5u);
  EXPECT_EQ(stats.view_count.size(), 5u);
}

TEST(Densify, NoActivityBelowThresholds) {
  GaussianCloud cloud = unit_cloud(3, 0);
  for (std::size_t i = 0; i < 3; ++i) {
    cloud.opacity_logits[i] = 0.5;
    cloud.set_log_scale(i, Vec3::Constant(std::log(0.05)));
  }
  DensifyStats stats;
  stats.reset(3);
  stats.grad_accum = {1e-5, 1e-5, 1e-5};
  stats.view_count = {1, 1, 1};
  DensifyConfig cfg;
  Rng rng(78);
  const GaussianCloud before = cloud;
  const DensifyReport report = densify_and_prune(cloud, stats, cfg, 1.0, rng);
  EXPECT_EQ(report.cloned + report.split + report.pruned, 0u);
  EXPECT_EQ(report.size_after, 3u);
  EXPECT_EQ(cloud.positions, before.positions);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(report.remap[i], static_cast<std::int64_t>(i));
}

TEST(Densify, CapStopsGrowthButNotPruning) {
  GaussianCloud cloud = unit_cloud(3, 0);
  for (std::size_t i = 0; i < 3; ++i) {
    cloud.opacity_logits[i] = 1.0;
    cloud.set_log_scale(i, Vec3::Constant(std::log(0.001)));
  }
  cloud.opacity_logits[2] = logit(1e-3);
  DensifyStats stats;
  stats.reset(3);
  stats.grad_accum = {1.0, 1.0, 1.0};
  stats.view_count = {1, 1, 1};
  DensifyConfig cfg;
  cfg.max_primitives = 3;
  Rng rng(79);
  const DensifyReport report = densify_and_prune(cloud, stats, cfg, 1.0, rng);
  EXPECT_EQ(report.cloned, 0u);
  EXPECT_EQ(report.split, 0u);
  EXPECT_EQ(report.pruned, 1u);
  EXPECT_EQ(report.size_after, 2u);
}

TEST(Densify, RemapCarriesMoments) {
  OptimizerState state;
  state.init(3, 1);
  state.step_count = 42;
  for (std::size_t i = 0; i < 3; ++i) {
    state.m_opacity[i] = 10.0 + static_cast<double>(i);
    state.v_opacity[i] = 20.0 + static_cast<double>(i);
    for (int d = 0; d < 3; ++d) state.m_positions[i * 3 + d] = 100.0 * i + d;
  }
  state.m_medium.fill(7.0);

  const std::vector<std::int64_t> remap = {2, -1, 0};
  remap_optimizer_state(state, remap, 1);

  EXPECT_EQ(state.step_count, 42);
  EXPECT_EQ(state.m_opacity.size(), 3u);
  EXPECT_EQ(state.m_opacity[0], 12.0);
  EXPECT_EQ(state.m_opacity[1], 0.0);
  EXPECT_EQ(state.m_opacity[2], 10.0);
  EXPECT_EQ(state.v_opacity[0], 22.0);
  for (int d = 0; d < 3; ++d) {
    EXPECT_EQ(state.m_positions[0 * 3 + d], 200.0 + d);
    EXPECT_EQ(state.m_positions[1 * 3 + d], 0.0);
    EXPECT_EQ(state.m_positions[2 * 3 + d], 0.0 + d);
  }
  for (double v : state.m_medium) EXPECT_EQ(v, 7.0);
}
