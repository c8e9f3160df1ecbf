#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "uwsplat/backward.hpp"
#include "uwsplat/checkpoint.hpp"
#include "uwsplat/common.hpp"
#include "uwsplat/losses.hpp"
#include "uwsplat/metrics.hpp"
#include "uwsplat/optimizer.hpp"
#include "uwsplat/scene.hpp"
#include "uwsplat/semantics.hpp"

namespace uwsplat {

struct TrainConfig {
  std::string scene_dir;
  std::string out_dir;
  int total_iterations = 20000;
  std::uint64_t seed = 1;
  std::uint64_t projector_seed = 424242;
  int sh_degree = 2;
  int log_interval = 50;
  int eval_interval = 0;       // 0 = final evaluation only
  int preview_interval = 0;    // 0 = final previews only
  int checkpoint_interval = 0; // 0 = final checkpoint only
  std::size_t init_random_points = 2000;
  InterpMode interp_mode = InterpMode::Fixed;
  SemanticReduction reduction = SemanticReduction::Sum;
  bool use_semantic = true;   // ablation switch for the alignment term
  bool use_stagewise = true;  // ablation switch for the two-stage schedule
  int medium_warmup_iterations = 0;  // water params frozen before this iteration
  std::string resume;
  StageConfig stage;
  LossWeights weights;
  AdamConfig adam;
  DensifyConfig densify;
  RasterOptions raster;
};

namespace detail {

inline double get_number(const nlohmann::json& j, const char* key, double dflt) {
  if (!j.contains(key)) return dflt;
  require(j[key].is_number(), std::string("config: '") + key + "' must be a number");
  return j[key].get<double>();
}

inline int get_int(const nlohmann::json& j, const char* key, int dflt) {
  if (!j.contains(key)) return dflt;
  require(j[key].is_number_integer(),
          std::string("config: '") + key + "' must be an integer");
  return j[key].get<int>();
}

inline bool get_bool(const nlohmann::json& j, const char* key, bool dflt) {
  if (!j.contains(key)) return dflt;
  require(j[key].is_boolean(), std::string("config: '") + key + "' must be a boolean");
  return j[key].get<bool>();
}

inline std::string get_string(const nlohmann::json& j, const char* key,
                              const std::string& dflt) {
  if (!j.contains(key)) return dflt;
  require(j[key].is_string(), std::string("config: '") + key + "' must be a string");
  return j[key].get<std::string>();
}

}  // namespace detail

inline TrainConfig train_config_from_json(const nlohmann::json& doc) {
  detail::require_keys(
      doc,
      {"scene_dir", "out_dir", "total_iterations", "seed", "projector_seed",
       "sh_degree", "log_interval", "eval_interval", "preview_interval",
       "checkpoint_interval", "init_random_points", "interp_mode",
       "semantic_reduction", "use_semantic", "use_stagewise",
       "medium_warmup_iterations", "resume", "stage", "weights", "adam",
       "densify", "raster"},
      "config");
  TrainConfig cfg;
  cfg.scene_dir = detail::get_string(doc, "scene_dir", "");
  cfg.out_dir = detail::get_string(doc, "out_dir", "");
  cfg.total_iterations = detail::get_int(doc, "total_iterations", cfg.total_iterations);
  require(cfg.total_iterations > 0, "config: total_iterations must be positive");
  if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
  if (doc.contains("projector_seed"))
    cfg.projector_seed = doc["projector_seed"].get<std::uint64_t>();
  cfg.sh_degree = detail::get_int(doc, "sh_degree", cfg.sh_degree);
  require(cfg.sh_degree >= 0 && cfg.sh_degree <= sh::kMaxDegree,
          "config: sh_degree out of range");
  cfg.log_interval = detail::get_int(doc, "log_interval", cfg.log_interval);
  cfg.eval_interval = detail::get_int(doc, "eval_interval", cfg.eval_interval);
  cfg.preview_interval = detail::get_int(doc, "preview_interval", cfg.preview_interval);
  cfg.checkpoint_interval =
      detail::get_int(doc, "checkpoint_interval", cfg.checkpoint_interval);
  cfg.init_random_points = static_cast<std::size_t>(
      detail::get_int(doc, "init_random_points", static_cast<int>(cfg.init_random_points)));
  const std::string interp = detail::get_string(doc, "interp_mode", "fixed");
  require(interp == "fixed" || interp == "learned",
          "config: interp_mode must be 'fixed' or 'learned'");
  cfg.interp_mode = interp == "fixed" ? InterpMode::Fixed : InterpMode::Learned;
  const std::string red = detail::get_string(doc, "semantic_reduction", "sum");
  require(red == "sum" || red == "mean",
          "config: semantic_reduction must be 'sum' or 'mean'");
  cfg.reduction = red == "sum" ? SemanticReduction::Sum : SemanticReduction::Mean;
  cfg.use_semantic = detail::get_bool(doc, "use_semantic", cfg.use_semantic);
  cfg.use_stagewise = detail::get_bool(doc, "use_stagewise", cfg.use_stagewise);
  cfg.medium_warmup_iterations = detail::get_int(doc, "medium_warmup_iterations",
                                                 cfg.medium_warmup_iterations);
  require(cfg.medium_warmup_iterations >= 0,
          "config: medium_warmup_iterations must be non-negative");
  cfg.resume = detail::get_string(doc, "resume", "");

  if (doc.contains("stage")) {
    const auto& j = doc["stage"];
    detail::require_keys(j,
                         {"stage2_fraction", "stage1_l1_weight", "stage1_l2_weight",
                          "stage2_l1_weight", "stage2_l2_weight"},
                         "config.stage");
    cfg.stage.stage2_fraction = detail::get_number(j, "stage2_fraction", cfg.stage.stage2_fraction);
    require(cfg.stage.stage2_fraction >= 0.0 && cfg.stage.stage2_fraction <= 1.0,
            "config: stage2_fraction must lie in [0, 1]");
    cfg.stage.stage1_l1_weight = detail::get_number(j, "stage1_l1_weight", cfg.stage.stage1_l1_weight);
    cfg.stage.stage1_l2_weight = detail::get_number(j, "stage1_l2_weight", cfg.stage.stage1_l2_weight);
    cfg.stage.stage2_l1_weight = detail::get_number(j, "stage2_l1_weight", cfg.stage.stage2_l1_weight);
    cfg.stage.stage2_l2_weight = detail::get_number(j, "stage2_l2_weight", cfg.stage.stage2_l2_weight);
  }
  if (doc.contains("weights")) {
    const auto& j = doc["weights"];
    detail::require_keys(j,
                         {"lambda_s", "lambda_ssim", "lambda_depth", "lambda_g",
                          "lambda_smooth", "alpha_reg", "interp_fixed_weight"},
                         "config.weights");
    cfg.weights.lambda_s = detail::get_number(j, "lambda_s", cfg.weights.lambda_s);
    cfg.weights.lambda_ssim = detail::get_number(j, "lambda_ssim", cfg.weights.lambda_ssim);
    cfg.weights.lambda_depth = detail::get_number(j, "lambda_depth", cfg.weights.lambda_depth);
    cfg.weights.lambda_g = detail::get_number(j, "lambda_g", cfg.weights.lambda_g);
    cfg.weights.lambda_smooth = detail::get_number(j, "lambda_smooth", cfg.weights.lambda_smooth);
    cfg.weights.alpha_reg = detail::get_number(j, "alpha_reg", cfg.weights.alpha_reg);
    cfg.weights.interp_fixed_weight =
        detail::get_number(j, "interp_fixed_weight", cfg.weights.interp_fixed_weight);
  }
  if (doc.contains("adam")) {
    const auto& j = doc["adam"];
    detail::require_keys(j,
                         {"beta1", "beta2", "epsilon", "lr_position_init",
                          "lr_position_final", "lr_scale", "lr_rotation", "lr_sh",
                          "lr_opacity", "lr_semantic", "lr_medium"},
                         "config.adam");
    cfg.adam.beta1 = detail::get_number(j, "beta1", cfg.adam.beta1);
    cfg.adam.beta2 = detail::get_number(j, "beta2", cfg.adam.beta2);
    cfg.adam.epsilon = detail::get_number(j, "epsilon", cfg.adam.epsilon);
    cfg.adam.lr_position_init = detail::get_number(j, "lr_position_init", cfg.adam.lr_position_init);
    cfg.adam.lr_position_final = detail::get_number(j, "lr_position_final", cfg.adam.lr_position_final);
    cfg.adam.lr_scale = detail::get_number(j, "lr_scale", cfg.adam.lr_scale);
    cfg.adam.lr_rotation = detail::get_number(j, "lr_rotation", cfg.adam.lr_rotation);
    cfg.adam.lr_sh = detail::get_number(j, "lr_sh", cfg.adam.lr_sh);
    cfg.adam.lr_opacity = detail::get_number(j, "lr_opacity", cfg.adam.lr_opacity);
    cfg.adam.lr_semantic = detail::get_number(j, "lr_semantic", cfg.adam.lr_semantic);
    cfg.adam.lr_medium = detail::get_number(j, "lr_medium", cfg.adam.lr_medium);
  }
  if (doc.contains("densify")) {
    const auto& j = doc["densify"];
    detail::require_keys(j,
                         {"grad_threshold", "percent_dense", "min_opacity",
                          "interval", "start_iteration", "split_scale_divisor",
                          "max_primitives"},
                         "config.densify");
    cfg.densify.grad_threshold = detail::get_number(j, "grad_threshold", cfg.densify.grad_threshold);
    cfg.densify.percent_dense = detail::get_number(j, "percent_dense", cfg.densify.percent_dense);
    cfg.densify.min_opacity = detail::get_number(j, "min_opacity", cfg.densify.min_opacity);
    cfg.densify.interval = detail::get_int(j, "interval", cfg.densify.interval);
    require(cfg.densify.interval > 0, "config: densify interval must be positive");
    cfg.densify.start_iteration = detail::get_int(j, "start_iteration", cfg.densify.start_iteration);
    cfg.densify.split_scale_divisor =
        detail::get_number(j, "split_scale_divisor", cfg.densify.split_scale_divisor);
    cfg.densify.max_primitives = static_cast<std::size_t>(
        detail::get_int(j, "max_primitives", static_cast<int>(cfg.densify.max_primitives)));
  }
  if (doc.contains("raster")) {
    const auto& j = doc["raster"];
    detail::require_keys(j,
                         {"tile_size", "alpha_clamp", "transmittance_min",
                          "early_termination", "threads"},
                         "config.raster");
    cfg.raster.tile_size = detail::get_int(j, "tile_size", cfg.raster.tile_size);
    require(cfg.raster.tile_size > 0, "config: tile_size must be positive");
    cfg.raster.alpha_clamp = detail::get_number(j, "alpha_clamp", cfg.raster.alpha_clamp);
    cfg.raster.transmittance_min =
        detail::get_number(j, "transmittance_min", cfg.raster.transmittance_min);
    cfg.raster.early_termination =
        detail::get_bool(j, "early_termination", cfg.raster.early_termination);
    cfg.raster.threads = detail::get_int(j, "threads", cfg.raster.threads);
  }
  return cfg;
}

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json doc;
  doc["scene_dir"] = cfg.scene_dir;
  doc["out_dir"] = cfg.out_dir;
  doc["total_iterations"] = cfg.total_iterations;
  doc["seed"] = cfg.seed;
  doc["projector_seed"] = cfg.projector_seed;
  doc["sh_degree"] = cfg.sh_degree;
  doc["log_interval"] = cfg.log_interval;
  doc["eval_interval"] = cfg.eval_interval;
  doc["preview_interval"] = cfg.preview_interval;
  doc["checkpoint_interval"] = cfg.checkpoint_interval;
  doc["init_random_points"] = cfg.init_random_points;
  doc["interp_mode"] = cfg.interp_mode == InterpMode::Fixed ? "fixed" : "learned";
  doc["semantic_reduction"] =
      cfg.reduction == SemanticReduction::Sum ? "sum" : "mean";
  doc["use_semantic"] = cfg.use_semantic;
  doc["use_stagewise"] = cfg.use_stagewise;
  doc["medium_warmup_iterations"] = cfg.medium_warmup_iterations;
  doc["resume"] = cfg.resume;
  doc["stage"] = {{"stage2_fraction", cfg.stage.stage2_fraction},
                  {"stage1_l1_weight", cfg.stage.stage1_l1_weight},
                  {"stage1_l2_weight", cfg.stage.stage1_l2_weight},
                  {"stage2_l1_weight", cfg.stage.stage2_l1_weight},
                  {"stage2_l2_weight", cfg.stage.stage2_l2_weight}};
  doc["weights"] = {{"lambda_s", cfg.weights.lambda_s},
                    {"lambda_ssim", cfg.weights.lambda_ssim},
                    {"lambda_depth", cfg.weights.lambda_depth},
                    {"lambda_g", cfg.weights.lambda_g},
                    {"lambda_smooth", cfg.weights.lambda_smooth},
                    {"alpha_reg", cfg.weights.alpha_reg},
                    {"interp_fixed_weight", cfg.weights.interp_fixed_weight}};
  doc["adam"] = {{"beta1", cfg.adam.beta1},
                 {"beta2", cfg.adam.beta2},
                 {"epsilon", cfg.adam.epsilon},
                 {"lr_position_init", cfg.adam.lr_position_init},
                 {"lr_position_final", cfg.adam.lr_position_final},
                 {"lr_scale", cfg.adam.lr_scale},
                 {"lr_rotation", cfg.adam.lr_rotation},
                 {"lr_sh", cfg.adam.lr_sh},
                 {"lr_opacity", cfg.adam.lr_opacity},
                 {"lr_semantic", cfg.adam.lr_semantic},
                 {"lr_medium", cfg.adam.lr_medium}};
  doc["densify"] = {{"grad_threshold", cfg.densify.grad_threshold},
                    {"percent_dense", cfg.densify.percent_dense},
                    {"min_opacity", cfg.densify.min_opacity},
                    {"interval", cfg.densify.interval},
                    {"start_iteration", cfg.densify.start_iteration},
                    {"split_scale_divisor", cfg.densify.split_scale_divisor},
                    {"max_primitives", cfg.densify.max_primitives}};
  doc["raster"] = {{"tile_size", cfg.raster.tile_size},
                   {"alpha_clamp", cfg.raster.alpha_clamp},
                   {"transmittance_min", cfg.raster.transmittance_min},
                   {"early_termination", cfg.raster.early_termination},
                   {"threads", cfg.raster.threads}};
  return doc;
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_train_config: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_train_config: " + path + ": " + e.what());
  }
  return train_config_from_json(doc);
}

// ---------------------------------------------------------------------------
// Cloud and medium initialization

// Mean distance to the three nearest neighbours, the usual footprint guess
// for point-seeded Gaussians.
inline std::vector<double> knn_mean_distance(const std::vector<double>& positions) {
  const std::size_t n = positions.size() / 3;
  std::vector<double> out(n, 0.1);
  if (n < 2) return out;
  for (std::size_t i = 0; i < n; ++i) {
    double best[3] = {1e30, 1e30, 1e30};
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double d = positions[i * 3 + k] - positions[j * 3 + k];
        d2 += d * d;
      }
      if (d2 < best[0]) {
        best[2] = best[1];
        best[1] = best[0];
        best[0] = d2;
      } else if (d2 < best[1]) {
        best[2] = best[1];
        best[1] = d2;
      } else if (d2 < best[2]) {
        best[2] = d2;
      }
    }
    int valid = 0;
    double sum = 0.0;
    for (double b : best)
      if (b < 1e30) {
        sum += std::sqrt(b);
        ++valid;
      }
    out[i] = std::max(valid > 0 ? sum / valid : 0.1, 1e-4);
  }
  return out;
}

inline GaussianCloud init_cloud_from_points(const InitPoints& points, int sh_degree) {
  require(points.size() > 0, "init_cloud_from_points: empty point set");
  GaussianCloud cloud;
  cloud.sh_degree = sh_degree;
  const std::size_t n = points.size();
  cloud.resize(n);
  cloud.positions = points.positions;
  const std::vector<double> nn = knn_mean_distance(points.positions);
  for (std::size_t i = 0; i < n; ++i) {
    const double ls = std::log(nn[i]);
    cloud.set_log_scale(i, Vec3(ls, ls, ls));
    cloud.set_rotation(i, Vec4(1.0, 0.0, 0.0, 0.0));
    cloud.opacity_logits[i] = logit(0.1);
    for (int c = 0; c < 3; ++c)
      cloud.sh_coeffs[(i * cloud.sh_count()) * 3 + c] =
          (points.rgb[i * 3 + c] - 0.5) / sh::kC0;
  }
  cloud.validate();
  return cloud;
}

inline GaussianCloud init_cloud_random(std::size_t n, double extent,
                                       const Vec3& center, int sh_degree,
                                       Rng& rng) {
  require(n > 0, "init_cloud_random: need at least one point");
  InitPoints pts;
  pts.positions.reserve(n * 3);
  pts.rgb.reserve(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k)
      pts.positions.push_back(center[k] + rng.uniform(-extent, extent));
    for (int c = 0; c < 3; ++c) pts.rgb.push_back(rng.uniform(0.2, 0.8));
  }
  return init_cloud_from_points(pts, sh_degree);
}

// Data-driven start for the nine global water scalars, in the spirit of
// range-map attenuation estimation: a two-exponential fit to the binned
// mean-intensity-vs-depth curve fixes the per-channel attenuation rate
// (backscatter rate tied to it, the classic single-coefficient water model),
// then sparse-point radiance anchors fix the background light at that rate.
// The start matters more than usual here: once per-primitive colors have
// absorbed a global tint, joint training cannot re-derive these scalars, so
// the initializer is the main recovery step and training only refines it.
// Scenes without usable depth priors fall back to a faint constant haze with
// the background light at the average capture color.
inline MediumParams init_medium_from_scene(const Scene& scene) {
  Vec3 mean = Vec3::Zero();
  std::size_t count = 0;
  constexpr int kBins = 24;
  double zmin = 1e300, zmax = -1e300;
  std::array<double, kBins> bin_n{}, bin_z{};
  std::array<Vec3, kBins> bin_i;
  bin_i.fill(Vec3::Zero());

  auto masked_depth = [](const SceneView& v, int y, int x) -> double {
    if (v.prior_depth.size() !=
        static_cast<std::size_t>(v.image.height) * v.image.width)
      return 0.0;
    const std::size_t p = static_cast<std::size_t>(y) * v.image.width + x;
    if (!v.depth_mask.empty() && !v.depth_mask[p]) return 0.0;
    return v.prior_depth.at(y, x, 0);
  };

  for (const SceneView& v : scene.views) {
    if (v.holdout) continue;
    for (int y = 0; y < v.image.height; ++y)
      for (int x = 0; x < v.image.width; ++x) {
        for (int c = 0; c < 3; ++c) mean[c] += v.image.at(y, x, c);
        ++count;
        const double z = masked_depth(v, y, x);
        if (z > 0.0) {
          zmin = std::min(zmin, z);
          zmax = std::max(zmax, z);
        }
      }
  }
  require(count > 0, "init_medium_from_scene: no training pixels");
  mean /= static_cast<double>(count);

  MediumParams m;
  for (int c = 0; c < 3; ++c)
    m.b_inf_logit[c] = logit(std::clamp(mean[c], 0.01, 0.99));
  if (!(zmax - zmin > 1e-6)) return m;

  std::size_t depth_count = 0;
  for (const SceneView& v : scene.views) {
    if (v.holdout) continue;
    for (int y = 0; y < v.image.height; ++y)
      for (int x = 0; x < v.image.width; ++x) {
        const double z = masked_depth(v, y, x);
        if (!(z > 0.0)) continue;
        const int b = std::min(
            kBins - 1, static_cast<int>((z - zmin) / (zmax - zmin) * kBins));
        bin_n[b] += 1.0;
        bin_z[b] += z;
        for (int c = 0; c < 3; ++c) bin_i[b][c] += v.image.at(y, x, c);
        ++depth_count;
      }
  }
  if (depth_count < 256) return m;
  for (int b = 0; b < kBins; ++b)
    if (bin_n[b] > 0.0) {
      bin_z[b] /= bin_n[b];
      bin_i[b] /= bin_n[b];
    }

  // Intensity-curve model: mean_I(z) = c * exp(-bd z) + B (1 - exp(-bb z)).
  // Only the direct rate survives into the result; the free (bb, B) pair
  // merely keeps the fitted bd honest about the backscatter offset.
  const auto grid_rate = [](int i, int n) {
    return 0.02 * std::pow(1.5 / 0.02, static_cast<double>(i) / (n - 1));
  };
  Vec3 beta = Vec3::Constant(0.05);
  for (int ch = 0; ch < 3; ++ch) {
    double best_sse = 1e300, best_bd = 0.05;
    for (int i = 0; i < 96; ++i) {
      const double bd = grid_rate(i, 96);
      for (int j = 0; j < 96; ++j) {
        const double bb = grid_rate(j, 96);
        double a11 = 0, a12 = 0, a22 = 0, r1 = 0, r2 = 0;
        for (int b = 0; b < kBins; ++b) {
          if (bin_n[b] < 8.0) continue;
          const double u = std::exp(-bd * bin_z[b]);
          const double w = 1.0 - std::exp(-bb * bin_z[b]);
          a11 += bin_n[b] * u * u;
          a12 += bin_n[b] * u * w;
          a22 += bin_n[b] * w * w;
          r1 += bin_n[b] * u * bin_i[b][ch];
          r2 += bin_n[b] * w * bin_i[b][ch];
        }
        const double det = a11 * a22 - a12 * a12;
        if (std::abs(det) < 1e-12) continue;
        const double c = std::clamp((r1 * a22 - r2 * a12) / det, 0.05, 1.5);
        const double B = std::clamp((a11 * r2 - a12 * r1) / det, 0.005, 0.995);
        double sse = 0;
        for (int b = 0; b < kBins; ++b) {
          if (bin_n[b] < 8.0) continue;
          const double pred = c * std::exp(-bd * bin_z[b]) +
                              B * (1.0 - std::exp(-bb * bin_z[b]));
          const double e = pred - bin_i[b][ch];
          sse += bin_n[b] * e * e;
        }
        if (sse < best_sse) {
          best_sse = sse;
          best_bd = bd;
        }
      }
    }
    beta[ch] = best_bd;
    m.log_beta_d[ch] = std::log(best_bd);
    m.log_beta_b[ch] = std::log(best_bd);
  }

  // Background light from seed points treated as radiance anchors: at a
  // pixel whose depth agrees with a projected point, I - J exp(-beta z)
  // isolates the backscatter term. Points whose stored color is the
  // observed capture color simply drive this toward zero, i.e. back to the
  // faint-haze fallback, so the anchor is safe on real captures.
  struct Anchor {
    double z;
    Vec3 j, i;
  };
  std::vector<Anchor> anchors;
  for (const SceneView& v : scene.views) {
    if (v.holdout) continue;
    for (std::size_t k = 0; k < scene.points.size(); ++k) {
      const Vec3 X(scene.points.positions[k * 3],
                   scene.points.positions[k * 3 + 1],
                   scene.points.positions[k * 3 + 2]);
      const Vec3 Xc = v.camera.to_camera(X);
      if (Xc.z() < 0.1) continue;
      const int px = static_cast<int>(
          std::floor(v.camera.fx * Xc.x() / Xc.z() + v.camera.cx));
      const int py = static_cast<int>(
          std::floor(v.camera.fy * Xc.y() / Xc.z() + v.camera.cy));
      if (px < 0 || py < 0 || px >= v.image.width || py >= v.image.height)
        continue;
      const double zp = masked_depth(v, py, px);
      if (!(zp > 0.0) || std::abs(zp - Xc.z()) > 0.1 * Xc.z()) continue;
      Anchor a;
      a.z = zp;
      a.j = Vec3(scene.points.rgb[k * 3], scene.points.rgb[k * 3 + 1],
                 scene.points.rgb[k * 3 + 2]);
      a.i = Vec3(v.image.at(py, px, 0), v.image.at(py, px, 1),
                 v.image.at(py, px, 2));
      anchors.push_back(a);
    }
  }
  if (anchors.size() < 64) return m;

  for (int ch = 0; ch < 3; ++ch) {
    const double b = beta[ch];
    double B = 0.0;
    std::vector<double> keep(anchors.size(), 1.0);
    for (int pass = 0; pass < 3; ++pass) {
      double num = 0, den = 0;
      for (std::size_t k = 0; k < anchors.size(); ++k) {
        const Anchor& a = anchors[k];
        const double r = a.i[ch] - a.j[ch] * std::exp(-b * a.z);
        const double w = 1.0 - std::exp(-b * a.z);
        num += keep[k] * r * w;
        den += keep[k] * w * w;
      }
      if (den < 1e-12) {
        B = 0.0;
        break;
      }
      B = std::clamp(num / den, 0.005, 0.995);
      double se2 = 0;
      for (const Anchor& a : anchors) {
        const double e = a.i[ch] - a.j[ch] * std::exp(-b * a.z) -
                         B * (1.0 - std::exp(-b * a.z));
        se2 += e * e;
      }
      const double sigma = std::sqrt(se2 / static_cast<double>(anchors.size()));
      for (std::size_t k = 0; k < anchors.size(); ++k) {
        const Anchor& a = anchors[k];
        const double e = a.i[ch] - a.j[ch] * std::exp(-b * a.z) -
                         B * (1.0 - std::exp(-b * a.z));
        keep[k] = std::abs(e) < 1.5 * sigma ? 1.0 : 0.0;
      }
    }
    // A fit pinned at the clamp floor means the anchors carried no
    // backscatter signal for this channel; the capture mean is a better
    // guess than an implausibly clear channel.
    if (B > 0.0051)
      m.b_inf_logit[ch] = logit(std::clamp(B, 0.01, 0.99));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Trainer

struct EvalViewResult {
  std::string view_id;
  double psnr = 0.0;
  double ssim = -1.0;  // -1 when the image is smaller than the SSIM window
};

struct EvalSummary {
  double mean_psnr = 0.0;
  double mean_ssim = -1.0;
  std::vector<EvalViewResult> views;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, Scene scene)
      : cfg_(std::move(cfg)),
        scene_(std::move(scene)),
        projector_(cfg_.projector_seed),
        rng_(cfg_.seed) {
    stage_cfg_ = cfg_.stage;
    stage_cfg_.total_iterations = cfg_.total_iterations;
    train_views_ = scene_.train_view_indices();
    require(!train_views_.empty(), "Trainer: scene has no training views");
    scene_extent_ = scene_.extent();

    project_all_regions();

    if (scene_.points.size() > 0) {
      cloud_ = init_cloud_from_points(scene_.points, cfg_.sh_degree);
    } else {
      Vec3 centroid = Vec3::Zero();
      for (const auto& v : scene_.views) centroid += v.camera.center();
      centroid /= static_cast<double>(scene_.views.size());
      cloud_ = init_cloud_random(cfg_.init_random_points, 0.5 * scene_extent_,
                                 centroid, cfg_.sh_degree, rng_);
    }
    medium_ = init_medium_from_scene(scene_);
    opt_.init(cloud_);
    densify_.reset(cloud_.size());
    log_gamma_.assign(scene_.views.size(), 0.0);

    if (!cfg_.resume.empty()) resume_from(cfg_.resume);
  }

  const TrainConfig& config() const { return cfg_; }
  const Scene& scene() const { return scene_; }
  const GaussianCloud& cloud() const { return cloud_; }
  const MediumParams& medium() const { return medium_; }
  const OptimizerState& optimizer_state() const { return opt_; }
  int iteration() const { return iteration_; }
  bool done() const { return iteration_ >= cfg_.total_iterations; }
  const LossBreakdown& last_breakdown() const { return last_; }
  std::size_t last_view() const { return last_view_; }
  int last_stage() const { return last_stage_; }

  StageState current_stage(int iteration) const {
    StageState st;
    if (!cfg_.use_stagewise) {
      st.stage = 1;
      st.l1_weight = stage_cfg_.stage1_l1_weight;
      st.l2_weight = stage_cfg_.stage1_l2_weight;
      st.densify_allowed = true;
    } else {
      st = stage_schedule(stage_cfg_, iteration);
    }
    // Early renders spill far past the true silhouettes, and supervising the
    // nine global water scalars against that spill drives backscatter toward
    // zero, a local optimum they rarely escape. Holding them at their initial
    // estimate until the cloud tightens keeps the tint explanation global.
    if (iteration < cfg_.medium_warmup_iterations)
      st.freeze.freeze(ParamGroup::Medium);
    return st;
  }

  void step() {
    require(!done(), "Trainer::step: training already finished");
    const std::size_t vi = train_views_[rng_.index(train_views_.size())];
    try {
      step_on_view(vi);
    } catch (const Error& e) {
      throw Error("iteration " + std::to_string(iteration_) + ", view '" +
                  scene_.views[vi].image_id + "': " + e.what());
    }
  }

  // Full run: logging, periodic eval/previews/checkpoints, final artifacts.
  void run(std::ostream* log = nullptr) {
    while (!done()) {
      const int it = iteration_;
      step();
      if (log && cfg_.log_interval > 0 &&
          (it % cfg_.log_interval == 0 || it == cfg_.total_iterations - 1))
        *log << train_log_line(it) << '\n';
      if (log && cfg_.eval_interval > 0 && it > 0 && it % cfg_.eval_interval == 0)
        emit_eval_lines(*log, it);
      if (cfg_.preview_interval > 0 && it > 0 && it % cfg_.preview_interval == 0)
        write_previews("iter_" + iter_tag(it));
      if (cfg_.checkpoint_interval > 0 && it > 0 &&
          it % cfg_.checkpoint_interval == 0 && !cfg_.out_dir.empty())
        save(checkpoint_path("checkpoint_" + iter_tag(it) + ".bin"));
    }
    if (log) emit_eval_lines(*log, iteration_);
    write_previews("final");
    if (!cfg_.out_dir.empty()) save(checkpoint_path("checkpoint_final.bin"));
  }

  Checkpoint make_checkpoint() const {
    Checkpoint ck;
    ck.cloud = cloud_;
    ck.medium = medium_;
    ck.opt = opt_;
    ck.projector_seed = projector_.seed();
    ck.iteration = iteration_;
    ck.config_json = train_config_to_json(cfg_).dump();
    ck.rng_state = rng_.serialize();
    ck.densify_grad_accum = densify_.grad_accum;
    ck.densify_view_count.assign(densify_.view_count.begin(),
                                 densify_.view_count.end());
    ck.log_gamma = log_gamma_;
    return ck;
  }

  void save(const std::string& path) const { save_checkpoint(make_checkpoint(), path); }

  void resume_from(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    require(ck.log_gamma.size() == scene_.views.size(),
            "resume: checkpoint was written for a different view count");
    cloud_ = ck.cloud;
    medium_ = ck.medium;
    opt_ = ck.opt;
    iteration_ = static_cast<int>(ck.iteration);
    rng_.deserialize(ck.rng_state);
    densify_.grad_accum = ck.densify_grad_accum;
    densify_.view_count.assign(ck.densify_view_count.begin(),
                               ck.densify_view_count.end());
    require(densify_.grad_accum.size() == cloud_.size(),
            "resume: densify statistics incongruent with cloud");
    log_gamma_ = ck.log_gamma;
    if (ck.projector_seed != projector_.seed()) {
      projector_ = EmbeddingProjector(ck.projector_seed);
      project_all_regions();
    }
  }

  EvalSummary evaluate_holdout() const { return evaluate(scene_.holdout_view_indices()); }

  EvalSummary evaluate(const std::vector<std::size_t>& view_indices) const {
    EvalSummary summary;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    std::size_t ssim_count = 0;
    for (const std::size_t vi : view_indices) {
      const SceneView& view = scene_.views[vi];
      const ViewRender vr = render_view(cloud_, view.camera, medium_, cfg_.raster);
      EvalViewResult r;
      r.view_id = view.image_id;
      r.psnr = psnr(vr.observed, view.image);
      if (view.image.height >= 11 && view.image.width >= 11) {
        r.ssim = ssim_index(vr.observed, view.image);
        ssim_sum += r.ssim;
        ++ssim_count;
      }
      psnr_sum += r.psnr;
      summary.views.push_back(std::move(r));
    }
    if (!summary.views.empty())
      summary.mean_psnr = psnr_sum / static_cast<double>(summary.views.size());
    if (ssim_count > 0) summary.mean_ssim = ssim_sum / static_cast<double>(ssim_count);
    return summary;
  }

  // Mean distance between member features and their region target, averaged
  // over regions with at least one member.
  double member_feature_error() const {
    double total = 0.0;
    std::size_t regions_hit = 0;
    for (std::size_t ri = 0; ri < regions_.size(); ++ri) {
      const SemanticRegion& region = regions_[ri];
      const std::size_t vi = region_view_[ri];
      const auto members =
          region_membership(cloud_, scene_.views[vi].camera, region);
      if (members.empty()) continue;
      double region_err = 0.0;
      for (const std::size_t i : members) {
        double d2 = 0.0;
        for (int k = 0; k < kSemanticDim; ++k) {
          const double d =
              cloud_.semantic_features[i * kSemanticDim + k] - region.f_ref[k];
          d2 += d * d;
        }
        region_err += std::sqrt(d2);
      }
      total += region_err / static_cast<double>(members.size());
      ++regions_hit;
    }
    return regions_hit == 0 ? 0.0 : total / static_cast<double>(regions_hit);
  }

  std::string train_log_line(int iteration) const {
    const SceneView& view = scene_.views[last_view_];
    const ViewRender vr = render_view(cloud_, view.camera, medium_, cfg_.raster);
    nlohmann::json line = breakdown_json(last_);
    line["iter"] = iteration;
    line["stage"] = last_stage_;
    line["split"] = "train";
    line["view"] = view.image_id;
    line["frame_kind"] = frame_kind_name(view.kind);
    line["n"] = cloud_.size();
    line["psnr"] = psnr(vr.observed, view.image);
    if (view.image.height >= 11 && view.image.width >= 11)
      line["ssim"] = ssim_index(vr.observed, view.image);
    else
      line["ssim"] = nullptr;
    return line.dump();
  }

 private:
  static std::string iter_tag(int it) {
    std::ostringstream os;
    os << std::setfill('0') << std::setw(6) << it;
    return os.str();
  }

  std::string checkpoint_path(const std::string& name) const {
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir);
    return (fs::path(cfg_.out_dir) / name).string();
  }

  static nlohmann::json breakdown_json(const LossBreakdown& b) {
    nlohmann::json j;
    j["l_rec"] = b.l_rec;
    j["l_depth"] = b.l_depth;
    j["l_g"] = b.l_g;
    j["l_smooth"] = b.l_smooth;
    j["l_s"] = b.l_s;
    j["l_2"] = b.l_2;
    j["l_final"] = b.l_final;
    j["l_step"] = b.l_step;
    return j;
  }

  void project_all_regions() {
    regions_.clear();
    region_view_.clear();
    regions_by_view_.assign(scene_.views.size(), {});
    for (const RawRegion& raw : scene_.regions) {
      bool matched = false;
      for (std::size_t vi = 0; vi < scene_.views.size(); ++vi) {
        if (scene_.views[vi].image_id != raw.image_id) continue;
        regions_by_view_[vi].push_back(regions_.size());
        region_view_.push_back(vi);
        matched = true;
        break;
      }
      if (!matched) {
        scene_.warnings.push_back("region for unknown view '" + raw.image_id +
                                  "' ignored");
        continue;
      }
      regions_.push_back(project_region(raw, projector_));
    }
  }

  void step_on_view(std::size_t vi) {
    const SceneView& view = scene_.views[vi];
    const StageState stage = current_stage(iteration_);

    std::vector<RegionMembership> memberships;
    if (cfg_.use_semantic) {
      for (const std::size_t ri : regions_by_view_[vi]) {
        RegionMembership m;
        m.indices = region_membership(cloud_, view.camera, regions_[ri]);
        if (m.indices.empty()) continue;
        m.f_ref = regions_[ri].f_ref;
        memberships.push_back(std::move(m));
      }
    }

    ViewSupervision sup;
    sup.target = &view.image;
    if (view.prior_depth.height > 0) {
      sup.prior_depth = &view.prior_depth;
      if (!view.depth_mask.empty()) sup.depth_mask = &view.depth_mask;
    }
    if (!memberships.empty()) sup.memberships = &memberships;
    sup.kind = view.kind;
    sup.interp = cfg_.interp_mode;
    sup.gamma = std::exp(log_gamma_[vi]);

    LossWeights weights = cfg_.weights;
    if (!cfg_.use_semantic) weights.lambda_s = 0.0;

    BackwardResult result = backward_full(cloud_, view.camera, medium_, sup,
                                          weights, stage, cfg_.reduction,
                                          cfg_.raster);

    if (stage.densify_allowed)
      densify_.accumulate(result.grads, scene_.width, scene_.height);

    adam_step(cloud_, medium_, result.grads, opt_, cfg_.adam, stage.freeze,
              position_learning_rate(cfg_.adam, iteration_, cfg_.total_iterations));

    if (cfg_.interp_mode == InterpMode::Learned &&
        view.kind == FrameKind::Interpolated)
      log_gamma_[vi] -= 1e-2 * result.d_log_gamma;

    if (stage.densify_allowed && iteration_ >= cfg_.densify.start_iteration &&
        iteration_ % cfg_.densify.interval == 0) {
      const DensifyReport report =
          densify_and_prune(cloud_, densify_, cfg_.densify, scene_extent_, rng_);
      remap_optimizer_state(opt_, report.remap, cloud_.sh_count());
    }

    last_ = result.breakdown;
    last_view_ = vi;
    last_stage_ = stage.stage;
    ++iteration_;
  }

  void emit_eval_lines(std::ostream& log, int iteration) const {
    const auto holdout = scene_.holdout_view_indices();
    const EvalSummary summary = evaluate(holdout);
    for (const EvalViewResult& r : summary.views) {
      nlohmann::json line;
      line["iter"] = iteration;
      line["stage"] = last_stage_;
      line["split"] = "holdout";
      line["view"] = r.view_id;
      line["frame_kind"] = "keyframe";
      line["n"] = cloud_.size();
      line["psnr"] = r.psnr;
      if (r.ssim >= 0.0)
        line["ssim"] = r.ssim;
      else
        line["ssim"] = nullptr;
      log << line.dump() << '\n';
    }
  }

  void write_previews(const std::string& tag) const {
    if (cfg_.out_dir.empty()) return;
    namespace fs = std::filesystem;
    const auto holdout = scene_.holdout_view_indices();
    const std::size_t vi = holdout.empty() ? 0 : holdout.front();
    const SceneView& view = scene_.views[vi];
    const ViewRender vr = render_view(cloud_, view.camera, medium_, cfg_.raster);
    const fs::path dir = fs::path(cfg_.out_dir) / "previews";
    fs::create_directories(dir);
    write_png(vr.render.color, (dir / (tag + "_clean.png")).string(), 16);
    write_png(vr.observed, (dir / (tag + "_observed.png")).string(), 16);
  }

  TrainConfig cfg_;
  Scene scene_;
  EmbeddingProjector projector_;
  StageConfig stage_cfg_;
  std::vector<SemanticRegion> regions_;
  std::vector<std::size_t> region_view_;
  std::vector<std::vector<std::size_t>> regions_by_view_;
  std::vector<std::size_t> train_views_;
  GaussianCloud cloud_;
  MediumParams medium_;
  OptimizerState opt_;
  DensifyStats densify_;
  std::vector<double> log_gamma_;
  Rng rng_;
  double scene_extent_ = 1.0;
  int iteration_ = 0;
  std::size_t last_view_ = 0;
  int last_stage_ = 1;
  LossBreakdown last_;
};

// ---------------------------------------------------------------------------
// Ablation grid

struct AblationResult {
  std::string variant;
  double holdout_psnr = 0.0;
  double holdout_ssim = -1.0;
  double member_feature_error = 0.0;
  std::size_t primitives = 0;
};

// Four configurations: M1 = plain baseline, M2 = staged training only,
// M3 = semantic alignment only, full = both.
inline std::vector<AblationResult> run_ablation(const TrainConfig& base,
                                                const Scene& scene,
                                                std::ostream* log = nullptr) {
  struct Variant {
    const char* name;
    bool semantic;
    bool stagewise;
  };
  const Variant variants[] = {{"M1", false, false},
                              {"M2", false, true},
                              {"M3", true, false},
                              {"full", true, true}};
  std::vector<AblationResult> results;
  for (const Variant& v : variants) {
    TrainConfig cfg = base;
    cfg.use_semantic = v.semantic;
    cfg.use_stagewise = v.stagewise;
    if (!base.out_dir.empty())
      cfg.out_dir = (std::filesystem::path(base.out_dir) / v.name).string();
    Trainer trainer(cfg, scene);
    trainer.run(nullptr);
    const EvalSummary eval = trainer.evaluate_holdout();
    AblationResult r;
    r.variant = v.name;
    r.holdout_psnr = eval.mean_psnr;
    r.holdout_ssim = eval.mean_ssim;
    r.member_feature_error = trainer.member_feature_error();
    r.primitives = trainer.cloud().size();
    if (log) {
      nlohmann::json line;
      line["variant"] = r.variant;
      line["psnr"] = r.holdout_psnr;
      if (r.holdout_ssim >= 0.0)
        line["ssim"] = r.holdout_ssim;
      else
        line["ssim"] = nullptr;
      line["member_feature_error"] = r.member_feature_error;
      line["n"] = r.primitives;
      *log << line.dump() << '\n';
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace uwsplat
