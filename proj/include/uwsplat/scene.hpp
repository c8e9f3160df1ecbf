#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "uwsplat/camera.hpp"
#include "uwsplat/common.hpp"
#include "uwsplat/gaussian_cloud.hpp"
#include "uwsplat/image.hpp"
#include "uwsplat/losses.hpp"
#include "uwsplat/medium.hpp"
#include "uwsplat/rasterizer.hpp"
#include "uwsplat/semantics.hpp"
#include "uwsplat/sh.hpp"

namespace uwsplat {

struct SceneView {
  std::string image_id;
  Camera camera;
  FrameKind kind = FrameKind::Keyframe;
  bool holdout = false;
  Image image;                           // observed capture, H x W x 3
  Image prior_depth;                     // H x W x 1, empty when absent
  std::vector<std::uint8_t> depth_mask;  // empty = every pixel valid
};

// Optional synthetic ground truth carried alongside a scene.
struct SceneGroundTruth {
  bool present = false;
  std::vector<Image> clean_images;  // aligned with views
  MediumParams medium;
  GaussianCloud cloud;
  std::vector<std::size_t> cluster_indices;
};

// Seed points for cloud initialization (positions N*3, rgb N*3).
struct InitPoints {
  std::vector<double> positions;
  std::vector<double> rgb;

  std::size_t size() const { return rgb.size() / 3; }
};

struct Scene {
  int width = 0, height = 0;
  double depth_scale = 0.0;  // meters per unit stored depth; 0 = no priors
  int holdout_every = 8;     // 0 = nothing held out
  std::vector<SceneView> views;
  std::vector<RawRegion> regions;
  InitPoints points;
  SceneGroundTruth ground_truth;
  std::vector<std::string> warnings;

  std::vector<std::size_t> train_view_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < views.size(); ++i)
      if (!views[i].holdout) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> holdout_view_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < views.size(); ++i)
      if (views[i].holdout) out.push_back(i);
    return out;
  }

  // Radius of the camera rig around its centroid; drives densify thresholds.
  double extent() const {
    require(!views.empty(), "Scene::extent: no views");
    Vec3 mean = Vec3::Zero();
    for (const auto& v : views) mean += v.camera.center();
    mean /= static_cast<double>(views.size());
    double radius = 0.0;
    for (const auto& v : views)
      radius = std::max(radius, (v.camera.center() - mean).norm());
    return std::max(radius * 1.1, 1e-3);
  }
};

namespace detail {

inline void require_keys(const nlohmann::json& obj,
                         std::initializer_list<const char*> allowed,
                         const std::string& where) {
  require(obj.is_object(), where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    require(ok, where + ": unknown key '" + key + "'");
  }
}

inline std::vector<double> json_doubles(const nlohmann::json& arr,
                                        const std::string& where) {
  require(arr.is_array(), where + ": expected an array");
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    require(v.is_number(), where + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline Camera camera_from_json(const nlohmann::json& j, int width, int height,
                               const std::string& where) {
  require_keys(j, {"fx", "fy", "cx", "cy", "rotation", "translation"}, where);
  for (const char* key : {"fx", "fy", "cx", "cy"})
    require(j.contains(key) && j[key].is_number(),
            where + ": missing number '" + std::string(key) + "'");
  Camera cam;
  cam.fx = j["fx"].get<double>();
  cam.fy = j["fy"].get<double>();
  cam.cx = j["cx"].get<double>();
  cam.cy = j["cy"].get<double>();
  cam.width = width;
  cam.height = height;
  const auto rot = json_doubles(j.value("rotation", nlohmann::json()), where + ".rotation");
  require(rot.size() == 9, where + ": rotation must hold 9 values");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot[r * 3 + c];
  const auto t = json_doubles(j.value("translation", nlohmann::json()), where + ".translation");
  require(t.size() == 3, where + ": translation must hold 3 values");
  cam.translation = Vec3(t[0], t[1], t[2]);
  try {
    cam.validate();
  } catch (const Error& e) {
    throw Error(where + ": " + e.what());
  }
  return cam;
}

inline nlohmann::json camera_to_json(const Camera& cam) {
  nlohmann::json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[r * 3 + c] = cam.rotation(r, c);
  j["rotation"] = rot;
  j["translation"] = {cam.translation[0], cam.translation[1], cam.translation[2]};
  return j;
}

inline nlohmann::json cloud_to_json(const GaussianCloud& cloud) {
  nlohmann::json j;
  j["sh_degree"] = cloud.sh_degree;
  j["positions"] = cloud.positions;
  j["log_scales"] = cloud.log_scales;
  j["rotations"] = cloud.rotations;
  j["sh_coeffs"] = cloud.sh_coeffs;
  j["opacity_logits"] = cloud.opacity_logits;
  j["semantic_features"] = cloud.semantic_features;
  return j;
}

inline GaussianCloud cloud_from_json(const nlohmann::json& j,
                                     const std::string& where) {
  require_keys(j,
               {"sh_degree", "positions", "log_scales", "rotations", "sh_coeffs",
                "opacity_logits", "semantic_features", "cluster_indices"},
               where);
  GaussianCloud cloud;
  require(j.contains("sh_degree") && j["sh_degree"].is_number_integer(),
          where + ": missing integer 'sh_degree'");
  cloud.sh_degree = j["sh_degree"].get<int>();
  cloud.positions = json_doubles(j.value("positions", nlohmann::json()), where + ".positions");
  cloud.log_scales = json_doubles(j.value("log_scales", nlohmann::json()), where + ".log_scales");
  cloud.rotations = json_doubles(j.value("rotations", nlohmann::json()), where + ".rotations");
  cloud.sh_coeffs = json_doubles(j.value("sh_coeffs", nlohmann::json()), where + ".sh_coeffs");
  cloud.opacity_logits = json_doubles(j.value("opacity_logits", nlohmann::json()),
                                      where + ".opacity_logits");
  cloud.semantic_features = json_doubles(j.value("semantic_features", nlohmann::json()),
                                         where + ".semantic_features");
  try {
    cloud.validate();
  } catch (const Error& e) {
    throw Error(where + ": " + e.what());
  }
  return cloud;
}

inline std::string view_file_stem(std::size_t index) {
  std::ostringstream os;
  os << "view_" << std::setfill('0') << std::setw(3) << index;
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Manifest I/O

inline Scene load_scene(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  const fs::path manifest_path = root / "manifest.json";
  require(fs::exists(manifest_path),
          "load_scene: missing manifest " + manifest_path.string());
  std::ifstream in(manifest_path);
  require(in.good(), "load_scene: cannot open " + manifest_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_scene: " + manifest_path.string() + ": " + e.what());
  }
  detail::require_keys(doc,
                       {"width", "height", "depth_scale", "holdout_every",
                        "views", "regions", "points", "ground_truth"},
                       "load_scene: manifest");

  Scene scene;
  require(doc.contains("width") && doc["width"].is_number_integer() &&
              doc.contains("height") && doc["height"].is_number_integer(),
          "load_scene: manifest must give integer width/height");
  scene.width = doc["width"].get<int>();
  scene.height = doc["height"].get<int>();
  require(scene.width > 0 && scene.height > 0,
          "load_scene: non-positive resolution");
  scene.depth_scale = doc.value("depth_scale", 0.0);
  scene.holdout_every = doc.value("holdout_every", 8);
  require(scene.holdout_every >= 0, "load_scene: negative holdout_every");

  require(doc.contains("views") && doc["views"].is_array() &&
              !doc["views"].empty(),
          "load_scene: manifest must list at least one view");
  for (std::size_t vi = 0; vi < doc["views"].size(); ++vi) {
    const auto& jv = doc["views"][vi];
    const std::string where = "load_scene: view " + std::to_string(vi);
    detail::require_keys(
        jv, {"id", "image", "frame_kind", "camera", "depth", "depth_mask", "holdout"},
        where);
    SceneView view;
    require(jv.contains("id") && jv["id"].is_string(),
            where + ": missing string 'id'");
    view.image_id = jv["id"].get<std::string>();
    require(jv.contains("image") && jv["image"].is_string(),
            where + " (" + view.image_id + "): missing string 'image'");
    const std::string image_rel = jv["image"].get<std::string>();
    const fs::path image_path = root / image_rel;
    require(fs::exists(image_path),
            where + " (" + view.image_id + "): missing image file " + image_path.string());
    view.image = read_png(image_path.string());
    require(view.image.channels == 3,
            where + " (" + view.image_id + "): image must be RGB");
    require(view.image.width == scene.width && view.image.height == scene.height,
            where + " (" + view.image_id + "): resolution " +
                std::to_string(view.image.width) + "x" +
                std::to_string(view.image.height) + " does not match manifest");

    const std::string kind = jv.value("frame_kind", std::string("keyframe"));
    require(kind == "keyframe" || kind == "interpolated",
            where + " (" + view.image_id + "): invalid frame_kind '" + kind + "'");
    view.kind = kind == "keyframe" ? FrameKind::Keyframe : FrameKind::Interpolated;

    require(jv.contains("camera"),
            where + " (" + view.image_id + "): missing camera");
    view.camera = detail::camera_from_json(jv["camera"], scene.width, scene.height,
                                           where + " (" + view.image_id + ") camera");

    if (jv.contains("depth")) {
      require(scene.depth_scale > 0.0,
              where + ": depth present but manifest depth_scale missing");
      const fs::path depth_path = root / jv["depth"].get<std::string>();
      require(fs::exists(depth_path), where + ": missing depth file " + depth_path.string());
      view.prior_depth = read_png(depth_path.string());
      require(view.prior_depth.channels == 1 &&
                  view.prior_depth.width == scene.width &&
                  view.prior_depth.height == scene.height,
              where + ": depth map must be single-channel at scene resolution");
      for (double& z : view.prior_depth.data) z *= scene.depth_scale;
      if (jv.contains("depth_mask")) {
        const fs::path mask_path = root / jv["depth_mask"].get<std::string>();
        require(fs::exists(mask_path), where + ": missing mask file " + mask_path.string());
        const Image mask = read_png(mask_path.string());
        require(mask.channels == 1 && mask.width == scene.width &&
                    mask.height == scene.height,
                where + ": depth mask must be single-channel at scene resolution");
        view.depth_mask.resize(mask.size());
        for (std::size_t k = 0; k < mask.size(); ++k)
          view.depth_mask[k] = mask.data[k] > 0.5 ? 1 : 0;
      }
    } else {
      require(!jv.contains("depth_mask"),
              where + ": depth_mask given without depth");
    }

    if (jv.contains("holdout")) {
      require(jv["holdout"].is_boolean(), where + ": holdout must be boolean");
      view.holdout = jv["holdout"].get<bool>();
    } else {
      view.holdout =
          scene.holdout_every > 0 &&
          static_cast<int>(vi) % scene.holdout_every == 0;
    }
    scene.views.push_back(std::move(view));
  }

  if (doc.contains("regions")) {
    const fs::path regions_path = root / doc["regions"].get<std::string>();
    require(fs::exists(regions_path),
            "load_scene: missing regions file " + regions_path.string());
    scene.regions = load_raw_regions(regions_path.string());
    // Clamp boxes to the image; reject ones that vanish entirely.
    for (std::size_t ri = 0; ri < scene.regions.size(); ++ri) {
      RawRegion& r = scene.regions[ri];
      const double x0 = std::clamp(r.x_min, 0.0, double(scene.width));
      const double x1 = std::clamp(r.x_max, 0.0, double(scene.width));
      const double y0 = std::clamp(r.y_min, 0.0, double(scene.height));
      const double y1 = std::clamp(r.y_max, 0.0, double(scene.height));
      if (x0 != r.x_min || x1 != r.x_max || y0 != r.y_min || y1 != r.y_max)
        scene.warnings.push_back("region " + std::to_string(ri) + " (" +
                                 r.image_id + "): bbox clamped to image bounds");
      require(x0 < x1 && y0 < y1, "load_scene: region " + std::to_string(ri) +
                                      " lies entirely outside the image");
      r.x_min = x0;
      r.x_max = x1;
      r.y_min = y0;
      r.y_max = y1;
    }
  }

  if (doc.contains("points")) {
    const fs::path points_path = root / doc["points"].get<std::string>();
    require(fs::exists(points_path),
            "load_scene: missing points file " + points_path.string());
    std::ifstream pin(points_path);
    nlohmann::json pj;
    try {
      pin >> pj;
    } catch (const nlohmann::json::exception& e) {
      throw Error("load_scene: " + points_path.string() + ": " + e.what());
    }
    detail::require_keys(pj, {"positions", "rgb"}, "load_scene: points");
    scene.points.positions =
        detail::json_doubles(pj.value("positions", nlohmann::json()), "points.positions");
    scene.points.rgb = detail::json_doubles(pj.value("rgb", nlohmann::json()), "points.rgb");
    require(scene.points.positions.size() == scene.points.rgb.size() &&
                scene.points.positions.size() % 3 == 0,
            "load_scene: points arrays must be matching multiples of 3");
  }

  if (doc.contains("ground_truth")) {
    const auto& jg = doc["ground_truth"];
    detail::require_keys(jg, {"medium", "clean_images", "cloud", "cluster_indices"},
                         "load_scene: ground_truth");
    scene.ground_truth.present = true;
    require(jg.contains("medium"), "load_scene: ground_truth missing medium");
    const auto& jm = jg["medium"];
    detail::require_keys(jm, {"beta_d", "beta_b", "b_inf"},
                         "load_scene: ground_truth.medium");
    const auto bd = detail::json_doubles(jm.value("beta_d", nlohmann::json()), "medium.beta_d");
    const auto bb = detail::json_doubles(jm.value("beta_b", nlohmann::json()), "medium.beta_b");
    const auto bi = detail::json_doubles(jm.value("b_inf", nlohmann::json()), "medium.b_inf");
    require(bd.size() == 3 && bb.size() == 3 && bi.size() == 3,
            "load_scene: ground_truth.medium vectors must hold 3 values");
    scene.ground_truth.medium = MediumParams::from_coefficients(
        Vec3(bd[0], bd[1], bd[2]), Vec3(bb[0], bb[1], bb[2]), Vec3(bi[0], bi[1], bi[2]));
    if (jg.contains("clean_images")) {
      const auto& arr = jg["clean_images"];
      require(arr.is_array() && arr.size() == scene.views.size(),
              "load_scene: ground_truth.clean_images must match view count");
      for (const auto& rel : arr) {
        const fs::path p = root / rel.get<std::string>();
        require(fs::exists(p), "load_scene: missing clean image " + p.string());
        scene.ground_truth.clean_images.push_back(read_png(p.string()));
      }
    }
    if (jg.contains("cloud")) {
      const fs::path p = root / jg["cloud"].get<std::string>();
      require(fs::exists(p), "load_scene: missing ground-truth cloud " + p.string());
      std::ifstream cin_(p);
      nlohmann::json cj;
      try {
        cin_ >> cj;
      } catch (const nlohmann::json::exception& e) {
        throw Error("load_scene: " + p.string() + ": " + e.what());
      }
      scene.ground_truth.cloud = detail::cloud_from_json(cj, "ground_truth.cloud");
      if (cj.contains("cluster_indices"))
        for (const auto& v : cj["cluster_indices"])
          scene.ground_truth.cluster_indices.push_back(v.get<std::size_t>());
    }
  }
  return scene;
}

inline void save_scene(const Scene& scene, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root);

  nlohmann::json doc;
  doc["width"] = scene.width;
  doc["height"] = scene.height;
  if (scene.depth_scale > 0.0) doc["depth_scale"] = scene.depth_scale;
  doc["holdout_every"] = scene.holdout_every;
  doc["views"] = nlohmann::json::array();

  for (std::size_t vi = 0; vi < scene.views.size(); ++vi) {
    const SceneView& view = scene.views[vi];
    const std::string stem =
        view.image_id.empty() ? detail::view_file_stem(vi) : view.image_id;
    nlohmann::json jv;
    jv["id"] = stem;
    jv["image"] = "images/" + stem + ".png";
    jv["frame_kind"] = frame_kind_name(view.kind);
    jv["camera"] = detail::camera_to_json(view.camera);
    jv["holdout"] = view.holdout;
    write_png(view.image, (root / "images" / (stem + ".png")).string(), 16);
    if (view.prior_depth.height > 0) {
      require(scene.depth_scale > 0.0,
              "save_scene: depth priors present but depth_scale unset");
      Image scaled = view.prior_depth;
      for (double& z : scaled.data) z /= scene.depth_scale;
      jv["depth"] = "depth/" + stem + ".png";
      write_png(scaled, (root / "depth" / (stem + ".png")).string(), 16);
      if (!view.depth_mask.empty()) {
        Image mask(view.prior_depth.height, view.prior_depth.width, 1);
        for (std::size_t k = 0; k < mask.size(); ++k)
          mask.data[k] = view.depth_mask[k] ? 1.0 : 0.0;
        jv["depth_mask"] = "depth/" + stem + "_mask.png";
        write_png(mask, (root / "depth" / (stem + "_mask.png")).string(), 8);
      }
    }
    doc["views"].push_back(std::move(jv));
  }

  if (!scene.regions.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const RawRegion& r : scene.regions) {
      nlohmann::json jr;
      jr["image_id"] = r.image_id;
      jr["bbox"] = {r.x_min, r.y_min, r.x_max, r.y_max};
      std::vector<double> emb(r.embedding.data(),
                              r.embedding.data() + r.embedding.size());
      jr["embedding"] = emb;
      arr.push_back(std::move(jr));
    }
    doc["regions"] = "regions.json";
    std::ofstream out(root / "regions.json");
    out << arr.dump(2) << '\n';
  }

  if (scene.points.size() > 0) {
    nlohmann::json pj;
    pj["positions"] = scene.points.positions;
    pj["rgb"] = scene.points.rgb;
    doc["points"] = "points.json";
    std::ofstream out(root / "points.json");
    out << pj.dump() << '\n';
  }

  if (scene.ground_truth.present) {
    nlohmann::json jg;
    const MediumParams& m = scene.ground_truth.medium;
    jg["medium"]["beta_d"] = {m.beta_d()[0], m.beta_d()[1], m.beta_d()[2]};
    jg["medium"]["beta_b"] = {m.beta_b()[0], m.beta_b()[1], m.beta_b()[2]};
    jg["medium"]["b_inf"] = {m.b_inf()[0], m.b_inf()[1], m.b_inf()[2]};
    if (!scene.ground_truth.clean_images.empty()) {
      require(scene.ground_truth.clean_images.size() == scene.views.size(),
              "save_scene: clean image count must match views");
      jg["clean_images"] = nlohmann::json::array();
      for (std::size_t vi = 0; vi < scene.views.size(); ++vi) {
        const std::string stem = scene.views[vi].image_id.empty()
                                     ? detail::view_file_stem(vi)
                                     : scene.views[vi].image_id;
        const std::string rel = "gt/clean_" + stem + ".png";
        jg["clean_images"].push_back(rel);
        write_png(scene.ground_truth.clean_images[vi], (root / rel).string(), 16);
      }
    }
    if (scene.ground_truth.cloud.size() > 0) {
      nlohmann::json cj = detail::cloud_to_json(scene.ground_truth.cloud);
      cj["cluster_indices"] = scene.ground_truth.cluster_indices;
      jg["cloud"] = "gt/cloud.json";
      fs::create_directories(root / "gt");
      std::ofstream out(root / "gt" / "cloud.json");
      out << cj.dump() << '\n';
    }
    doc["ground_truth"] = std::move(jg);
  }

  std::ofstream out(root / "manifest.json");
  require(out.good(), "save_scene: cannot write manifest in " + dir);
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic scene with full ground truth

struct SynthOptions {
  int width = 64;
  int height = 64;
  double focal = 64.0;
  double ring_radius = 4.0;
  double cluster_fraction = 0.25;
  int holdout_every = 8;
};

// Random cloud on a camera ring, rendered to clean images, pushed through the
// medium to observed captures. One region per view frames the dense cluster;
// its pseudo-embedding is shared across views. Depth priors come from the
// rendered ground-truth depth; init points are the true positions plus noise.
inline Scene synth_scene(std::uint64_t seed, std::size_t n_gaussians,
                         std::size_t n_views, const MediumParams& medium,
                         const SynthOptions& opts = {}) {
  require(n_gaussians > 0 && n_gaussians <= 5000,
          "synth_scene: n_gaussians must be in (0, 5000]");
  require(n_views >= 2, "synth_scene: need at least 2 views");
  Rng rng(seed);

  Scene scene;
  scene.width = opts.width;
  scene.height = opts.height;
  scene.holdout_every = opts.holdout_every;
  scene.depth_scale = 2.5 * opts.ring_radius;

  // Ground-truth cloud: a uniform box plus one dense cluster.
  GaussianCloud& cloud = scene.ground_truth.cloud;
  cloud.sh_degree = 1;
  cloud.resize(n_gaussians);
  const std::size_t n_cluster =
      std::max<std::size_t>(1, static_cast<std::size_t>(
                                   std::floor(opts.cluster_fraction * n_gaussians)));
  const std::size_t n_free = n_gaussians - n_cluster;
  const Vec3 cluster_center(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                            rng.uniform(-0.5, 0.5));
  for (std::size_t i = 0; i < n_gaussians; ++i) {
    if (i < n_free) {
      cloud.set_position(i, Vec3(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2),
                                 rng.uniform(-1.2, 1.2)));
    } else {
      cloud.set_position(i, cluster_center + 0.22 * Vec3(rng.normal(), rng.normal(),
                                                         rng.normal()));
      scene.ground_truth.cluster_indices.push_back(i);
    }
    const double base = rng.uniform(std::log(0.05), std::log(0.14));
    cloud.set_log_scale(i, Vec3(base + rng.uniform(-0.2, 0.2),
                                base + rng.uniform(-0.2, 0.2),
                                base + rng.uniform(-0.2, 0.2)));
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    cloud.set_rotation(i, q.normalized());
    const int kc = cloud.sh_count();
    for (int c = 0; c < 3; ++c)
      cloud.sh_coeffs[(i * kc) * 3 + c] = rng.uniform(-1.2, 1.2);
    for (int k = 1; k < kc; ++k)
      for (int c = 0; c < 3; ++c)
        cloud.sh_coeffs[(i * kc + k) * 3 + c] = rng.uniform(-0.08, 0.08);
    cloud.opacity_logits[i] = logit(rng.uniform(0.55, 0.95));
  }
  cloud.validate();
  scene.ground_truth.present = true;
  scene.ground_truth.medium = medium;

  // Shared pseudo-embedding for the cluster object.
  RawRegion region_template;
  region_template.embedding = Eigen::VectorXd(512);
  for (int k = 0; k < 512; ++k) region_template.embedding[k] = rng.normal();

  RasterOptions raster;
  raster.threads = 1;
  for (std::size_t v = 0; v < n_views; ++v) {
    const double angle = 2.0 * M_PI * static_cast<double>(v) / n_views;
    const Vec3 eye(opts.ring_radius * std::sin(angle),
                   0.6 * std::sin(angle + 0.7),
                   -opts.ring_radius * std::cos(angle));
    SceneView view;
    view.image_id = detail::view_file_stem(v);
    view.camera = make_lookat_camera(eye, Vec3::Zero(), opts.focal, opts.focal,
                                     opts.width, opts.height);
    view.holdout = opts.holdout_every > 0 &&
                   static_cast<int>(v) % opts.holdout_every == 0;
    view.kind = (!view.holdout && v % 5 == 4) ? FrameKind::Interpolated
                                              : FrameKind::Keyframe;

    const RenderOutput render = rasterize(cloud, view.camera, raster);
    view.image = apply_medium(render.color, render.depth, medium);
    view.prior_depth = render.depth;
    view.depth_mask.resize(render.depth.size());
    for (std::size_t k = 0; k < render.depth.size(); ++k)
      view.depth_mask[k] = render.alpha.data[k] > 0.5 ? 1 : 0;
    scene.ground_truth.clean_images.push_back(render.color);

    // Frame the projected cluster members.
    double x0 = 1e30, y0 = 1e30, x1 = -1e30, y1 = -1e30;
    for (const std::size_t ci : scene.ground_truth.cluster_indices) {
      const Mat3 cov3d = build_covariance(cloud.log_scale(ci), cloud.rotation(ci));
      const ProjectedGaussian proj =
          project_gaussian(cloud.position(ci), cov3d, view.camera);
      if (proj.culled) continue;
      x0 = std::min(x0, proj.mean2d.x());
      x1 = std::max(x1, proj.mean2d.x());
      y0 = std::min(y0, proj.mean2d.y());
      y1 = std::max(y1, proj.mean2d.y());
    }
    if (x0 < x1 && y0 < y1) {
      RawRegion region = region_template;
      region.image_id = view.image_id;
      region.x_min = std::clamp(x0 - 2.0, 0.0, double(opts.width));
      region.x_max = std::clamp(x1 + 2.0, 0.0, double(opts.width));
      region.y_min = std::clamp(y0 - 2.0, 0.0, double(opts.height));
      region.y_max = std::clamp(y1 + 2.0, 0.0, double(opts.height));
      if (region.x_min < region.x_max && region.y_min < region.y_max)
        scene.regions.push_back(std::move(region));
    }
    scene.views.push_back(std::move(view));
  }

  // Initialization points: true positions jittered, colors from the SH DC.
  scene.points.positions.reserve(n_gaussians * 3);
  scene.points.rgb.reserve(n_gaussians * 3);
  for (std::size_t i = 0; i < n_gaussians; ++i) {
    for (int d = 0; d < 3; ++d)
      scene.points.positions.push_back(cloud.positions[i * 3 + d] +
                                       0.02 * rng.normal());
    for (int c = 0; c < 3; ++c) {
      const double dc = cloud.sh_coeffs[(i * cloud.sh_count()) * 3 + c];
      scene.points.rgb.push_back(std::clamp(0.5 + sh::kC0 * dc, 0.0, 1.0));
    }
  }
  return scene;
}

}  // namespace uwsplat
