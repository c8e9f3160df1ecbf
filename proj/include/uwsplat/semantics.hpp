#pragma once

#include <nlohmann/json.hpp>

#include <fstream>
#include <string>
#include <vector>

#include "uwsplat/camera.hpp"
#include "uwsplat/common.hpp"
#include "uwsplat/gaussian_cloud.hpp"
#include "uwsplat/projection.hpp"

namespace uwsplat {

// One externally detected region: image-space box plus the projected,
// L2-normalized reference embedding its member Gaussians are pulled toward.
struct SemanticRegion {
  std::string image_id;
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
  Eigen::VectorXd f_ref;  // kSemanticDim
  int raw_dim = 0;        // source embedding dimension
};

// Fixed random orthonormal map from raw embedding space (typically CLIP's
// 512) down to kSemanticDim. Fully determined by the seed, so reference
// targets stay constant across runs and checkpoints only store the seed.
class EmbeddingProjector {
 public:
  explicit EmbeddingProjector(std::uint64_t seed, int raw_dim = 512,
                              int out_dim = kSemanticDim)
      : seed_(seed), raw_dim_(raw_dim), out_dim_(out_dim) {
    require(raw_dim >= out_dim, "EmbeddingProjector: raw_dim < out_dim");
    Rng rng(seed);
    Eigen::MatrixXd a(raw_dim, out_dim);
    for (int i = 0; i < raw_dim; ++i)
      for (int j = 0; j < out_dim; ++j) a(i, j) = rng.normal();
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    const Eigen::MatrixXd q =
        qr.householderQ() * Eigen::MatrixXd::Identity(raw_dim, out_dim);
    matrix_ = q.transpose();  // out_dim x raw_dim, orthonormal rows
  }

  std::uint64_t seed() const { return seed_; }
  int raw_dim() const { return raw_dim_; }
  int out_dim() const { return out_dim_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }

  // Projects then L2-normalizes (zero vectors stay zero).
  Eigen::VectorXd project(const Eigen::VectorXd& raw) const {
    require(raw.size() == raw_dim_,
            "EmbeddingProjector: embedding has dimension " +
                std::to_string(raw.size()) + ", projector expects " +
                std::to_string(raw_dim_));
    Eigen::VectorXd out = matrix_ * raw;
    const double n = out.norm();
    if (n > 0.0) out /= n;
    return out;
  }

 private:
  std::uint64_t seed_;
  int raw_dim_;
  int out_dim_;
  Eigen::MatrixXd matrix_;
};

// Region record as it appears on disk: box plus the raw (unprojected)
// embedding.
struct RawRegion {
  std::string image_id;
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
  Eigen::VectorXd embedding;
};

// Parses the region embedding file: a JSON array of
// {"image_id": str, "bbox": [x_min, y_min, x_max, y_max], "embedding": [...]}.
inline std::vector<RawRegion> load_raw_regions(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_raw_regions: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_raw_regions: " + path + ": " + e.what());
  }
  require(doc.is_array(), "load_raw_regions: top-level value must be an array");

  std::vector<RawRegion> regions;
  regions.reserve(doc.size());
  for (std::size_t idx = 0; idx < doc.size(); ++idx) {
    const auto& rec = doc[idx];
    const std::string where = "load_raw_regions: record " + std::to_string(idx);
    require(rec.is_object(), where + ": not an object");
    for (const auto& [key, _] : rec.items())
      require(key == "image_id" || key == "bbox" || key == "embedding",
              where + ": unknown key '" + key + "'");
    require(rec.contains("image_id") && rec["image_id"].is_string(),
            where + ": missing string 'image_id'");
    require(rec.contains("bbox") && rec["bbox"].is_array() &&
                rec["bbox"].size() == 4,
            where + ": 'bbox' must be [x_min, y_min, x_max, y_max]");
    require(rec.contains("embedding") && rec["embedding"].is_array(),
            where + ": missing array 'embedding'");

    RawRegion region;
    region.image_id = rec["image_id"].get<std::string>();
    region.x_min = rec["bbox"][0].get<double>();
    region.y_min = rec["bbox"][1].get<double>();
    region.x_max = rec["bbox"][2].get<double>();
    region.y_max = rec["bbox"][3].get<double>();
    require(region.x_min < region.x_max && region.y_min < region.y_max,
            where + ": degenerate bbox");

    const auto& emb = rec["embedding"];
    region.embedding = Eigen::VectorXd(emb.size());
    for (std::size_t k = 0; k < emb.size(); ++k) {
      region.embedding[k] = emb[k].get<double>();
      require(std::isfinite(region.embedding[k]),
              where + ": non-finite embedding value");
    }
    regions.push_back(std::move(region));
  }
  return regions;
}

inline SemanticRegion project_region(const RawRegion& raw,
                                     const EmbeddingProjector& projector) {
  require(static_cast<int>(raw.embedding.size()) == projector.raw_dim(),
          "project_region: embedding dimension " +
              std::to_string(raw.embedding.size()) +
              " does not match projector raw_dim " +
              std::to_string(projector.raw_dim()));
  SemanticRegion region;
  region.image_id = raw.image_id;
  region.x_min = raw.x_min;
  region.y_min = raw.y_min;
  region.x_max = raw.x_max;
  region.y_max = raw.y_max;
  region.raw_dim = projector.raw_dim();
  region.f_ref = projector.project(raw.embedding);
  return region;
}

// Loads and projects in one step; the projected f_ref is cached in the
// returned regions so the raw embeddings are touched exactly once.
inline std::vector<SemanticRegion> ingest_regions(
    const std::string& path, const EmbeddingProjector& projector) {
  const std::vector<RawRegion> raw = load_raw_regions(path);
  std::vector<SemanticRegion> regions;
  regions.reserve(raw.size());
  for (std::size_t idx = 0; idx < raw.size(); ++idx) {
    try {
      regions.push_back(project_region(raw[idx], projector));
    } catch (const Error& e) {
      throw Error("ingest_regions: record " + std::to_string(idx) + ": " +
                  e.what());
    }
  }
  return regions;
}

// Indices of Gaussians whose projected center lands strictly inside the
// region box. Culled primitives never qualify.
inline std::vector<std::size_t> region_membership(const GaussianCloud& cloud,
                                                  const Camera& camera,
                                                  const SemanticRegion& region,
                                                  double near_plane = kNearPlane) {
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Mat3 cov3d = build_covariance(cloud.log_scale(i), cloud.rotation(i));
    const ProjectedGaussian proj =
        project_gaussian(cloud.position(i), cov3d, camera, near_plane);
    if (proj.culled) continue;
    if (proj.mean2d.x() > region.x_min && proj.mean2d.x() < region.x_max &&
        proj.mean2d.y() > region.y_min && proj.mean2d.y() < region.y_max)
      members.push_back(i);
  }
  return members;
}

struct RegionMembership {
  std::vector<std::size_t> indices;
  Eigen::VectorXd f_ref;
};

enum class SemanticReduction { Sum, Mean };

// L_s = sum over regions of sum over member Gaussians of |f_s - f_ref|^2
// (Mean divides each region term by its member count). When d_features is
// non-null, per-feature gradients accumulate into it (layout N x
// kSemanticDim, matching GaussianCloud::semantic_features).
inline double semantic_loss(const GaussianCloud& cloud,
                            const std::vector<RegionMembership>& memberships,
                            SemanticReduction reduction = SemanticReduction::Sum,
                            std::vector<double>* d_features = nullptr) {
  if (d_features)
    require(d_features->size() == cloud.semantic_features.size(),
            "semantic_loss: gradient buffer size mismatch");
  double total = 0.0;
  for (const RegionMembership& m : memberships) {
    if (m.indices.empty()) continue;
    require(m.f_ref.size() == kSemanticDim, "semantic_loss: bad f_ref dimension");
    const double scale = reduction == SemanticReduction::Mean
                             ? 1.0 / static_cast<double>(m.indices.size())
                             : 1.0;
    for (const std::size_t i : m.indices) {
      require(i < cloud.size(), "semantic_loss: member index out of range");
      const double* f = cloud.semantic_features.data() + i * kSemanticDim;
      double dist2 = 0.0;
      for (int k = 0; k < kSemanticDim; ++k) {
        const double d = f[k] - m.f_ref[k];
        dist2 += d * d;
        if (d_features) (*d_features)[i * kSemanticDim + k] += scale * 2.0 * d;
      }
      total += scale * dist2;
    }
  }
  return total;
}

}  // namespace uwsplat
