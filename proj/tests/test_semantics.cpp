#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "uwsplat/camera.hpp"
#include "uwsplat/gaussian_cloud.hpp"
#include "uwsplat/semantics.hpp"

using namespace uwsplat;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    dir_ = fs::temp_directory_path() /
           ("uwsplat_sem_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter_++));
    fs::create_directories(dir_);
  }
  ~TempDir() { fs::remove_all(dir_); }
  std::string file(const std::string& name, const std::string& content) const {
    const fs::path p = dir_ / name;
    std::ofstream out(p);
    out << content;
    return p.string();
  }

 private:
  fs::path dir_;
  static inline int counter_ = 0;
};

std::string embedding_json(int dim, double fill = 0.25) {
  std::string s = "[";
  for (int i = 0; i < dim; ++i) {
    s += std::to_string(fill);
    if (i + 1 < dim) s += ",";
  }
  return s + "]";
}

}  // namespace

TEST(Projector, RowsAreOrthonormal) {
  const EmbeddingProjector proj(7);
  const Eigen::MatrixXd& m = proj.matrix();
  ASSERT_EQ(m.rows(), kSemanticDim);
  ASSERT_EQ(m.cols(), 512);
  const Eigen::MatrixXd gram = m * m.transpose();
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(kSemanticDim, kSemanticDim)).norm(),
            1e-12);
}

TEST(Projector, SeededAndDeterministic) {
  const EmbeddingProjector a(123), b(123), c(124);
  EXPECT_EQ((a.matrix() - b.matrix()).norm(), 0.0);
  EXPECT_GT((a.matrix() - c.matrix()).norm(), 1e-3);
}

TEST(Projector, OutputIsUnitNorm) {
  const EmbeddingProjector proj(5);
  Rng rng(51);
  Eigen::VectorXd raw(512);
  for (int i = 0; i < 512; ++i) raw[i] = rng.normal();
  const Eigen::VectorXd f = proj.project(raw);
  ASSERT_EQ(f.size(), kSemanticDim);
  EXPECT_NEAR(f.norm(), 1.0, 1e-12);
  // Scale invariance after normalization.
  EXPECT_LT((proj.project(3.7 * raw) - f).norm(), 1e-12);
}

TEST(Projector, RejectsDimensionMismatch) {
  const EmbeddingProjector proj(5);
  Eigen::VectorXd raw(100);
  raw.setOnes();
  EXPECT_THROW(proj.project(raw), Error);
}

TEST(Regions, LoadsWellFormedFile) {
  TempDir tmp;
  const std::string path = tmp.file(
      "regions.json",
      R"([{"image_id":"view_000","bbox":[2,3,20,17],"embedding":)" +
          embedding_json(512) + "}]");
  const auto regions = load_raw_regions(path);
  ASSERT_EQ(regions.size(), 1u);
  EXPECT_EQ(regions[0].image_id, "view_000");
  EXPECT_EQ(regions[0].x_min, 2.0);
  EXPECT_EQ(regions[0].y_max, 17.0);
  ASSERT_EQ(regions[0].embedding.size(), 512);

  const EmbeddingProjector proj(9);
  const auto projected = ingest_regions(path, proj);
  ASSERT_EQ(projected.size(), 1u);
  EXPECT_NEAR(projected[0].f_ref.norm(), 1.0, 1e-12);
}

TEST(Regions, ErrorsNameTheRecord) {
  TempDir tmp;
  const struct {
    const char* name;
    std::string body;
    const char* needle;
  } cases[] = {
      {"not_array.json", R"({"image_id":"a"})", "array"},
      {"missing_bbox.json",
       R"([{"image_id":"a","embedding":)" + embedding_json(4) + "}]", "bbox"},
      {"bad_bbox.json",
       R"([{"image_id":"a","bbox":[5,3,5,17],"embedding":)" + embedding_json(4) +
           "}]",
       "degenerate"},
      {"unknown_key.json",
       R"([{"image_id":"a","bbox":[1,2,3,4],"embedding":)" + embedding_json(4) +
           R"(,"extra":1}])",
       "extra"},
      {"second_bad.json",
       R"([{"image_id":"a","bbox":[1,2,3,4],"embedding":)" + embedding_json(4) +
           R"(},{"image_id":"b","bbox":[9,9,1,1],"embedding":)" +
           embedding_json(4) + "}]",
       "record 1"},
  };
  for (const auto& c : cases) {
    const std::string path = tmp.file(c.name, c.body);
    try {
      load_raw_regions(path);
      FAIL() << c.name << " should have been rejected";
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find(c.needle), std::string::npos)
          << c.name << " message: " << e.what();
    }
  }
  EXPECT_THROW(load_raw_regions("/nonexistent/regions.json"), Error);
}

TEST(Membership, StrictInteriorOfProjectedCenters) {
  // fx = fy = 10, 20x20 image, camera at origin looking +z. A point at
  // (x, y, 5) projects to (10 + 2x, 10 + 2y).
  Camera cam;
  cam.fx = cam.fy = 10.0;
  cam.cx = cam.cy = 10.0;
  cam.width = cam.height = 20;
  cam.rotation = Mat3::Identity();
  cam.translation = Vec3::Zero();

  GaussianCloud cloud;
  cloud.sh_degree = 0;
  cloud.resize(5);
  for (std::size_t i = 0; i < 5; ++i) {
    cloud.set_rotation(i, Vec4(1, 0, 0, 0));
    cloud.set_log_scale(i, Vec3::Constant(std::log(0.2)));
  }
  cloud.set_position(0, Vec3(0.0, 0.0, 5.0));    // projects to (10, 10): inside
  cloud.set_position(1, Vec3(2.0, 0.0, 5.0));    // (14, 10): outside bbox
  cloud.set_position(2, Vec3(0.0, 0.0, -5.0));   // behind the camera
  cloud.set_position(3, Vec3(-1.0, 0.0, 5.0));   // (8, 10): on the boundary
  cloud.set_position(4, Vec3(0.5, 0.5, 5.0));    // (11, 11): inside

  SemanticRegion region;
  region.image_id = "v";
  region.x_min = 8.0;
  region.y_min = 6.0;
  region.x_max = 13.0;
  region.y_max = 14.0;
  region.f_ref = Eigen::VectorXd::Zero(kSemanticDim);

  const auto members = region_membership(cloud, cam, region);
  ASSERT_EQ(members.size(), 2u);
  EXPECT_EQ(members[0], 0u);
  EXPECT_EQ(members[1], 4u);
}

TEST(SemanticLoss, MatchesHandComputation) {
  GaussianCloud cloud;
  cloud.sh_degree = 0;
  cloud.resize(3);
  for (std::size_t i = 0; i < 3; ++i) cloud.set_rotation(i, Vec4(1, 0, 0, 0));
  for (int k = 0; k < kSemanticDim; ++k) {
    cloud.semantic_features[0 * kSemanticDim + k] = 0.5;
    cloud.semantic_features[1 * kSemanticDim + k] = -0.25;
    cloud.semantic_features[2 * kSemanticDim + k] = 9.0;  // not a member
  }
  RegionMembership m;
  m.indices = {0, 1};
  m.f_ref = Eigen::VectorXd::Constant(kSemanticDim, 0.25);

  // ||0.5 - 0.25||^2 = 32 * 0.0625 = 2; ||-0.25 - 0.25||^2 = 32 * 0.25 = 8.
  const double sum = semantic_loss(cloud, {m}, SemanticReduction::Sum);
  EXPECT_NEAR(sum, 10.0, 1e-12);
  const double mean = semantic_loss(cloud, {m}, SemanticReduction::Mean);
  EXPECT_NEAR(mean, 5.0, 1e-12);
}

TEST(SemanticLoss, GradientMatchesFiniteDifferences) {
  Rng rng(52);
  GaussianCloud cloud;
  cloud.sh_degree = 0;
  cloud.resize(4);
  for (std::size_t i = 0; i < 4; ++i) cloud.set_rotation(i, Vec4(1, 0, 0, 0));
  for (double& v : cloud.semantic_features) v = rng.uniform(-1, 1);

  RegionMembership a, b;
  a.indices = {0, 2};
  b.indices = {2, 3};
  a.f_ref = Eigen::VectorXd::Zero(kSemanticDim);
  b.f_ref = Eigen::VectorXd::Zero(kSemanticDim);
  for (int k = 0; k < kSemanticDim; ++k) {
    a.f_ref[k] = rng.uniform(-1, 1);
    b.f_ref[k] = rng.uniform(-1, 1);
  }
  const std::vector<RegionMembership> regions = {a, b};

  for (const SemanticReduction red :
       {SemanticReduction::Sum, SemanticReduction::Mean}) {
    std::vector<double> grad(cloud.semantic_features.size(), 0.0);
    semantic_loss(cloud, regions, red, &grad);
    const double eps = 1e-6;
    for (const std::size_t i : {0u, 2u * kSemanticDim + 5u, 3u * kSemanticDim + 31u,
                                1u * kSemanticDim + 4u}) {
      GaussianCloud hi = cloud, lo = cloud;
      hi.semantic_features[i] += eps;
      lo.semantic_features[i] -= eps;
      const double fd = (semantic_loss(hi, regions, red) -
                         semantic_loss(lo, regions, red)) /
                        (2 * eps);
      EXPECT_NEAR(grad[i], fd, 1e-8) << "entry " << i;
    }
  }
}
