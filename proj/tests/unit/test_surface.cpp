#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "gs2pc/errors.hpp"
#include "gs2pc/kdtree.hpp"
#include "gs2pc/renderer.hpp"
#include "gs2pc/surface.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace gs2pc {
namespace {

using testing::GaussianSpec;
using testing::make_scene;

GaussianScene with_contributions(std::vector<double> contributions) {
  auto scene = make_scene(std::vector<GaussianSpec>(contributions.size()));
  scene.contribution.best_contribution = std::move(contributions);
  scene.rendered = true;
  return scene;
}

TEST(SelectSurface, Examples) {
  auto sel = select_surface(with_contributions({0.9, 0.1}));
  EXPECT_DOUBLE_EQ(sel.mean_contribution, 0.5);
  EXPECT_EQ(sel.surface_mask, (std::vector<bool>{true, false}));

  sel = select_surface(with_contributions({0.3, 0.3, 0.3}));
  EXPECT_EQ(sel.count(), 3u);

  sel = select_surface(with_contributions({0.0, 0.0, 0.9}));
  EXPECT_NEAR(sel.mean_contribution, 0.3, 1e-15);
  EXPECT_EQ(sel.surface_mask, (std::vector<bool>{false, false, true}));
}

TEST(SelectSurface, RequiresRendering) {
  EXPECT_THROW(select_surface(make_scene({GaussianSpec{}})), DomainError);
}

TEST(SelectSurface, MaximumAlwaysRetainedProperty) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 0.99);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> c(1 + trial % 17);
    for (auto& v : c) v = trial % 3 == 0 ? std::round(u(rng) * 4) / 4 : u(rng);
    if (*std::max_element(c.begin(), c.end()) == 0.0) c[0] = 0.5;
    const auto sel = select_surface(with_contributions(c));
    EXPECT_GE(sel.count(), 1u);
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_EQ(sel.surface_mask[i], c[i] >= sel.mean_contribution);
    }
  }
}

// One Gaussian with the given scale and rotation, seen best from `eye`.
Eigen::Vector3d normal_for(const Eigen::Vector3d& log_scale, const Eigen::Quaterniond& q,
                           const Eigen::Vector3d& eye) {
  GaussianSpec g;
  g.log_scale = log_scale;
  g.rotation = q;
  auto scene = make_scene({g});
  scene.rendered = true;
  scene.contribution.best_contribution = {0.5};
  scene.contribution.best_view = {0};
  const auto pose = testing::look_at(eye, Eigen::Vector3d::Zero(), 32, 32, 30);
  return surface_normals(scene, select_surface(scene), {pose})[0];
}

TEST(SurfaceNormals, ShortestAxisOrientedToCamera) {
  const auto id = Eigen::Quaterniond::Identity();
  EXPECT_TRUE(normal_for({0, 0, -1}, id, {0, 0, 5}).isApprox(Eigen::Vector3d(0, 0, 1), 1e-12));
  EXPECT_TRUE(normal_for({0, 0, -1}, id, {0, 0, -5}).isApprox(Eigen::Vector3d(0, 0, -1), 1e-12));
  // Isotropic: ties go to axis 0.
  EXPECT_TRUE(normal_for({0, 0, 0}, id, {3, 1, 1}).isApprox(Eigen::Vector3d(1, 0, 0), 1e-12));
  EXPECT_TRUE(normal_for({0, 0, 0}, id, {-3, 1, 1}).isApprox(Eigen::Vector3d(-1, 0, 0), 1e-12));
  const Eigen::Quaterniond ry(Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitY()));
  const auto n = normal_for({0, 0, -1}, ry, {4, 0.5, 0});
  EXPECT_TRUE(n.isApprox(Eigen::Vector3d(1, 0, 0), 1e-12)) << n.transpose();
}

TEST(SurfaceNormals, UnitAndFacingBestCameraProperty) {
  std::mt19937_64 rng(103);
  auto specs = testing::random_frustum_specs(rng, 60);
  auto scene = make_scene(specs);
  std::vector<CameraPose> poses = {
      testing::origin_camera(64, 64, 60),
      testing::look_at({2, 0, 0}, {0, 0, 5}, 64, 64, 60),
      testing::look_at({-1, -1, 1}, {0, 0, 5}, 64, 64, 60)};
  render_all(scene, poses, RenderConfig{});
  const auto sel = select_surface(scene);
  const auto normals = surface_normals(scene, sel, poses);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (!sel.surface_mask[i]) {
      EXPECT_EQ(normals[i], Eigen::Vector3d::Zero());
      continue;
    }
    EXPECT_NEAR(normals[i].norm(), 1.0, 1e-4);
    const auto view = scene.contribution.best_view[i];
    ASSERT_GE(view, 0);
    EXPECT_GE(normals[i].dot(poses[view].centre() - scene.position[i]), 0.0);
  }
}

PointCloud cloud_of(const std::vector<Eigen::Vector3f>& points) {
  PointCloud c;
  c.points = points;
  c.colours.assign(points.size(), {0, 0, 0});
  return c;
}

std::vector<Eigen::Vector3f> fibonacci_sphere(int n) {
  std::vector<Eigen::Vector3f> pts;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(1.0 - y * y);
    pts.emplace_back(static_cast<float>(r * std::cos(golden * i)), static_cast<float>(y),
                     static_cast<float>(r * std::sin(golden * i)));
  }
  return pts;
}

/// 100 points on the unit sphere: 10 equal-area latitude bands of 10 points,
/// mirror-symmetric about the equator.
std::vector<Eigen::Vector3f> banded_sphere() {
  std::vector<Eigen::Vector3f> pts;
  for (int band = 0; band < 10; ++band) {
    const double z = 1.0 - (2.0 * band + 1.0) / 10.0;
    const double r = std::sqrt(1.0 - z * z);
    for (int k = 0; k < 10; ++k) {
      const double phi = 2.0 * std::numbers::pi * k / 10.0;
      pts.emplace_back(static_cast<float>(r * std::cos(phi)), static_cast<float>(r * std::sin(phi)),
                       static_cast<float>(z));
    }
  }
  return pts;
}

TEST(StatisticalOutliers, SphereWithFarPoint) {
  auto pts = banded_sphere();
  pts.emplace_back(100.0f, 0.0f, 0.0f);
  const auto cloud = cloud_of(pts);
  const auto keep = statistical_inliers(cloud, 20, 2.0);
  EXPECT_EQ(keep, testing::sor_oracle(pts, 20, 2.0));
  EXPECT_FALSE(keep.back());
  EXPECT_EQ(std::count(keep.begin(), keep.end(), true), 100);

  const auto once = remove_statistical_outliers(cloud, 20, 2.0);
  ASSERT_EQ(once.size(), 100u);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once.points[i], pts[i]);
  EXPECT_EQ(remove_statistical_outliers(once, 20, 2.0).size(), once.size());
}

TEST(StatisticalOutliers, UniformGridKeepsEverything) {
  std::vector<Eigen::Vector3f> pts;
  for (int x = 0; x < 6; ++x) {
    for (int y = 0; y < 6; ++y) {
      for (int z = 0; z < 6; ++z) pts.emplace_back(x, y, z);
    }
  }
  const auto distances = mean_neighbour_distances(cloud_of(pts), 1);
  for (double d : distances) EXPECT_EQ(d, 1.0);
  EXPECT_EQ(remove_statistical_outliers(cloud_of(pts), 1, 2.0).size(), pts.size());
}

TEST(StatisticalOutliers, MatchesBruteForceOnRandomClouds) {
  std::mt19937_64 rng(107);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::uniform_real_distribution<float> u(-10.0f, 10.0f);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<Eigen::Vector3f> pts;
    for (int i = 0; i < 1000; ++i) {
      if (i % 50 == 0) {
        pts.emplace_back(u(rng), u(rng), u(rng));
      } else {
        pts.emplace_back(n(rng), n(rng), 0.1f * n(rng));
      }
    }
    const int k = 5 + 7 * trial;
    EXPECT_EQ(statistical_inliers(cloud_of(pts), k, 1.5, 2), testing::sor_oracle(pts, k, 1.5));
  }
}

TEST(StatisticalOutliers, CarriesNormalsAndKeepsOrder) {
  auto pts = fibonacci_sphere(64);
  pts.emplace_back(50.0f, 50.0f, 50.0f);
  auto cloud = cloud_of(pts);
  for (const auto& p : pts) cloud.normals.push_back(p.normalized());
  const auto out = remove_statistical_outliers(cloud, 8, 2.0);
  ASSERT_EQ(out.size(), 64u);
  ASSERT_TRUE(out.has_normals());
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out.normals[i], pts[i].normalized());
}

TEST(StatisticalOutliers, Errors) {
  const auto cloud = cloud_of(fibonacci_sphere(20));
  EXPECT_THROW(remove_statistical_outliers(cloud, 20, 2.0), DomainError);
  EXPECT_THROW(remove_statistical_outliers(cloud, 0, 2.0), DomainError);
  EXPECT_THROW(remove_statistical_outliers(cloud, 5, 0.0), DomainError);
}

TEST(KdTree, MatchesBruteForceNeighbours) {
  std::mt19937_64 rng(109);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<Eigen::Vector3f> pts(700);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  // Duplicates exercise equal distances.
  pts[10] = pts[11] = pts[12];
  const KdTree tree(pts, 4);
  for (std::size_t i = 0; i < pts.size(); i += 13) {
    std::vector<double> brute;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i) brute.push_back((pts[i].cast<double>() - pts[j].cast<double>()).squaredNorm());
    }
    std::sort(brute.begin(), brute.end());
    brute.resize(9);
    const auto got = tree.knn_squared_distances(i, 9);
    ASSERT_EQ(got.size(), 9u);
    for (std::size_t m = 0; m < 9; ++m) EXPECT_EQ(got[m], brute[m]);
  }
}

TEST(ExportSurfaceCloud, OccludedLayerIsAbsent) {
  // Opaque front layer at z = 4 hides a rear layer at z = 8.
  std::vector<GaussianSpec> specs;
  for (int y = -7; y <= 7; ++y) {
    for (int x = -7; x <= 7; ++x) {
      GaussianSpec front;
      front.position = {0.1 * x, 0.1 * y, 4.0};
      front.log_scale = {std::log(0.2), std::log(0.2), std::log(0.01)};
      front.opacity = 0.999;
      front.colour = {0.9, 0.8, 0.1};
      specs.push_back(front);
    }
  }
  const std::size_t front_count = specs.size();
  for (int k = 0; k < 5; ++k) {
    GaussianSpec rear;
    rear.position = {0.1 * (k - 2), 0.05 * k, 8.0};
    rear.log_scale = Eigen::Vector3d::Constant(std::log(0.1));
    rear.colour = {0.1, 0.2, 0.9};
    specs.push_back(rear);
  }
  auto scene = make_scene(specs);
  const std::vector<CameraPose> poses = {testing::origin_camera(48, 48, 40)};
  render_all(scene, poses, RenderConfig{});

  std::vector<bool> keep(scene.size(), false);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    keep[i] = scene.contribution.best_contribution[i] > 0.0;
  }
  // Rear Gaussians never contribute behind the saturated front layer.
  for (std::size_t i = front_count; i < scene.size(); ++i) EXPECT_FALSE(keep[i]);

  const auto visible = cull_unrendered(scene);
  SurfaceConfig config;
  config.points = 4000;
  config.sor_k = 10;
  const auto cloud = export_surface_cloud(visible, poses, config);
  ASSERT_GT(cloud.size(), 0u);
  for (const auto& p : cloud.points) EXPECT_LT(p.z(), 6.0f);
  for (const auto& n : cloud.normals) EXPECT_GT(n.dot(Eigen::Vector3f(0, 0, -1)), 0.99f);
}

TEST(ExportSurfaceCloud, NotRenderedIsDomainError) {
  EXPECT_THROW(export_surface_cloud(make_scene({GaussianSpec{}}), {}, SurfaceConfig{}),
               DomainError);
}

}  // namespace
}  // namespace gs2pc
