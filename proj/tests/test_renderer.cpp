#include "checks.hpp"
#include "dgm/render.hpp"

#include <gtest/gtest.h>

using namespace dgm;
using namespace dgm::test;

TEST(Renderer, MatchesOracleOnRandomScenes) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) EXPECT_LT(oracle_difference(seed), 1e-5) << "seed " << seed;
}

TEST(Renderer, EmptySetRendersNothing) {
  const MarbleSet empty;
  const Camera cam = test_camera(20, 10);
  const RenderOutput out = rasterize(project(empty, 1, cam, RenderConfig{}), cam, RenderConfig{});
  for (double v : out.color.data) EXPECT_EQ(v, 0.0);
  for (double v : out.alpha.data) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(out.records.entries.empty());
}

TEST(Renderer, SingleSplatPeaksAtPixelCenter) {
  MarbleSet s;
  Marble m;
  const Camera cam = test_camera(16, 16, 16.0);
  // Projects to image point (5.5, 7.5), the center of pixel (5, 7).
  m.mu = cam.to_world(cam.unproject(5.5, 7.5, 2.0));
  m.log_scale = std::log(0.2);
  m.color = Vec3(1.0, 0.5, 0.25);
  m.opacity_logit = logit(0.8);
  s.marbles.push_back(m);
  RenderConfig rc;
  const RenderOutput out = rasterize(project(s, 1, cam, rc), cam, rc);
  EXPECT_NEAR(out.alpha.at(5, 7), 0.8, 1e-12);
  EXPECT_NEAR(out.color.at(5, 7, 1), 0.4, 1e-12);
  EXPECT_NEAR(out.disparity.at(5, 7), 0.8 / 2.0, 1e-12);
  double best = 0.0;
  int bx = -1, by = -1;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (out.alpha.at(x, y) > best) best = out.alpha.at(x, y), bx = x, by = y;
  EXPECT_EQ(bx, 5);
  EXPECT_EQ(by, 7);
}

TEST(Renderer, FrontToBackOrderAndTransmittance) {
  MarbleSet s;
  const Camera cam = test_camera(8, 8, 8.0);
  for (double z : {3.0, 2.0}) {
    Marble m;
    m.mu = cam.to_world(cam.unproject(4.5, 4.5, z));
    m.log_scale = std::log(2.0);
    m.color = z < 2.5 ? Vec3(1, 0, 0) : Vec3(0, 0, 1);
    m.opacity_logit = logit(0.5);
    s.marbles.push_back(m);
  }
  const RenderConfig rc;
  const ProjectedSplats sp = project(s, 1, cam, rc);
  const RenderOutput out = rasterize(sp, cam, rc);
  const auto rec = out.records.at(4, 4);
  ASSERT_EQ(rec.size(), 2u);
  EXPECT_EQ(rec[0].splat, 1);  // nearer splat first
  EXPECT_NEAR(rec[1].transmittance, 1.0 - rec[0].alpha, 1e-15);
  EXPECT_GT(out.color.at(4, 4, 0), out.color.at(4, 4, 2));
}

TEST(Renderer, CompositingStopsBelowMinimumTransmittance) {
  MarbleSet s;
  const Camera cam = test_camera(8, 8, 8.0);
  for (int k = 0; k < 10; ++k) {
    Marble m;
    m.mu = cam.to_world(cam.unproject(4.5, 4.5, 2.0 + 0.1 * k));
    m.log_scale = std::log(3.0);
    m.opacity_logit = logit(0.6);
    s.marbles.push_back(m);
  }
  const RenderConfig rc;
  const RenderOutput out = rasterize(project(s, 1, cam, rc), cam, rc);
  const auto rec = out.records.at(4, 4);
  // 0.4^7 < 1/255 <= 0.4^6.
  EXPECT_EQ(rec.size(), 7u);
}

TEST(Renderer, CullsBehindNearPlaneAndOffscreen) {
  MarbleSet s;
  Marble behind, off, ok;
  behind.mu = Vec3(0, 0, -1);
  off.mu = Vec3(100, 0, 2);
  ok.mu = Vec3(0, 0, 2);
  for (Marble *m : {&behind, &off, &ok}) m->log_scale = std::log(0.05), s.marbles.push_back(*m);
  const Camera cam = test_camera(32, 32);
  const ProjectedSplats sp = project(s, 1, cam, RenderConfig{});
  EXPECT_FALSE(sp.splats[0].visible);
  EXPECT_FALSE(sp.splats[1].visible);
  EXPECT_TRUE(sp.splats[2].visible);
}

TEST(Renderer, CovarianceIncludesFloor) {
  MarbleSet s;
  Marble m;
  m.mu = Vec3(0, 0, 2);
  m.log_scale = std::log(0.01);
  s.marbles.push_back(m);
  const Camera cam = test_camera(32, 32, 100.0);
  const ProjectedSplats sp = project(s, 1, cam, RenderConfig{});
  const double j = 100.0 / 2.0 * 0.01;
  EXPECT_NEAR(sp.splats[0].cov2d.x(), j * j + 0.3, 1e-12);
  EXPECT_NEAR(sp.splats[0].cov2d.y(), 0.0, 1e-12);
  EXPECT_NEAR(sp.splats[0].cov2d.z(), j * j + 0.3, 1e-12);
}

TEST(Renderer, CompositePixelsMatchesTiledRecords) {
  Rng rng(21);
  const MarbleSet set = random_set(rng, 120, 1, 1, 2);
  const Camera cam = test_camera(96, 72);
  const RenderConfig rc;
  const ProjectedSplats sp = project(set, 1, cam, rc);
  const RenderOutput out = rasterize(sp, cam, rc);
  std::vector<Vec2> pix;
  for (int i = 0; i < 200; ++i) pix.push_back(Vec2(uniform(rng, 0, 96), uniform(rng, 0, 72)));
  const auto lists = composite_pixels(sp, cam, rc, pix);
  for (std::size_t q = 0; q < pix.size(); ++q) {
    const auto rec = out.records.at(static_cast<int>(pix[q].x()), static_cast<int>(pix[q].y()));
    ASSERT_EQ(rec.size(), lists[q].size());
    for (std::size_t k = 0; k < rec.size(); ++k) {
      EXPECT_EQ(rec[k].splat, lists[q][k].splat);
      EXPECT_EQ(rec[k].alpha, lists[q][k].alpha);
      EXPECT_EQ(rec[k].transmittance, lists[q][k].transmittance);
    }
  }
}

TEST(Renderer, DeterministicAcrossCalls) {
  Rng rng(22);
  const MarbleSet set = random_set(rng, 150, 1, 1, 2);
  const Camera cam = test_camera(80, 60);
  const RenderConfig rc;
  const RenderOutput a = rasterize(project(set, 1, cam, rc), cam, rc);
  const RenderOutput b = rasterize(project(set, 1, cam, rc), cam, rc);
  EXPECT_EQ(a.color, b.color);
  EXPECT_EQ(a.disparity, b.disparity);
}

TEST(Renderer, MedianDepthAndLabel) {
  MarbleSet s;
  const Camera cam = test_camera(8, 8, 8.0);
  for (double z : {2.0, 3.0}) {
    Marble m;
    m.mu = cam.to_world(cam.unproject(4.5, 4.5, z));
    m.log_scale = std::log(5.0);
    m.opacity_logit = logit(z < 2.5 ? 0.3 : 0.9);
    m.instance = z < 2.5 ? 1 : 2;
    s.marbles.push_back(m);
  }
  RenderConfig rc;
  rc.num_labels = 3;
  const ProjectedSplats sp = project(s, 1, cam, rc);
  const RenderOutput out = rasterize(sp, cam, rc);
  ImageF depth;
  ImageU16 labels;
  median_depth_and_label(out, sp, depth, labels);
  EXPECT_NEAR(depth.at(4, 4), 3.0, 1e-6);
  EXPECT_EQ(labels.at(4, 4), 2);
}

TEST(Renderer, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const FdReport r = renderer_fd(seed);
    EXPECT_LT(r.max_error, kFdTolerance) << r.worst;
    EXPECT_LE(20 * r.kinks, r.checked);
    EXPECT_GT(r.checked, 50);
  }
}

TEST(Renderer, AnisotropicGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const FdReport r = anisotropic_fd(seed);
    EXPECT_LT(r.max_error, kFdTolerance) << r.worst;
    EXPECT_LE(20 * r.kinks, r.checked);
  }
}

TEST(Renderer, AnisotropicIdentityMatchesIsotropic) {
  Rng rng(23);
  const MarbleSet set = random_set(rng, 80, 1, 1, 2);
  const Camera cam = test_camera(64, 48);
  const RenderConfig rc;
  const RenderOutput a = rasterize(project(set, 1, cam, rc), cam, rc);
  const RenderOutput b = rasterize(project_anisotropic(to_anisotropic(set), cam, rc), cam, rc);
  EXPECT_LT(max_abs_diff(a.color, b.color), 1e-9);
}

TEST(Renderer, BackwardRejectsOracleOutput) {
  Rng rng(24);
  const MarbleSet set = random_set(rng, 10, 1);
  const Camera cam = test_camera(32, 32);
  const RenderConfig rc;
  const ProjectedSplats sp = project(set, 1, cam, rc);
  const RenderOutput out = rasterize_oracle(sp, cam, rc);
  EXPECT_THROW(rasterize_backward(sp, out, ImageD(32, 32, 3), {}, {}, {}, rc), Error);
}
